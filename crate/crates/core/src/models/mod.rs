//! Built-in model families behind a uniform fit/predict contract.
//!
//! Each family implements [`Model`] and is registered by name in a
//! [`ModelRegistry`], so a [`ModelSpec`] parsed from JSON or CLI flags
//! selects the algorithm at runtime. Additional families (tree
//! ensembles, smoothers, ...) plug in through
//! [`ModelRegistry::register`] without touching the engine.
//!
//! A fitted model predicts per dataset row rather than per feature
//! vector: group-aware families (the growth curves) need the row's group
//! label, and prediction to a group unseen in training falls back to the
//! population mean, which is what leave-one-group-out scoring expects.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{CvError, Result};
use crate::losses::Prediction;

pub mod elastic_net;
pub mod growth;
pub mod logistic;
pub mod ols;

/// A candidate model: family name, the feature subset it sees, its
/// family-specific hyperparameters, and a user-facing complexity rank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: String,
    /// Optional explicit identifier for reports; defaults to a label
    /// derived from family and features.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    /// Feature column indices entering the design; `None` means all.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub hyperparameters: serde_json::Value,
    /// Ordering used by the parsimonious selection rules; defaults to
    /// the family's nominal parameter count.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub complexity_rank: Option<u32>,
}

impl ModelSpec {
    pub fn new(family: impl Into<String>) -> Self {
        ModelSpec {
            family: family.into(),
            id: None,
            features: None,
            hyperparameters: serde_json::Value::Null,
            complexity_rank: None,
        }
    }

    pub fn with_features(mut self, features: Vec<usize>) -> Self {
        self.features = Some(features);
        self
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = Some(id.into());
        self
    }

    pub fn with_hyperparameters(mut self, value: serde_json::Value) -> Self {
        self.hyperparameters = value;
        self
    }

    pub fn with_complexity_rank(mut self, rank: u32) -> Self {
        self.complexity_rank = Some(rank);
        self
    }

    /// Report identifier: the explicit id when set, otherwise
    /// `family[features...]`.
    pub fn label(&self) -> String {
        if let Some(id) = &self.id {
            return id.clone();
        }
        match &self.features {
            Some(f) => {
                let list: Vec<String> = f.iter().map(|i| i.to_string()).collect();
                format!("{}[{}]", self.family, list.join(","))
            }
            None => format!("{}[*]", self.family),
        }
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if let Some(f) = &self.features {
            let mut seen = vec![false; p];
            for &j in f {
                if j >= p {
                    return Err(CvError::invalid(format!(
                        "model `{}` selects feature {j}, dataset has p = {p}",
                        self.label()
                    )));
                }
                if seen[j] {
                    return Err(CvError::invalid(format!(
                        "model `{}` selects feature {j} twice",
                        self.label()
                    )));
                }
                seen[j] = true;
            }
        }
        Ok(())
    }

    /// Resolved feature indices (all columns when unspecified).
    pub fn feature_indices(&self, p: usize) -> Vec<usize> {
        self.features.clone().unwrap_or_else(|| (0..p).collect())
    }
}

/// The fit side of the family contract.
pub trait Model: Send + Sync {
    fn family(&self) -> &'static str;

    /// Fit to the rows of `data` selected by `train`.
    fn fit(&self, data: &Dataset, train: &[usize]) -> Result<Box<dyn FittedModel>>;

    /// Nominal free-parameter count on this dataset (used as the default
    /// complexity rank).
    fn nominal_params(&self, data: &Dataset) -> usize;
}

/// The predict side of the family contract. Implementations must be
/// deterministic: the same fit predicts the same values forever.
pub trait FittedModel: Send + Sync {
    fn predict(&self, data: &Dataset, row: usize) -> Prediction;

    /// Training-set dispersion estimate (residual MLE), when the family
    /// has one.
    fn training_sigma(&self) -> Option<f64> {
        None
    }

    /// Hat-matrix diagonal over the training rows (OLS only).
    fn hat_values(&self) -> Option<&[f64]> {
        None
    }

    /// Named parameter values for reports.
    fn coefficients(&self) -> Vec<(String, f64)>;
}

type Factory = fn(&ModelSpec) -> Result<Box<dyn Model>>;

/// Name-keyed factory table for model families.
#[derive(Clone)]
pub struct ModelRegistry {
    factories: BTreeMap<String, Factory>,
}

impl Default for ModelRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

impl ModelRegistry {
    pub fn empty() -> Self {
        ModelRegistry { factories: BTreeMap::new() }
    }

    /// Registry with the four built-in families: `ols`, `logistic`,
    /// `elastic_net`, `growth`.
    pub fn builtin() -> Self {
        let mut r = ModelRegistry::empty();
        r.register("ols", ols::factory);
        r.register("logistic", logistic::factory);
        r.register("elastic_net", elastic_net::factory);
        r.register("growth", growth::factory);
        r
    }

    pub fn register(&mut self, name: &str, factory: Factory) {
        self.factories.insert(name.to_string(), factory);
    }

    pub fn names(&self) -> Vec<&str> {
        self.factories.keys().map(|s| s.as_str()).collect()
    }

    pub fn build(&self, spec: &ModelSpec) -> Result<Box<dyn Model>> {
        match self.factories.get(&spec.family) {
            Some(factory) => factory(spec),
            None => Err(CvError::UnknownFamily(spec.family.clone())),
        }
    }
}

/// Build a model from the builtin registry.
pub fn build_model(spec: &ModelSpec) -> Result<Box<dyn Model>> {
    ModelRegistry::builtin().build(spec)
}


/// Hyperparameter helper: deserialize the spec's record into a typed
/// config, treating null as "all defaults".
pub(crate) fn parse_hyperparameters<T: serde::de::DeserializeOwned + Default>(
    spec: &ModelSpec,
) -> Result<T> {
    if spec.hyperparameters.is_null() {
        return Ok(T::default());
    }
    serde_json::from_value(spec.hyperparameters.clone()).map_err(|e| {
        CvError::invalid(format!("bad hyperparameters for `{}`: {e}", spec.label()))
    })
}
