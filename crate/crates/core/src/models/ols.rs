//! Ordinary least squares with hat-value diagnostics.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{CvError, Result};
use crate::linalg::{self, Mat};
use crate::losses::Prediction;
use crate::models::{FittedModel, Model, ModelSpec};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OlsConfig {}

pub struct Ols {
    features: Option<Vec<usize>>,
}

pub(crate) fn factory(spec: &ModelSpec) -> Result<Box<dyn Model>> {
    let _: OlsConfig = crate::models::parse_hyperparameters(spec)?;
    Ok(Box::new(Ols { features: spec.features.clone() }))
}

/// Design matrix `[1 | X_selected]` over the given rows.
pub(crate) fn design(data: &Dataset, rows: &[usize], features: &[usize]) -> Mat {
    let mut x = Mat::zeros(rows.len(), features.len() + 1);
    for (r, &i) in rows.iter().enumerate() {
        x.set(r, 0, 1.0);
        let row = data.feature_row(i);
        for (c, &j) in features.iter().enumerate() {
            x.set(r, c + 1, row[j]);
        }
    }
    x
}

fn column_names(data: &Dataset, features: &[usize]) -> Vec<String> {
    let mut names = vec!["(intercept)".to_string()];
    names.extend(features.iter().map(|&j| data.feature_names[j].clone()));
    names
}

#[derive(Debug, Clone)]
pub struct OlsFit {
    pub features: Vec<usize>,
    /// Intercept first, then one coefficient per selected feature.
    pub coeffs: Vec<f64>,
    pub names: Vec<String>,
    /// Residual MLE sqrt(RSS/n).
    pub sigma: f64,
    pub hat: Vec<f64>,
    pub rss: f64,
}

impl OlsFit {
    pub fn predict_mean(&self, data: &Dataset, row: usize) -> f64 {
        let x = data.feature_row(row);
        let mut mu = self.coeffs[0];
        for (c, &j) in self.features.iter().enumerate() {
            mu += self.coeffs[c + 1] * x[j];
        }
        mu
    }
}

impl FittedModel for OlsFit {
    fn predict(&self, data: &Dataset, row: usize) -> Prediction {
        Prediction::regression(self.predict_mean(data, row), Some(self.sigma))
    }

    fn training_sigma(&self) -> Option<f64> {
        Some(self.sigma)
    }

    fn hat_values(&self) -> Option<&[f64]> {
        Some(&self.hat)
    }

    fn coefficients(&self) -> Vec<(String, f64)> {
        self.names.iter().cloned().zip(self.coeffs.iter().copied()).collect()
    }
}

/// Fit by column-pivoted QR. Errors name the collinear columns and
/// require n_train > p + 1 so the residual dispersion is estimable.
pub fn fit_ols(data: &Dataset, train: &[usize], features: Option<&[usize]>) -> Result<OlsFit> {
    let features: Vec<usize> = match features {
        Some(f) => f.to_vec(),
        None => (0..data.p()).collect(),
    };
    let k = features.len() + 1;
    if train.len() <= k {
        return Err(CvError::invalid(format!(
            "OLS needs n_train > p+1 = {k}, got n_train = {}",
            train.len()
        )));
    }
    let x = design(data, train, &features);
    let y: Vec<f64> = train.iter().map(|&i| data.y(i)).collect();
    let names = column_names(data, &features);
    let ls = linalg::least_squares(&x, &y).map_err(|collinear| CvError::RankDeficient {
        columns: collinear.iter().map(|&c| names[c].clone()).collect(),
    })?;
    let sigma = (ls.rss / train.len() as f64).sqrt();
    Ok(OlsFit { features, coeffs: ls.coeffs, names, sigma, hat: ls.hat, rss: ls.rss })
}

impl Model for Ols {
    fn family(&self) -> &'static str {
        "ols"
    }

    fn fit(&self, data: &Dataset, train: &[usize]) -> Result<Box<dyn FittedModel>> {
        Ok(Box::new(fit_ols(data, train, self.features.as_deref())?))
    }

    fn nominal_params(&self, data: &Dataset) -> usize {
        // coefficients + intercept + residual variance
        let p = self.features.as_ref().map_or(data.p(), |f| f.len());
        p + 2
    }
}
