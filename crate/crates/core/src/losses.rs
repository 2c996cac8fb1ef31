//! Loss functions, scores, and confusion-matrix metrics.
//!
//! Every kind carries an explicit optimisation orientation so that
//! downstream comparisons never have to guess a sign: squared error,
//! absolute error, Brier, and misclassification are lower-is-better;
//! log density, log loss (stored as log p of the observed class), and
//! the spherical score are higher-is-better; all confusion-matrix
//! metrics are higher-is-better.
//!
//! Probabilities are clamped to `[1e-15, 1-1e-15]` before taking logs,
//! which deviates from the pure formulas only at machine-extreme
//! predictions and keeps every stored loss finite.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{CvError, Result};
use crate::splitters::FoldPlan;

pub const PROB_CLAMP: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    LowerIsBetter,
    HigherIsBetter,
}

impl Orientation {
    /// Map a value into the shared "higher is better" utility view.
    pub fn utility(&self, value: f64) -> f64 {
        match self {
            Orientation::HigherIsBetter => value,
            Orientation::LowerIsBetter => -value,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    SquaredError,
    AbsoluteError,
    GaussianLogDensity,
    LogLoss,
    Brier,
    Spherical,
    Misclassification,
}

impl LossKind {
    pub fn orientation(&self) -> Orientation {
        match self {
            LossKind::GaussianLogDensity | LossKind::LogLoss | LossKind::Spherical => {
                Orientation::HigherIsBetter
            }
            _ => Orientation::LowerIsBetter,
        }
    }

    /// All built-in losses evaluate pointwise (Table-style losses).
    pub fn is_pointwise(&self) -> bool {
        true
    }

    /// True for kinds evaluated from a predicted class-1 probability.
    pub fn needs_probability(&self) -> bool {
        matches!(
            self,
            LossKind::LogLoss | LossKind::Brier | LossKind::Spherical | LossKind::Misclassification
        )
    }

    pub fn name(&self) -> &'static str {
        match self {
            LossKind::SquaredError => "squared_error",
            LossKind::AbsoluteError => "absolute_error",
            LossKind::GaussianLogDensity => "gaussian_log_density",
            LossKind::LogLoss => "log_loss",
            LossKind::Brier => "brier",
            LossKind::Spherical => "spherical",
            LossKind::Misclassification => "misclassification",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = CvError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "squared_error" | "mse" => Ok(LossKind::SquaredError),
            "absolute_error" | "mae" => Ok(LossKind::AbsoluteError),
            "gaussian_log_density" | "log_density" => Ok(LossKind::GaussianLogDensity),
            "log_loss" => Ok(LossKind::LogLoss),
            "brier" => Ok(LossKind::Brier),
            "spherical" => Ok(LossKind::Spherical),
            "misclassification" => Ok(LossKind::Misclassification),
            other => Err(CvError::invalid(format!("unknown loss kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Accuracy,
    Sensitivity,
    Specificity,
    F1,
    Kappa,
    Tss,
    Mcc,
}

impl MetricKind {
    pub fn orientation(&self) -> Orientation {
        Orientation::HigherIsBetter
    }

    pub fn name(&self) -> &'static str {
        match self {
            MetricKind::Accuracy => "accuracy",
            MetricKind::Sensitivity => "sensitivity",
            MetricKind::Specificity => "specificity",
            MetricKind::F1 => "f1",
            MetricKind::Kappa => "kappa",
            MetricKind::Tss => "tss",
            MetricKind::Mcc => "mcc",
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MetricKind {
    type Err = CvError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "accuracy" => Ok(MetricKind::Accuracy),
            "sensitivity" | "recall" => Ok(MetricKind::Sensitivity),
            "specificity" => Ok(MetricKind::Specificity),
            "f1" => Ok(MetricKind::F1),
            "kappa" => Ok(MetricKind::Kappa),
            "tss" => Ok(MetricKind::Tss),
            "mcc" => Ok(MetricKind::Mcc),
            other => Err(CvError::invalid(format!("unknown metric `{other}`"))),
        }
    }
}

/// Either a pointwise loss or a confusion-matrix metric; this is the
/// kind users name on the command line ("squared_error", "mcc", ...).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreKind {
    Loss(LossKind),
    Metric(MetricKind),
}

impl ScoreKind {
    pub fn orientation(&self) -> Orientation {
        match self {
            ScoreKind::Loss(k) => k.orientation(),
            ScoreKind::Metric(k) => k.orientation(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ScoreKind::Loss(k) => k.name(),
            ScoreKind::Metric(k) => k.name(),
        }
    }
}

impl fmt::Display for ScoreKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScoreKind {
    type Err = CvError;

    fn from_str(s: &str) -> Result<Self> {
        if let Ok(l) = LossKind::from_str(s) {
            return Ok(ScoreKind::Loss(l));
        }
        if let Ok(m) = MetricKind::from_str(s) {
            return Ok(ScoreKind::Metric(m));
        }
        Err(CvError::invalid(format!("unknown score kind `{s}`")))
    }
}

impl Serialize for ScoreKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for ScoreKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        ScoreKind::from_str(&s).map_err(serde::de::Error::custom)
    }
}

/// What a fitted model reports for one datum. Each loss kind consumes
/// the fields it needs: `mean` for squared/absolute error, `mean` plus
/// `sigma` for Gaussian log density, `prob` (class 1) for the
/// classification scores, `prob` plus `threshold` for misclassification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Prediction {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prob: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
}

impl Prediction {
    pub fn regression(mean: f64, sigma: Option<f64>) -> Self {
        Prediction { mean: Some(mean), sigma, prob: None, threshold: None }
    }

    pub fn classification(prob: f64, threshold: f64) -> Self {
        Prediction { mean: Some(prob), sigma: None, prob: Some(prob), threshold: Some(threshold) }
    }
}

/// Per-datum losses of one CV evaluation: `index[i]` is the original
/// datum index of `values[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointwiseLosses {
    pub kind: LossKind,
    pub index: Vec<usize>,
    pub values: Vec<f64>,
}

fn require(field: Option<f64>, name: &'static str, kind: LossKind) -> Result<f64> {
    field.ok_or(CvError::MissingPredictionField { field: name, kind: kind.name().to_string() })
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// Evaluate one loss at one observation.
pub fn pointwise_loss(kind: LossKind, y: f64, pred: &Prediction) -> Result<f64> {
    match kind {
        LossKind::SquaredError => {
            let m = require(pred.mean, "mean", kind)?;
            Ok((y - m) * (y - m))
        }
        LossKind::AbsoluteError => {
            let m = require(pred.mean, "mean", kind)?;
            Ok((y - m).abs())
        }
        LossKind::GaussianLogDensity => {
            let m = require(pred.mean, "mean", kind)?;
            let s = require(pred.sigma, "sigma", kind)?;
            if s <= 0.0 {
                return Err(CvError::invalid("gaussian_log_density needs sigma > 0"));
            }
            let var = s * s;
            Ok(-0.5 * (2.0 * std::f64::consts::PI * var).ln() - (y - m) * (y - m) / (2.0 * var))
        }
        LossKind::LogLoss => {
            let p1 = clamp_prob(require(pred.prob, "prob", kind)?);
            let pj = if y >= 0.5 { p1 } else { 1.0 - p1 };
            Ok(pj.ln())
        }
        LossKind::Brier => {
            let p1 = require(pred.prob, "prob", kind)?;
            let p0 = 1.0 - p1;
            let (i0, i1) = if y >= 0.5 { (0.0, 1.0) } else { (1.0, 0.0) };
            Ok((i0 - p0) * (i0 - p0) + (i1 - p1) * (i1 - p1))
        }
        LossKind::Spherical => {
            let p1 = require(pred.prob, "prob", kind)?;
            let p0 = 1.0 - p1;
            let pj = if y >= 0.5 { p1 } else { p0 };
            let norm = (p0 * p0 + p1 * p1).sqrt();
            if norm == 0.0 {
                return Err(CvError::invalid("spherical score undefined for zero vector"));
            }
            Ok(pj / norm)
        }
        LossKind::Misclassification => {
            let p1 = require(pred.prob, "prob", kind)?;
            let c = require(pred.threshold, "threshold", kind)?;
            let predicted = f64::from(p1 > c);
            Ok(f64::from(predicted != y))
        }
    }
}

/// Binary confusion matrix; class 1 is "positive" by convention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn add(&mut self, other: &ConfusionMatrix) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.tn += other.tn;
    }
}

/// Count prediction outcomes at threshold c; predicted positive iff p > c
/// (strict).
pub fn build_confusion(probs: &[f64], labels: &[u8], c: f64) -> Result<ConfusionMatrix> {
    if probs.is_empty() {
        return Err(CvError::invalid("empty input to build_confusion"));
    }
    if probs.len() != labels.len() {
        return Err(CvError::invalid(format!(
            "probabilities ({}) and labels ({}) differ in length",
            probs.len(),
            labels.len()
        )));
    }
    let mut m = ConfusionMatrix::default();
    for (&p, &y) in probs.iter().zip(labels.iter()) {
        if !(0.0..=1.0).contains(&p) {
            return Err(CvError::invalid(format!("probability {p} outside [0,1]")));
        }
        let predicted = p > c;
        match (predicted, y == 1) {
            (true, true) => m.tp += 1,
            (true, false) => m.fp += 1,
            (false, true) => m.fn_ += 1,
            (false, false) => m.tn += 1,
        }
    }
    Ok(m)
}

// Degenerate denominators (a required marginal of zero) evaluate to 0;
// the source formulas leave these cases undefined.
fn ratio(num: f64, denom: f64) -> f64 {
    if denom == 0.0 {
        0.0
    } else {
        num / denom
    }
}

pub fn confusion_metric(m: &ConfusionMatrix, kind: MetricKind) -> f64 {
    let (tp, fp, fnn, tn) = (m.tp as f64, m.fp as f64, m.fn_ as f64, m.tn as f64);
    match kind {
        MetricKind::Accuracy => ratio(tp + tn, tp + tn + fp + fnn),
        MetricKind::Sensitivity => ratio(tp, tp + fnn),
        MetricKind::Specificity => ratio(tn, tn + fp),
        MetricKind::F1 => ratio(2.0 * tp, 2.0 * tp + fp + fnn),
        MetricKind::Kappa => ratio(
            2.0 * (tp * tn - fp * fnn),
            (tp + fp) * (fp + tn) + (tp + fnn) * (fnn + tn),
        ),
        MetricKind::Tss => {
            confusion_metric(m, MetricKind::Sensitivity)
                + confusion_metric(m, MetricKind::Specificity)
                - 1.0
        }
        MetricKind::Mcc => {
            let denom2 = (tp + fp) * (tp + fnn) * (tn + fp) * (tn + fnn);
            if denom2 == 0.0 {
                0.0
            } else {
                (tp * tn - fp * fnn) / denom2.sqrt()
            }
        }
    }
}

/// Pool test outcomes into one confusion matrix per repetition and
/// return the metric value per repetition.
///
/// `probs_by_split[s][j]` is the predicted class-1 probability for
/// `plan.splits[s].test[j]`.
pub fn aggregate_metric(
    probs_by_split: &[Vec<f64>],
    labels: &[u8],
    plan: &FoldPlan,
    c: f64,
    kind: MetricKind,
) -> Result<Vec<f64>> {
    if probs_by_split.len() != plan.splits.len() {
        return Err(CvError::invalid(format!(
            "predictions for {} splits, plan has {}",
            probs_by_split.len(),
            plan.splits.len()
        )));
    }
    let reps = plan.n_repetitions();
    let mut out = Vec::with_capacity(reps);
    for r in 0..reps {
        let mut pooled = ConfusionMatrix::default();
        let mut any = false;
        for (s, split) in plan.repetition(r) {
            let probs = &probs_by_split[s];
            if probs.len() != split.test.len() {
                return Err(CvError::invalid(format!(
                    "split {s}: {} predictions for {} test points",
                    probs.len(),
                    split.test.len()
                )));
            }
            let ys: Vec<u8> = split.test.iter().map(|&i| labels[i]).collect();
            pooled.add(&build_confusion(probs, &ys, c)?);
            any = true;
        }
        if !any {
            return Err(CvError::invalid(format!("repetition {r} has no splits")));
        }
        out.push(confusion_metric(&pooled, kind));
    }
    Ok(out)
}
