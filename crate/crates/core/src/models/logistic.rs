//! Logistic regression fit by iteratively reweighted least squares.
//!
//! Each IRLS step solves the weighted least-squares system for the
//! working response via QR; step halving keeps the log-likelihood
//! non-decreasing. Complete separation is reported as an error once the
//! fitted probabilities pin every training point to its label (or the
//! coefficients blow past any plausible scale).

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Task};
use crate::error::{CvError, Result};
use crate::linalg::{self, Mat};
use crate::losses::Prediction;
use crate::models::{ols, FittedModel, Model, ModelSpec};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LogisticConfig {
    pub max_iter: usize,
    pub tol: f64,
    /// Classification threshold carried on predictions.
    pub threshold: f64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        LogisticConfig { max_iter: 100, tol: 1e-8, threshold: 0.5 }
    }
}

pub struct Logistic {
    features: Option<Vec<usize>>,
    cfg: LogisticConfig,
}

pub(crate) fn factory(spec: &ModelSpec) -> Result<Box<dyn Model>> {
    let cfg: LogisticConfig = crate::models::parse_hyperparameters(spec)?;
    Ok(Box::new(Logistic { features: spec.features.clone(), cfg }))
}

#[derive(Debug, Clone)]
pub struct LogisticFit {
    pub features: Vec<usize>,
    /// Intercept first.
    pub coeffs: Vec<f64>,
    pub names: Vec<String>,
    /// Wald standard errors from the observed information at convergence.
    pub std_errors: Vec<f64>,
    pub iterations: usize,
    pub threshold: f64,
}

impl LogisticFit {
    pub fn linear_predictor(&self, data: &Dataset, row: usize) -> f64 {
        let x = data.feature_row(row);
        let mut eta = self.coeffs[0];
        for (c, &j) in self.features.iter().enumerate() {
            eta += self.coeffs[c + 1] * x[j];
        }
        eta
    }

    pub fn predict_prob(&self, data: &Dataset, row: usize) -> f64 {
        sigmoid(self.linear_predictor(data, row))
    }
}

impl FittedModel for LogisticFit {
    fn predict(&self, data: &Dataset, row: usize) -> Prediction {
        Prediction::classification(self.predict_prob(data, row), self.threshold)
    }

    fn coefficients(&self) -> Vec<(String, f64)> {
        self.names.iter().cloned().zip(self.coeffs.iter().copied()).collect()
    }
}

#[inline]
fn sigmoid(eta: f64) -> f64 {
    1.0 / (1.0 + (-eta).exp())
}

fn log_likelihood(x: &Mat, y: &[f64], beta: &[f64]) -> f64 {
    let mut ll = 0.0;
    for i in 0..x.nrows() {
        let eta = linalg::dot(x.row(i), beta);
        // log p(y|eta) = y*eta - log(1 + e^eta), computed stably.
        ll += y[i] * eta - softplus(eta);
    }
    ll
}

#[inline]
fn softplus(eta: f64) -> f64 {
    if eta > 30.0 {
        eta
    } else {
        (1.0 + eta.exp()).ln()
    }
}

pub fn fit_logistic(
    data: &Dataset,
    train: &[usize],
    features: Option<&[usize]>,
    cfg: &LogisticConfig,
) -> Result<LogisticFit> {
    if data.task() != Task::Classification {
        return Err(CvError::invalid("logistic regression needs a classification response"));
    }
    let features: Vec<usize> = match features {
        Some(f) => f.to_vec(),
        None => (0..data.p()).collect(),
    };
    let k = features.len() + 1;
    if train.len() <= k {
        return Err(CvError::invalid(format!(
            "logistic fit needs n_train > {k}, got {}",
            train.len()
        )));
    }
    let x = ols::design(data, train, &features);
    let y: Vec<f64> = train.iter().map(|&i| data.y(i)).collect();
    let names = {
        let mut v = vec!["(intercept)".to_string()];
        v.extend(features.iter().map(|&j| data.feature_names[j].clone()));
        v
    };
    let m = train.len();

    let mut beta = vec![0.0; k];
    let mut ll = log_likelihood(&x, &y, &beta);
    let mut iterations = 0;

    for iter in 1..=cfg.max_iter {
        iterations = iter;
        // Weighted least squares on the working response.
        let mut wx = Mat::zeros(m, k);
        let mut wz = vec![0.0; m];
        for i in 0..m {
            let eta = linalg::dot(x.row(i), &beta);
            let p = sigmoid(eta);
            let w = (p * (1.0 - p)).max(1e-10);
            let z = eta + (y[i] - p) / w;
            let sw = w.sqrt();
            for c in 0..k {
                wx.set(i, c, sw * x.get(i, c));
            }
            wz[i] = sw * z;
        }
        let proposal = linalg::least_squares(&wx, &wz)
            .map_err(|cols| CvError::RankDeficient {
                columns: cols.iter().map(|&c| names[c].clone()).collect(),
            })?
            .coeffs;

        // Step halving keeps the log-likelihood non-decreasing.
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let candidate: Vec<f64> = beta
                .iter()
                .zip(proposal.iter())
                .map(|(b, p)| b + step * (p - b))
                .collect();
            let cand_ll = log_likelihood(&x, &y, &candidate);
            if cand_ll >= ll - 1e-12 {
                let delta = candidate
                    .iter()
                    .zip(beta.iter())
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0_f64, f64::max);
                beta = candidate;
                ll = cand_ll;
                accepted = true;
                if delta < cfg.tol {
                    return finish(&x, &y, beta, features, names, iter, cfg.threshold);
                }
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // No uphill step exists within the line search: converged.
            return finish(&x, &y, beta, features, names, iter, cfg.threshold);
        }

        if separated(&x, &y, &beta) {
            return Err(CvError::Separation { iterations: iter });
        }
    }
    if separated(&x, &y, &beta) {
        return Err(CvError::Separation { iterations });
    }
    Err(CvError::NonConvergence { what: "logistic IRLS".into(), iterations })
}

/// Fitted probabilities within 1e-5 of every label (or wildly large
/// coefficients) mean the data are completely separated.
fn separated(x: &Mat, y: &[f64], beta: &[f64]) -> bool {
    if beta.iter().any(|b| b.abs() > 1e4) {
        return true;
    }
    let mut extreme = true;
    for i in 0..x.nrows() {
        let p = sigmoid(linalg::dot(x.row(i), beta));
        if (y[i] - p).abs() > 1e-5 {
            extreme = false;
            break;
        }
    }
    extreme
}

fn finish(
    x: &Mat,
    _y: &[f64],
    beta: Vec<f64>,
    features: Vec<usize>,
    names: Vec<String>,
    iterations: usize,
    threshold: f64,
) -> Result<LogisticFit> {
    // Observed information XᵀWX at the fit; invert via Cholesky solves.
    let k = beta.len();
    let m = x.nrows();
    let mut wx = Mat::zeros(m, k);
    for i in 0..m {
        let p = sigmoid(linalg::dot(x.row(i), &beta));
        let sw = (p * (1.0 - p)).max(1e-10).sqrt();
        for c in 0..k {
            wx.set(i, c, sw * x.get(i, c));
        }
    }
    let info = wx.ata();
    let mut std_errors = vec![f64::NAN; k];
    for c in 0..k {
        let mut e = vec![0.0; k];
        e[c] = 1.0;
        if let Some(col) = linalg::solve_spd(&info, &e) {
            if col[c] > 0.0 {
                std_errors[c] = col[c].sqrt();
            }
        }
    }
    Ok(LogisticFit { features, coeffs: beta, names, std_errors, iterations, threshold })
}

impl Model for Logistic {
    fn family(&self) -> &'static str {
        "logistic"
    }

    fn fit(&self, data: &Dataset, train: &[usize]) -> Result<Box<dyn FittedModel>> {
        Ok(Box::new(fit_logistic(data, train, self.features.as_deref(), &self.cfg)?))
    }

    fn nominal_params(&self, data: &Dataset) -> usize {
        let p = self.features.as_ref().map_or(data.p(), |f| f.len());
        p + 1
    }
}
