//! Nonlinear growth curves fit by Levenberg–Marquardt.
//!
//! Three classical length-at-age functions share the parameters
//! (L0, K, t0): asymptote, growth rate, and initial age. A two-level sex
//! factor can shift any subset of the three as a ±contrast, and per-group
//! intercepts on L0 are fixed parameters constrained to sum to zero, so
//! L0 stays the population mean and prediction to a group unseen in
//! training uses offset zero — the marginal convention leave-one-group-out
//! scoring relies on.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::data::{Dataset, Task};
use crate::error::{CvError, Result};
use crate::linalg::{self, Mat};
use crate::losses::Prediction;
use crate::models::{FittedModel, Model, ModelSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GrowthFunction {
    Gompertz,
    Logistic,
    VonBertalanffy,
}

impl GrowthFunction {
    /// Length at age `a`.
    pub fn value(&self, l0: f64, k: f64, t0: f64, a: f64) -> f64 {
        let u = k * (a - t0);
        match self {
            GrowthFunction::Gompertz => l0 * (-(-u).exp()).exp(),
            GrowthFunction::Logistic => l0 / (1.0 + (-u).exp()),
            GrowthFunction::VonBertalanffy => l0 * (1.0 - (-u).exp()),
        }
    }

    /// Analytic partials (dL/dL0, dL/dK, dL/dt0).
    pub fn partials(&self, l0: f64, k: f64, t0: f64, a: f64) -> [f64; 3] {
        let u = k * (a - t0);
        match self {
            GrowthFunction::Gompertz => {
                let inner = (-u).exp();
                let shape = (-inner).exp();
                let d_l0 = shape;
                let d_u = l0 * shape * inner;
                [d_l0, d_u * (a - t0), -d_u * k]
            }
            GrowthFunction::Logistic => {
                let s = 1.0 / (1.0 + (-u).exp());
                let d_l0 = s;
                let d_u = l0 * s * (1.0 - s);
                [d_l0, d_u * (a - t0), -d_u * k]
            }
            GrowthFunction::VonBertalanffy => {
                let e = (-u).exp();
                let d_l0 = 1.0 - e;
                let d_u = l0 * e;
                [d_l0, d_u * (a - t0), -d_u * k]
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            GrowthFunction::Gompertz => "gompertz",
            GrowthFunction::Logistic => "logistic",
            GrowthFunction::VonBertalanffy => "von_bertalanffy",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SexTarget {
    L,
    K,
    #[serde(rename = "t")]
    T,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GrowthConfig {
    pub function: GrowthFunction,
    /// Feature column holding age.
    pub age_feature: usize,
    /// Feature column holding the 0/1 sex code (used only when
    /// `sex_effect_on` is nonempty).
    pub sex_feature: usize,
    /// Which of (L0, K, t0) receive a ± sex offset.
    pub sex_effect_on: Vec<SexTarget>,
    /// Per-group fixed intercepts on L0, constrained to sum to zero.
    pub group_intercepts_on_l0: bool,
    pub max_iter: usize,
    pub tol: f64,
    /// Optional (L0, K, t0) starting values.
    pub init: Option<[f64; 3]>,
}

impl Default for GrowthConfig {
    fn default() -> Self {
        GrowthConfig {
            function: GrowthFunction::VonBertalanffy,
            age_feature: 0,
            sex_feature: 1,
            sex_effect_on: Vec::new(),
            group_intercepts_on_l0: false,
            max_iter: 200,
            tol: 1e-10,
            init: None,
        }
    }
}

pub struct Growth {
    cfg: GrowthConfig,
}

pub(crate) fn factory(spec: &ModelSpec) -> Result<Box<dyn Model>> {
    let cfg: GrowthConfig = crate::models::parse_hyperparameters(spec)?;
    Ok(Box::new(Growth { cfg }))
}

#[derive(Debug, Clone)]
pub struct GrowthFit {
    pub function: GrowthFunction,
    pub l0: f64,
    pub k: f64,
    pub t0: f64,
    /// ± contrast offsets in SexTarget order of `sex_effect_on`.
    pub sex_offsets: Vec<(SexTarget, f64)>,
    /// Per-group L0 offsets (sum-to-zero over training groups).
    pub group_offsets: BTreeMap<String, f64>,
    pub sigma: f64,
    pub rss: f64,
    pub iterations: usize,
    age_feature: usize,
    sex_feature: usize,
}

impl GrowthFit {
    pub fn predict_mean(&self, data: &Dataset, row: usize) -> f64 {
        let age = data.feature_row(row)[self.age_feature];
        let contrast = if self.sex_offsets.is_empty() {
            0.0
        } else {
            2.0 * data.feature_row(row)[self.sex_feature] - 1.0
        };
        let mut l0 = self.l0;
        let mut k = self.k;
        let mut t0 = self.t0;
        for (target, off) in &self.sex_offsets {
            match target {
                SexTarget::L => l0 += contrast * off,
                SexTarget::K => k += contrast * off,
                SexTarget::T => t0 += contrast * off,
            }
        }
        if let Some(groups) = &data.groups {
            // Unknown group -> offset 0 (population mean).
            if let Some(off) = self.group_offsets.get(&groups[row]) {
                l0 += off;
            }
        }
        self.function.value(l0, k, t0, age)
    }
}

impl FittedModel for GrowthFit {
    fn predict(&self, data: &Dataset, row: usize) -> Prediction {
        Prediction::regression(self.predict_mean(data, row), Some(self.sigma))
    }

    fn training_sigma(&self) -> Option<f64> {
        Some(self.sigma)
    }

    fn coefficients(&self) -> Vec<(String, f64)> {
        let mut out = vec![
            ("L0".to_string(), self.l0),
            ("K".to_string(), self.k),
            ("t0".to_string(), self.t0),
        ];
        for (target, off) in &self.sex_offsets {
            let name = match target {
                SexTarget::L => "sex_L0",
                SexTarget::K => "sex_K",
                SexTarget::T => "sex_t0",
            };
            out.push((name.to_string(), *off));
        }
        for (g, off) in &self.group_offsets {
            out.push((format!("L0[{g}]"), *off));
        }
        out
    }
}

struct Problem<'a> {
    function: GrowthFunction,
    ages: Vec<f64>,
    contrasts: Vec<f64>,
    y: Vec<f64>,
    /// Training-group index per row (groups.len()-1 free parameters).
    group_of: Vec<usize>,
    group_names: Vec<String>,
    sex_targets: &'a [SexTarget],
    use_groups: bool,
}

impl Problem<'_> {
    fn n_params(&self) -> usize {
        3 + self.sex_targets.len()
            + if self.use_groups { self.group_names.len() - 1 } else { 0 }
    }

    fn row_params(&self, theta: &[f64], i: usize) -> (f64, f64, f64) {
        let mut l0 = theta[0];
        let mut k = theta[1];
        let mut t0 = theta[2];
        let s = self.contrasts[i];
        for (t, target) in self.sex_targets.iter().enumerate() {
            match target {
                SexTarget::L => l0 += s * theta[3 + t],
                SexTarget::K => k += s * theta[3 + t],
                SexTarget::T => t0 += s * theta[3 + t],
            }
        }
        if self.use_groups {
            let base = 3 + self.sex_targets.len();
            let g_last = self.group_names.len() - 1;
            let g = self.group_of[i];
            if g < g_last {
                l0 += theta[base + g];
            } else {
                // Sum-to-zero: last offset is minus the rest.
                for t in 0..g_last {
                    l0 -= theta[base + t];
                }
            }
        }
        (l0, k, t0)
    }

    fn residuals(&self, theta: &[f64]) -> Vec<f64> {
        (0..self.y.len())
            .map(|i| {
                let (l0, k, t0) = self.row_params(theta, i);
                self.y[i] - self.function.value(l0, k, t0, self.ages[i])
            })
            .collect()
    }

    fn rss(&self, theta: &[f64]) -> f64 {
        self.residuals(theta).iter().map(|r| r * r).sum()
    }

    /// Jacobian of the model mean wrt theta.
    fn jacobian(&self, theta: &[f64]) -> Mat {
        let n = self.y.len();
        let np = self.n_params();
        let mut j = Mat::zeros(n, np);
        let base = 3 + self.sex_targets.len();
        let g_last = if self.use_groups { self.group_names.len() - 1 } else { 0 };
        for i in 0..n {
            let (l0, k, t0) = self.row_params(theta, i);
            let [dl0, dk, dt0] = self.function.partials(l0, k, t0, self.ages[i]);
            j.set(i, 0, dl0);
            j.set(i, 1, dk);
            j.set(i, 2, dt0);
            let s = self.contrasts[i];
            for (t, target) in self.sex_targets.iter().enumerate() {
                let d = match target {
                    SexTarget::L => s * dl0,
                    SexTarget::K => s * dk,
                    SexTarget::T => s * dt0,
                };
                j.set(i, 3 + t, d);
            }
            if self.use_groups {
                let g = self.group_of[i];
                for t in 0..g_last {
                    let ind = f64::from(g == t) - f64::from(g == g_last);
                    j.set(i, base + t, ind * dl0);
                }
            }
        }
        j
    }
}

pub fn fit_growth(data: &Dataset, train: &[usize], cfg: &GrowthConfig) -> Result<GrowthFit> {
    if data.task() != Task::Regression {
        return Err(CvError::invalid("growth models need a regression response"));
    }
    if cfg.age_feature >= data.p() {
        return Err(CvError::invalid("age_feature out of range"));
    }
    if !cfg.sex_effect_on.is_empty() && cfg.sex_feature >= data.p() {
        return Err(CvError::invalid("sex_feature out of range"));
    }
    if train.len() < 4 {
        return Err(CvError::invalid("growth fit needs at least 4 observations"));
    }

    let ages: Vec<f64> = train.iter().map(|&i| data.feature_row(i)[cfg.age_feature]).collect();
    if ages.iter().any(|&a| a <= 0.0) {
        return Err(CvError::invalid("ages must be positive"));
    }
    let y: Vec<f64> = train.iter().map(|&i| data.y(i)).collect();
    let contrasts: Vec<f64> = if cfg.sex_effect_on.is_empty() {
        vec![0.0; train.len()]
    } else {
        for &i in train {
            let v = data.feature_row(i)[cfg.sex_feature];
            if v != 0.0 && v != 1.0 {
                return Err(CvError::invalid(format!(
                    "sex feature must be coded 0/1, found {v} at row {i}"
                )));
            }
        }
        train.iter().map(|&i| 2.0 * data.feature_row(i)[cfg.sex_feature] - 1.0).collect()
    };

    let (group_names, group_of) = if cfg.group_intercepts_on_l0 {
        let groups = data
            .groups
            .as_ref()
            .ok_or_else(|| CvError::invalid("group intercepts requested but dataset has no groups"))?;
        let mut names: Vec<String> = Vec::new();
        for &i in train {
            if !names.contains(&groups[i]) {
                names.push(groups[i].clone());
            }
        }
        if names.len() < 2 {
            return Err(CvError::invalid("group intercepts need at least 2 training groups"));
        }
        let of: Vec<usize> = train
            .iter()
            .map(|&i| names.iter().position(|n| n == &groups[i]).unwrap())
            .collect();
        for (g, name) in names.iter().enumerate() {
            let count = of.iter().filter(|&&x| x == g).count();
            if count < 2 {
                return Err(CvError::invalid(format!(
                    "training group `{name}` has {count} observation(s); need >= 2 for an intercept"
                )));
            }
        }
        (names, of)
    } else {
        (Vec::new(), vec![0; train.len()])
    };

    let prob = Problem {
        function: cfg.function,
        ages,
        contrasts,
        y,
        group_of,
        group_names,
        sex_targets: &cfg.sex_effect_on,
        use_groups: cfg.group_intercepts_on_l0,
    };

    let np = prob.n_params();
    if train.len() <= np {
        return Err(CvError::invalid(format!(
            "growth fit needs n_train > {np} parameters, got {}",
            train.len()
        )));
    }

    // Starting values: asymptote near the largest observed length, rate
    // from the age range, initial age just below the youngest fish.
    let mut theta = vec![0.0; np];
    match cfg.init {
        Some([l0, k, t0]) => {
            theta[0] = l0;
            theta[1] = k;
            theta[2] = t0;
        }
        None => {
            let max_y = prob.y.iter().cloned().fold(f64::MIN, f64::max);
            let min_a = prob.ages.iter().cloned().fold(f64::MAX, f64::min);
            let max_a = prob.ages.iter().cloned().fold(f64::MIN, f64::max);
            let range = (max_a - min_a).max(1e-6);
            theta[0] = max_y;
            theta[1] = 1.0 / range;
            theta[2] = min_a - 0.1 * range;
        }
    }

    let mut rss = prob.rss(&theta);
    let mut damping = 1e-3;
    let mut iterations = 0;

    for iter in 1..=cfg.max_iter {
        iterations = iter;
        let j = prob.jacobian(&theta);
        let r = prob.residuals(&theta);
        let jtj = j.ata();
        let jtr = j.t_matvec(&r);
        for d in 0..np {
            if jtj.get(d, d) <= 1e-300 {
                return Err(CvError::invalid(format!(
                    "singular Jacobian: parameter {d} has no leverage"
                )));
            }
        }

        // Try increasingly damped steps until one reduces the RSS.
        let mut stepped = false;
        for _ in 0..40 {
            let mut a = jtj.clone();
            for d in 0..np {
                a.set(d, d, jtj.get(d, d) * (1.0 + damping));
            }
            if let Some(delta) = linalg::solve_spd(&a, &jtr) {
                let candidate: Vec<f64> =
                    theta.iter().zip(delta.iter()).map(|(t, d)| t + d).collect();
                let cand_rss = prob.rss(&candidate);
                if cand_rss.is_finite() && cand_rss <= rss {
                    let rel = (rss - cand_rss) / rss.max(1e-300);
                    theta = candidate;
                    rss = cand_rss;
                    damping = (damping / 10.0).max(1e-12);
                    stepped = true;
                    if rel < cfg.tol {
                        return finish(prob, theta, rss, iterations, cfg);
                    }
                    break;
                }
            }
            damping *= 10.0;
            if damping > 1e12 {
                // No descent direction left: treat as converged.
                return finish(prob, theta, rss, iterations, cfg);
            }
        }
        if !stepped {
            return finish(prob, theta, rss, iterations, cfg);
        }
    }
    Err(CvError::NonConvergence {
        what: format!("Levenberg-Marquardt ({})", cfg.function.name()),
        iterations,
    })
}

fn finish(
    prob: Problem<'_>,
    theta: Vec<f64>,
    rss: f64,
    iterations: usize,
    cfg: &GrowthConfig,
) -> Result<GrowthFit> {
    let n = prob.y.len() as f64;
    let sex_offsets: Vec<(SexTarget, f64)> = cfg
        .sex_effect_on
        .iter()
        .enumerate()
        .map(|(t, target)| (*target, theta[3 + t]))
        .collect();
    let mut group_offsets = BTreeMap::new();
    if prob.use_groups {
        let base = 3 + cfg.sex_effect_on.len();
        let g_last = prob.group_names.len() - 1;
        let mut sum = 0.0;
        for g in 0..g_last {
            group_offsets.insert(prob.group_names[g].clone(), theta[base + g]);
            sum += theta[base + g];
        }
        group_offsets.insert(prob.group_names[g_last].clone(), -sum);
    }
    Ok(GrowthFit {
        function: cfg.function,
        l0: theta[0],
        k: theta[1],
        t0: theta[2],
        sex_offsets,
        group_offsets,
        sigma: (rss / n).sqrt(),
        rss,
        iterations,
        age_feature: cfg.age_feature,
        sex_feature: cfg.sex_feature,
    })
}

impl Model for Growth {
    fn family(&self) -> &'static str {
        "growth"
    }

    fn fit(&self, data: &Dataset, train: &[usize]) -> Result<Box<dyn FittedModel>> {
        Ok(Box::new(fit_growth(data, train, &self.cfg)?))
    }

    fn nominal_params(&self, data: &Dataset) -> usize {
        let groups = if self.cfg.group_intercepts_on_l0 {
            data.group_levels().len().saturating_sub(1)
        } else {
            0
        };
        // (L0, K, t0) + sex offsets + free group offsets + variance
        3 + self.cfg.sex_effect_on.len() + groups + 1
    }
}
