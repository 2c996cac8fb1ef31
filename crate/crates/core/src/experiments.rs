//! Monte Carlo experiments harness.
//!
//! Each experiment draws replicate datasets from a known generator,
//! pushes them through the estimator core, and reports per-cell
//! statistics with Monte Carlo standard errors — never bare point
//! estimates. Replicates are independent tasks with per-replicate
//! derived seeds, so reports are reproducible byte-for-byte from
//! (config, seed) regardless of thread count.
//!
//! The "true" score oracle is an independent test set of fresh draws
//! per replicate rather than an analytic formula, which keeps it
//! model-agnostic.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{simulate_linear_gaussian, Dataset};
use crate::engine::{self, ScoreOptions};
use crate::error::{CvError, Result};
use crate::linalg::{self, Mat};
use crate::losses::LossKind;
use crate::models::ols::fit_ols;
use crate::models::ModelSpec;
use crate::splitters::{consistent_d, make_kfold, make_leave_d_out, make_loo, make_repeated_kfold};

/// Derive an independent stream seed from (base, replicate, slot).
/// SplitMix64-style mixing keeps replicates decorrelated while staying a
/// pure function of its arguments.
pub fn sub_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed ^ a.wrapping_mul(0x9e3779b97f4a7c15) ^ b.wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

fn mc_se(values: &[f64]) -> f64 {
    linalg::sample_sd(values) / (values.len() as f64).sqrt()
}

/// Binomial standard error of a frequency over n trials.
pub fn binomial_se(freq: f64, n: usize) -> f64 {
    (freq * (1.0 - freq) / n as f64).sqrt()
}

/// Gap between two absolute means estimated from paired per-replicate
/// vectors: returns (|mean(a)| - |mean(b)|, paired Monte Carlo se of
/// that gap). Pairing uses the replicate-wise difference after aligning
/// signs with the means, which is far tighter than treating the two
/// arms as independent.
pub fn paired_abs_gap(a: &[f64], b: &[f64]) -> (f64, f64) {
    assert_eq!(a.len(), b.len());
    let sa = if linalg::mean(a) >= 0.0 { 1.0 } else { -1.0 };
    let sb = if linalg::mean(b) >= 0.0 { 1.0 } else { -1.0 };
    let diffs: Vec<f64> = a.iter().zip(b.iter()).map(|(x, y)| sa * x - sb * y).collect();
    (linalg::mean(&diffs), mc_se(&diffs))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellStat {
    pub statistic: String,
    pub value: f64,
    pub mc_se: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Cell {
    pub keys: BTreeMap<String, String>,
    pub stats: Vec<CellStat>,
    /// Per-replicate values backing the statistics, for paired
    /// comparisons downstream.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub raw: Option<BTreeMap<String, Vec<f64>>>,
}

impl Cell {
    fn new(keys: &[(&str, String)]) -> Self {
        Cell {
            keys: keys.iter().map(|(k, v)| (k.to_string(), v.clone())).collect(),
            stats: Vec::new(),
            raw: None,
        }
    }

    fn push(&mut self, statistic: &str, value: f64, mc_se: f64) {
        self.stats.push(CellStat { statistic: statistic.to_string(), value, mc_se });
    }

    fn keep_raw(&mut self, name: &str, values: Vec<f64>) {
        self.raw.get_or_insert_with(BTreeMap::new).insert(name.to_string(), values);
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub config: serde_json::Value,
    pub cells: Vec<Cell>,
}

impl ExperimentReport {
    /// First cell whose keys contain all the given pairs.
    pub fn cell(&self, keys: &[(&str, &str)]) -> Option<&Cell> {
        self.cells.iter().find(|c| {
            keys.iter().all(|(k, v)| c.keys.get(*k).map(String::as_str) == Some(*v))
        })
    }

    /// (value, mc_se) of one statistic in one cell.
    pub fn stat(&self, keys: &[(&str, &str)], statistic: &str) -> Option<(f64, f64)> {
        self.cell(keys)?
            .stats
            .iter()
            .find(|s| s.statistic == statistic)
            .map(|s| (s.value, s.mc_se))
    }

    pub fn raw(&self, keys: &[(&str, &str)], name: &str) -> Option<&[f64]> {
        self.cell(keys)?.raw.as_ref()?.get(name).map(Vec::as_slice)
    }

    /// Tidy CSV: one row per cell per statistic.
    pub fn tidy_csv(&self) -> String {
        let mut out = String::from("experiment,cell,statistic,value,mc_se\n");
        for cell in &self.cells {
            let key_str: Vec<String> =
                cell.keys.iter().map(|(k, v)| format!("{k}={v}")).collect();
            let cell_id = key_str.join(";");
            for s in &cell.stats {
                out.push_str(&format!(
                    "{},{},{},{:.16e},{:.16e}\n",
                    self.experiment, cell_id, s.statistic, s.value, s.mc_se
                ));
            }
        }
        out
    }
}

// ---------------------------------------------------------------------
// Bias–variance decomposition
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct BiasVarianceConfig {
    pub n: usize,
    pub replicates: usize,
    /// Complexity sweep: nested OLS with 0..=p_max leading features.
    pub p_max: usize,
    /// Active coefficients of the data-generating process (padded with
    /// zeros to p_max features).
    pub true_beta: Vec<f64>,
    pub sigma: f64,
    pub eval_points: usize,
    pub seed: u64,
    pub keep_raw: bool,
}

impl Default for BiasVarianceConfig {
    fn default() -> Self {
        BiasVarianceConfig {
            n: 100,
            replicates: 200,
            p_max: 8,
            true_beta: vec![1.0, 0.7, 0.5, 0.3],
            sigma: 1.0,
            eval_points: 50,
            seed: 0,
            keep_raw: false,
        }
    }
}

/// Decompose the expected squared prediction error at fixed evaluation
/// points into bias² + variance + irreducible error, per model
/// complexity.
///
/// With the biased (divide-by-R) variance estimator, bias² + variance
/// equals the Monte Carlo mean of the squared distance to the true mean
/// exactly, so the reported `decomposition_residual` has expectation 0
/// and a well-defined per-replicate standard error.
pub fn run_bias_variance(cfg: &BiasVarianceConfig) -> Result<ExperimentReport> {
    if cfg.replicates < 2 {
        return Err(CvError::invalid("need at least 2 replicates"));
    }
    if cfg.true_beta.len() > cfg.p_max {
        return Err(CvError::invalid("true_beta longer than p_max"));
    }
    let mut beta = cfg.true_beta.clone();
    beta.resize(cfg.p_max, 0.0);

    // Fixed evaluation design, shared by every replicate.
    let mut eval_rng = ChaCha12Rng::seed_from_u64(sub_seed(cfg.seed, u64::MAX, 0));
    let normal = Normal::new(0.0, 1.0).unwrap();
    let x_eval = Mat::from_fn(cfg.eval_points, cfg.p_max, |_, _| normal.sample(&mut eval_rng));
    let f_eval: Vec<f64> = (0..cfg.eval_points).map(|e| linalg::dot(x_eval.row(e), &beta)).collect();
    let eval_data = Dataset::new(
        x_eval,
        crate::data::Response::Regression(f_eval.clone()),
        None,
        None,
        None,
        (1..=cfg.p_max).map(|j| format!("x{j}")).collect(),
    )?;

    let sweep: Vec<usize> = (0..=cfg.p_max).collect();

    struct Rep {
        /// predictions[cell][eval point]
        predictions: Vec<Vec<f64>>,
        y_eval: Vec<f64>,
    }

    let reps: Vec<Rep> = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| -> Result<Rep> {
            let train =
                simulate_linear_gaussian(cfg.n, &beta, cfg.sigma, sub_seed(cfg.seed, r as u64, 0))?;
            let mut noise_rng =
                ChaCha12Rng::seed_from_u64(sub_seed(cfg.seed, r as u64, 1));
            let normal = Normal::new(0.0, 1.0).unwrap();
            let y_eval: Vec<f64> =
                f_eval.iter().map(|f| f + cfg.sigma * normal.sample(&mut noise_rng)).collect();
            let all_idx: Vec<usize> = (0..cfg.n).collect();
            let mut predictions = Vec::with_capacity(sweep.len());
            for &p in &sweep {
                let features: Vec<usize> = (0..p).collect();
                let fit = fit_ols(&train, &all_idx, Some(&features))?;
                predictions.push(
                    (0..cfg.eval_points).map(|e| fit.predict_mean(&eval_data, e)).collect(),
                );
            }
            Ok(Rep { predictions, y_eval })
        })
        .collect::<Result<_>>()?;

    let rf = cfg.replicates as f64;
    let ef = cfg.eval_points as f64;
    let noise_var = cfg.sigma * cfg.sigma;

    let mut cells = Vec::with_capacity(sweep.len());
    for (ci, &p) in sweep.iter().enumerate() {
        // Per-replicate aggregates over evaluation points.
        let u: Vec<f64> = reps
            .iter()
            .map(|rep| {
                (0..cfg.eval_points)
                    .map(|e| {
                        let d = rep.predictions[ci][e] - rep.y_eval[e];
                        d * d
                    })
                    .sum::<f64>()
                    / ef
            })
            .collect();
        let v: Vec<f64> = reps
            .iter()
            .map(|rep| {
                (0..cfg.eval_points)
                    .map(|e| {
                        let d = rep.predictions[ci][e] - f_eval[e];
                        d * d
                    })
                    .sum::<f64>()
                    / ef
            })
            .collect();
        let d_vals: Vec<f64> = u.iter().zip(v.iter()).map(|(a, b)| a - b).collect();

        let bias2_at = |drop: Option<usize>| -> f64 {
            let denom = if drop.is_some() { rf - 1.0 } else { rf };
            (0..cfg.eval_points)
                .map(|e| {
                    let mut s = 0.0;
                    for (r, rep) in reps.iter().enumerate() {
                        if Some(r) != drop {
                            s += rep.predictions[ci][e];
                        }
                    }
                    let m = s / denom;
                    let d = m - f_eval[e];
                    d * d
                })
                .sum::<f64>()
                / ef
        };
        let var_at = |drop: Option<usize>| -> f64 {
            let denom = if drop.is_some() { rf - 1.0 } else { rf };
            (0..cfg.eval_points)
                .map(|e| {
                    let mut s = 0.0;
                    let mut ss = 0.0;
                    for (r, rep) in reps.iter().enumerate() {
                        if Some(r) != drop {
                            let y = rep.predictions[ci][e];
                            s += y;
                            ss += y * y;
                        }
                    }
                    let m = s / denom;
                    ss / denom - m * m
                })
                .sum::<f64>()
                / ef
        };

        let bias2 = bias2_at(None);
        let variance = var_at(None);
        let expected_loss = linalg::mean(&u);
        let residual = linalg::mean(&d_vals) - noise_var;

        // Jackknife standard errors for the non-mean statistics.
        let jk = |f: &dyn Fn(Option<usize>) -> f64| -> f64 {
            let theta: Vec<f64> = (0..cfg.replicates).map(|r| f(Some(r))).collect();
            let tbar = linalg::mean(&theta);
            let ss: f64 = theta.iter().map(|t| (t - tbar) * (t - tbar)).sum();
            ((rf - 1.0) / rf * ss).sqrt()
        };
        let bias2_se = jk(&bias2_at);
        let variance_se = jk(&var_at);

        let mut cell = Cell::new(&[("p", p.to_string())]);
        cell.push("bias2", bias2, bias2_se);
        cell.push("variance", variance, variance_se);
        cell.push("expected_loss", expected_loss, mc_se(&u));
        cell.push("decomposition_residual", residual, mc_se(&d_vals));
        cell.push("noise_var", noise_var, 0.0);
        if cfg.keep_raw {
            cell.keep_raw("expected_loss", u);
            cell.keep_raw("distance_to_truth", v);
        }
        cells.push(cell);
    }

    Ok(ExperimentReport {
        experiment: "bias-variance".into(),
        config: serde_json::to_value(cfg)?,
        cells,
    })
}

// ---------------------------------------------------------------------
// Choice-of-K bias study
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct KBiasConfig {
    pub n: usize,
    pub beta: Vec<f64>,
    pub sigma: f64,
    pub replicates: usize,
    /// K values for K-fold arms; LOO (K = n) is always included.
    pub k_values: Vec<usize>,
    /// Size of the independent truth sample per replicate.
    pub truth_points: usize,
    pub seed: u64,
    pub keep_raw: bool,
}

impl Default for KBiasConfig {
    fn default() -> Self {
        KBiasConfig {
            n: 100,
            beta: vec![1.0, 0.8, 0.6, 0.4, 0.2],
            sigma: 1.0,
            replicates: 200,
            k_values: vec![2, 5, 10],
            truth_points: 100_000,
            seed: 0,
            keep_raw: true,
        }
    }
}

/// Mean bias of the K-fold score against the fresh-sample truth, with
/// and without the additive correction, for each K and for LOO.
pub fn run_k_bias_study(cfg: &KBiasConfig) -> Result<ExperimentReport> {
    if cfg.replicates < 2 {
        return Err(CvError::invalid("need at least 2 replicates"));
    }
    let arms: Vec<(String, usize)> = cfg
        .k_values
        .iter()
        .map(|&k| (k.to_string(), k))
        .chain(std::iter::once(("loo".to_string(), cfg.n)))
        .collect();

    struct Rep {
        s_true: f64,
        s_hat: Vec<f64>,
        s_hat_corrected: Vec<f64>,
    }

    let spec = ModelSpec::new("ols");
    let opts = ScoreOptions { bias_correction: true, threshold: None };

    let reps: Vec<Rep> = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| -> Result<Rep> {
            let train =
                simulate_linear_gaussian(cfg.n, &cfg.beta, cfg.sigma, sub_seed(cfg.seed, r as u64, 0))?;
            let truth = simulate_linear_gaussian(
                cfg.truth_points,
                &cfg.beta,
                cfg.sigma,
                sub_seed(cfg.seed, r as u64, 1),
            )?;
            let all_idx: Vec<usize> = (0..cfg.n).collect();
            let full = fit_ols(&train, &all_idx, None)?;
            let mut s_true = 0.0;
            for i in 0..truth.n() {
                let d = truth.y(i) - full.predict_mean(&truth, i);
                s_true += d * d;
            }
            s_true /= truth.n() as f64;

            let mut s_hat = Vec::with_capacity(arms.len());
            let mut s_hat_corrected = Vec::with_capacity(arms.len());
            for (ai, (_, k)) in arms.iter().enumerate() {
                let plan = if *k == cfg.n {
                    make_loo(cfg.n)?
                } else {
                    make_kfold(cfg.n, *k, sub_seed(cfg.seed, r as u64, 2 + ai as u64))?
                };
                let est = engine::cv_score(&spec, &train, &plan, LossKind::SquaredError, &opts)?;
                s_hat.push(est.mean);
                s_hat_corrected.push(est.corrected_mean.expect("correction requested"));
            }
            Ok(Rep { s_true, s_hat, s_hat_corrected })
        })
        .collect::<Result<_>>()?;

    let mut cells = Vec::new();
    for (ai, (label, k)) in arms.iter().enumerate() {
        let bias: Vec<f64> = reps.iter().map(|rep| rep.s_hat[ai] - rep.s_true).collect();
        let bias_corr: Vec<f64> =
            reps.iter().map(|rep| rep.s_hat_corrected[ai] - rep.s_true).collect();
        let mut cell = Cell::new(&[("k", label.clone())]);
        cell.push("bias", linalg::mean(&bias), mc_se(&bias));
        cell.push("bias_corrected", linalg::mean(&bias_corr), mc_se(&bias_corr));
        cell.push("train_fraction", (cfg.n - cfg.n / k) as f64 / cfg.n as f64, 0.0);
        if cfg.keep_raw {
            cell.keep_raw("bias", bias);
            cell.keep_raw("bias_corrected", bias_corr);
            cell.keep_raw("s_hat", reps.iter().map(|rep| rep.s_hat[ai]).collect());
        }
        cells.push(cell);
    }

    Ok(ExperimentReport {
        experiment: "k-bias".into(),
        config: serde_json::to_value(cfg)?,
        cells,
    })
}

// ---------------------------------------------------------------------
// Repeated small-K vs one large-K pass
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RepeatVsKConfig {
    pub n: usize,
    pub beta: Vec<f64>,
    pub sigma: f64,
    pub replicates: usize,
    pub k: usize,
    pub repeats: usize,
    pub truth_points: usize,
    pub seed: u64,
    pub keep_raw: bool,
}

impl Default for RepeatVsKConfig {
    fn default() -> Self {
        RepeatVsKConfig {
            n: 100,
            beta: vec![1.0, 0.8, 0.6, 0.4, 0.2],
            sigma: 1.0,
            replicates: 200,
            k: 5,
            repeats: 2,
            truth_points: 50_000,
            seed: 0,
            keep_raw: true,
        }
    }
}

/// Compare R repetitions of K-fold against a single (R·K)-fold pass:
/// bias against the fresh-sample truth and the across-replicate variance
/// of each estimator.
pub fn run_repeat_vs_large_k(cfg: &RepeatVsKConfig) -> Result<ExperimentReport> {
    let big_k = cfg.k * cfg.repeats;
    if big_k > cfg.n {
        return Err(CvError::invalid(format!("R*K = {big_k} exceeds n = {}", cfg.n)));
    }
    if cfg.replicates < 2 {
        return Err(CvError::invalid("need at least 2 replicates"));
    }
    let spec = ModelSpec::new("ols");
    let opts = ScoreOptions::default();

    struct Rep {
        s_true: f64,
        s_repeated: f64,
        s_big: f64,
    }

    let reps: Vec<Rep> = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| -> Result<Rep> {
            let train =
                simulate_linear_gaussian(cfg.n, &cfg.beta, cfg.sigma, sub_seed(cfg.seed, r as u64, 0))?;
            let truth = simulate_linear_gaussian(
                cfg.truth_points,
                &cfg.beta,
                cfg.sigma,
                sub_seed(cfg.seed, r as u64, 1),
            )?;
            let all_idx: Vec<usize> = (0..cfg.n).collect();
            let full = fit_ols(&train, &all_idx, None)?;
            let mut s_true = 0.0;
            for i in 0..truth.n() {
                let d = truth.y(i) - full.predict_mean(&truth, i);
                s_true += d * d;
            }
            s_true /= truth.n() as f64;

            let rep_plan =
                make_repeated_kfold(cfg.n, cfg.k, cfg.repeats, sub_seed(cfg.seed, r as u64, 2))?;
            let big_plan = make_kfold(cfg.n, big_k, sub_seed(cfg.seed, r as u64, 3))?;
            let s_repeated =
                engine::cv_score(&spec, &train, &rep_plan, LossKind::SquaredError, &opts)?.mean;
            let s_big =
                engine::cv_score(&spec, &train, &big_plan, LossKind::SquaredError, &opts)?.mean;
            Ok(Rep { s_true, s_repeated, s_big })
        })
        .collect::<Result<_>>()?;

    let arms: Vec<(String, Vec<f64>, Vec<f64>)> = vec![
        (
            format!("repeated-{}x{}", cfg.k, cfg.repeats),
            reps.iter().map(|r| r.s_repeated - r.s_true).collect(),
            reps.iter().map(|r| r.s_repeated).collect(),
        ),
        (
            format!("kfold-{big_k}"),
            reps.iter().map(|r| r.s_big - r.s_true).collect(),
            reps.iter().map(|r| r.s_big).collect(),
        ),
    ];

    let rf = cfg.replicates as f64;
    let mut cells = Vec::new();
    for (label, bias, estimates) in arms {
        let mut cell = Cell::new(&[("scheme", label)]);
        cell.push("bias", linalg::mean(&bias), mc_se(&bias));
        // Jackknife se of the estimator variance.
        let var_full = linalg::sample_var(&estimates);
        let jk: Vec<f64> = (0..cfg.replicates)
            .map(|drop| {
                let rest: Vec<f64> = estimates
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| *i != drop)
                    .map(|(_, v)| *v)
                    .collect();
                linalg::sample_var(&rest)
            })
            .collect();
        let jbar = linalg::mean(&jk);
        let var_se =
            ((rf - 1.0) / rf * jk.iter().map(|t| (t - jbar) * (t - jbar)).sum::<f64>()).sqrt();
        cell.push("estimator_variance", var_full, var_se);
        if cfg.keep_raw {
            cell.keep_raw("bias", bias);
            cell.keep_raw("estimate", estimates);
        }
        cells.push(cell);
    }

    Ok(ExperimentReport {
        experiment: "repeat-vs-k".into(),
        config: serde_json::to_value(cfg)?,
        cells,
    })
}

// ---------------------------------------------------------------------
// Consistent selection demonstration
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ConsistencyConfig {
    pub n_values: Vec<usize>,
    pub replicates: usize,
    /// Total feature count; candidates are nested prefixes 0..=p.
    pub p: usize,
    /// Leading active coefficients; their count is the true model size.
    pub active_beta: Vec<f64>,
    pub sigma: f64,
    /// Iterations of the leave-d-out plan.
    pub d_iterations: usize,
    pub seed: u64,
}

impl Default for ConsistencyConfig {
    fn default() -> Self {
        ConsistencyConfig {
            n_values: vec![100, 300, 1000],
            replicates: 200,
            p: 10,
            active_beta: vec![1.0, 0.5, 0.25],
            sigma: 1.0,
            d_iterations: 100,
            seed: 0,
        }
    }
}

/// Frequency of true-model selection by best-score LOO versus best-score
/// leave-d-out with the consistency-oriented d, across sample sizes.
pub fn run_consistency_demo(cfg: &ConsistencyConfig) -> Result<ExperimentReport> {
    if cfg.active_beta.len() > cfg.p {
        return Err(CvError::invalid("active_beta longer than p"));
    }
    if cfg.replicates < 2 {
        return Err(CvError::invalid("need at least 2 replicates"));
    }
    let mut beta = cfg.active_beta.clone();
    beta.resize(cfg.p, 0.0);
    let true_size = cfg.active_beta.len();
    let sweep: Vec<usize> = (0..=cfg.p).collect();

    let mut cells = Vec::new();
    for &n in &cfg.n_values {
        let d = consistent_d(n)?;

        struct RepOutcome {
            loo_pick: usize,
            ldo_pick: usize,
        }

        let outcomes: Vec<RepOutcome> = (0..cfg.replicates)
            .into_par_iter()
            .map(|r| -> Result<RepOutcome> {
                let data = simulate_linear_gaussian(
                    n,
                    &beta,
                    cfg.sigma,
                    sub_seed(cfg.seed, r as u64, n as u64),
                )?;
                // LOO arm via the exact hat-matrix shortcut.
                let loo_means: Vec<f64> = sweep
                    .iter()
                    .map(|&p| {
                        let features: Vec<usize> = (0..p).collect();
                        engine::hat_loo(&data, Some(&features)).map(|e| e.mean)
                    })
                    .collect::<Result<_>>()?;
                // Leave-d_c-out arm: the same plan scores every candidate.
                let plan = make_leave_d_out(
                    n,
                    d,
                    cfg.d_iterations,
                    sub_seed(cfg.seed, r as u64, (n as u64) << 20),
                )?;
                let ldo_means: Vec<f64> = sweep
                    .iter()
                    .map(|&p| {
                        let spec =
                            ModelSpec::new("ols").with_features((0..p).collect::<Vec<usize>>());
                        engine::cv_score(
                            &spec,
                            &data,
                            &plan,
                            LossKind::SquaredError,
                            &ScoreOptions::default(),
                        )
                        .map(|e| e.mean)
                    })
                    .collect::<Result<_>>()?;
                Ok(RepOutcome { loo_pick: argmin(&loo_means), ldo_pick: argmin(&ldo_means) })
            })
            .collect::<Result<_>>()?;

        for (scheme, picks) in [
            ("loo", outcomes.iter().map(|o| o.loo_pick).collect::<Vec<_>>()),
            ("leave-dc-out", outcomes.iter().map(|o| o.ldo_pick).collect::<Vec<_>>()),
        ] {
            let true_rate = picks.iter().filter(|&&p| p == true_size).count() as f64
                / cfg.replicates as f64;
            let superset_rate = picks.iter().filter(|&&p| p > true_size).count() as f64
                / cfg.replicates as f64;
            let mut cell = Cell::new(&[
                ("n", n.to_string()),
                ("scheme", scheme.to_string()),
                ("d", if scheme == "loo" { "1".to_string() } else { d.to_string() }),
            ]);
            cell.push("true_rate", true_rate, binomial_se(true_rate, cfg.replicates));
            cell.push("superset_rate", superset_rate, binomial_se(superset_rate, cfg.replicates));
            cells.push(cell);
        }
    }

    Ok(ExperimentReport {
        experiment: "consistency".into(),
        config: serde_json::to_value(cfg)?,
        cells,
    })
}

fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..values.len() {
        if values[i] < values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sub_seed_is_stable_and_spread() {
        assert_eq!(sub_seed(1, 2, 3), sub_seed(1, 2, 3));
        assert_ne!(sub_seed(1, 2, 3), sub_seed(1, 3, 2));
        assert_ne!(sub_seed(1, 2, 3), sub_seed(2, 2, 3));
    }

    #[test]
    fn bias_variance_decomposition_holds() {
        let cfg = BiasVarianceConfig {
            replicates: 120,
            p_max: 6,
            eval_points: 30,
            ..Default::default()
        };
        let report = run_bias_variance(&cfg).unwrap();
        assert_eq!(report.cells.len(), 7);
        for cell in &report.cells {
            let residual = cell.stats.iter().find(|s| s.statistic == "decomposition_residual").unwrap();
            assert!(
                residual.value.abs() <= 3.0 * residual.mc_se,
                "cell {:?}: residual {} +- {}",
                cell.keys,
                residual.value,
                residual.mc_se
            );
        }
        // Correct specification: bias2 at the true complexity is ~0.
        let (bias2, _) = report.stat(&[("p", "4")], "bias2").unwrap();
        assert!(bias2 < 0.02, "bias2 = {bias2}");
        // Underfit models carry real bias.
        let (bias2_low, _) = report.stat(&[("p", "0")], "bias2").unwrap();
        assert!(bias2_low > 0.5, "intercept-only bias2 = {bias2_low}");
    }

    #[test]
    fn bias_variance_variance_grows_with_complexity() {
        let cfg = BiasVarianceConfig { replicates: 150, p_max: 8, ..Default::default() };
        let report = run_bias_variance(&cfg).unwrap();
        let mut prev: Option<(f64, f64)> = None;
        for p in 0..=8 {
            let (var, se) = report.stat(&[("p", &p.to_string())], "variance").unwrap();
            if let Some((pvar, pse)) = prev {
                assert!(
                    var >= pvar - 3.0 * (se + pse),
                    "variance dropped from {pvar} to {var} at p = {p}"
                );
            }
            prev = Some((var, se));
        }
    }

    #[test]
    fn k_bias_ordering_small_run() {
        let cfg = KBiasConfig {
            replicates: 150,
            truth_points: 20_000,
            k_values: vec![2, 10],
            ..Default::default()
        };
        let report = run_k_bias_study(&cfg).unwrap();
        let b2 = report.raw(&[("k", "2")], "bias").unwrap();
        let b10 = report.raw(&[("k", "10")], "bias").unwrap();
        let bloo = report.raw(&[("k", "loo")], "bias").unwrap();
        let (gap_2_10, se_2_10) = paired_abs_gap(b2, b10);
        assert!(gap_2_10 > 2.0 * se_2_10, "gap {gap_2_10} +- {se_2_10}");
        let (gap_10_loo, se_10_loo) = paired_abs_gap(b10, bloo);
        assert!(
            gap_10_loo > -2.0 * se_10_loo,
            "K = 10 significantly less biased than LOO: {gap_10_loo} +- {se_10_loo}"
        );
        // Correction pulls K = 2 toward the LOO bias.
        let (mb2, _) = report.stat(&[("k", "2")], "bias").unwrap();
        let (mb2c, _) = report.stat(&[("k", "2")], "bias_corrected").unwrap();
        assert!(mb2c.abs() < mb2.abs(), "corrected {mb2c} vs raw {mb2}");
    }

    #[test]
    fn repeat_vs_large_k_report_shape() {
        let cfg = RepeatVsKConfig { replicates: 40, truth_points: 10_000, ..Default::default() };
        let report = run_repeat_vs_large_k(&cfg).unwrap();
        assert_eq!(report.cells.len(), 2);
        let (bias_rep, se_rep) = report.stat(&[("scheme", "repeated-5x2")], "bias").unwrap();
        let (bias_big, se_big) = report.stat(&[("scheme", "kfold-10")], "bias").unwrap();
        // Repeated small-K cannot be significantly less biased.
        assert!(
            bias_rep >= bias_big - 2.0 * (se_rep + se_big),
            "bias {bias_rep} vs {bias_big}"
        );
        for cell in &report.cells {
            assert!(cell.stats.iter().any(|s| s.statistic == "estimator_variance"));
        }
        assert!(run_repeat_vs_large_k(&RepeatVsKConfig { k: 30, repeats: 5, ..Default::default() })
            .is_err());
    }

    #[test]
    fn corrected_small_k_tracks_loo() {
        // The corrected 2-fold estimate sits closer to the LOO estimate
        // than the uncorrected one, on average over replicates.
        let cfg = KBiasConfig {
            replicates: 120,
            truth_points: 5_000,
            k_values: vec![2],
            ..Default::default()
        };
        let report = run_k_bias_study(&cfg).unwrap();
        let b2 = report.raw(&[("k", "2")], "bias").unwrap();
        let b2c = report.raw(&[("k", "2")], "bias_corrected").unwrap();
        let bloo = report.raw(&[("k", "loo")], "bias").unwrap();
        // bias vectors share s_true per replicate, so differences of
        // biases equal differences of the score estimates themselves.
        let gap_raw: Vec<f64> =
            b2.iter().zip(bloo.iter()).map(|(a, b)| (a - b).abs()).collect();
        let gap_corr: Vec<f64> =
            b2c.iter().zip(bloo.iter()).map(|(a, b)| (a - b).abs()).collect();
        assert!(
            linalg::mean(&gap_corr) < linalg::mean(&gap_raw),
            "corrected gap {} vs raw gap {}",
            linalg::mean(&gap_corr),
            linalg::mean(&gap_raw)
        );
    }

    #[test]
    fn consistency_trend_across_sample_sizes() {
        let cfg = ConsistencyConfig {
            n_values: vec![100, 300, 1000],
            replicates: 80,
            d_iterations: 40,
            ..Default::default()
        };
        let report = run_consistency_demo(&cfg).unwrap();
        let rate = |n: &str, scheme: &str| {
            report.stat(&[("n", n), ("scheme", scheme)], "true_rate").unwrap()
        };
        // Consistent selection sharpens with n (within binomial se).
        let (f100, se100) = rate("100", "leave-dc-out");
        let (f300, se300) = rate("300", "leave-dc-out");
        let (f1000, se1000) = rate("1000", "leave-dc-out");
        assert!(f300 >= f100 - 2.0 * (se100 + se300), "{f100} -> {f300}");
        assert!(f1000 >= f300 - 2.0 * (se300 + se1000), "{f300} -> {f1000}");
        // LOO keeps a persistent overfitting probability.
        let (loo1000, _) = rate("1000", "loo");
        assert!(loo1000 < 0.9, "LOO true-model rate {loo1000} should plateau below 1");
        let cell = report.cell(&[("n", "1000"), ("scheme", "loo")]).unwrap();
        let superset =
            cell.stats.iter().find(|s| s.statistic == "superset_rate").unwrap().value;
        assert!(superset > 0.05, "LOO superset rate {superset} should persist");
    }

    #[test]
    fn consistency_demo_uses_published_d() {
        let cfg = ConsistencyConfig {
            n_values: vec![100],
            replicates: 30,
            d_iterations: 30,
            ..Default::default()
        };
        let report = run_consistency_demo(&cfg).unwrap();
        let cell = report.cell(&[("n", "100"), ("scheme", "leave-dc-out")]).unwrap();
        assert_eq!(cell.keys.get("d").unwrap(), "73");
        for cell in &report.cells {
            for s in &cell.stats {
                assert!((0.0..=1.0).contains(&s.value));
            }
        }
    }

    #[test]
    fn reports_are_reproducible_byte_for_byte() {
        let cfg = KBiasConfig {
            replicates: 10,
            truth_points: 2_000,
            k_values: vec![2],
            ..Default::default()
        };
        let a = run_k_bias_study(&cfg).unwrap();
        let b = run_k_bias_study(&cfg).unwrap();
        let ja = crate::report::to_canonical_json(&a).unwrap();
        let jb = crate::report::to_canonical_json(&b).unwrap();
        assert_eq!(ja, jb);
    }

    #[test]
    fn tidy_csv_has_one_row_per_stat() {
        let cfg = RepeatVsKConfig {
            replicates: 8,
            truth_points: 1_000,
            keep_raw: false,
            ..Default::default()
        };
        let report = run_repeat_vs_large_k(&cfg).unwrap();
        let csv = report.tidy_csv();
        let rows: Vec<&str> = csv.lines().collect();
        let n_stats: usize = report.cells.iter().map(|c| c.stats.len()).sum();
        assert_eq!(rows.len(), n_stats + 1);
        assert_eq!(rows[0], "experiment,cell,statistic,value,mc_se");
    }
}
