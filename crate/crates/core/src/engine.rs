//! The cross-validation estimator core.
//!
//! [`cv_score`] fits a model once per split and averages the pointwise
//! test losses: the plain CV score for partition plans, per-repetition
//! means for repeated plans. The optional additive bias correction reuses
//! the per-fold predictions of every datum, so it costs no extra fits;
//! the correction is the mean over data of the gap between the
//! within-sample loss and the average per-fold loss at that point.
//!
//! [`hat_loo`] is the linear-regression shortcut: the exact LOO mean
//! squared error from a single fit via the hat-matrix diagonal,
//! `mean(((y - yhat)/(1 - h))^2)`.
//!
//! [`effective_params`] measures optimism as within-sample minus
//! cross-validated total log density.
//!
//! Split evaluations run in parallel over the ambient rayon pool and
//! merge by datum index, so results are bit-identical for any thread
//! count or split order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Task};
use crate::error::{CvError, Result};
use crate::linalg;
use crate::losses::{
    self, LossKind, MetricKind, Orientation, PointwiseLosses, Prediction, ScoreKind,
};
use crate::models::elastic_net::{
    fit_elastic_net, lambda_path, ElasticNetConfig, LambdaPath, Objective,
};
use crate::models::{build_model, FittedModel, ModelSpec};
use crate::splitters::{make_nested, FoldPlan};

/// Threshold grid used by nested threshold tuning: 0.05, 0.10, ..., 0.95.
pub fn threshold_grid() -> Vec<f64> {
    (1..=19).map(|i| i as f64 * 0.05).collect()
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ScoreOptions {
    pub bias_correction: bool,
    /// Override the classification threshold carried on predictions.
    pub threshold: Option<f64>,
}

/// A cross-validated score with its uncertainty and provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreEstimate {
    pub kind: ScoreKind,
    pub orientation: Orientation,
    pub mean: f64,
    pub se: f64,
    /// "pointwise_normal" (sd/sqrt(n) over pointwise losses) or
    /// "across_repetitions" (sd of per-repetition means).
    pub se_method: String,
    /// The mean mapped into the shared higher-is-better view.
    pub utility_mean: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pointwise: Option<PointwiseLosses>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_repetition: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bias_correction_kappa: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corrected_mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_effective_params: Option<f64>,
    pub model_id: String,
    pub plan_fingerprint: String,
    /// Model fits performed to produce this estimate.
    pub fit_count: usize,
}

impl ScoreEstimate {
    /// The vector selection statistics align on: per-repetition means for
    /// repeated plans, pointwise losses otherwise.
    pub fn aligned_values(&self) -> &[f64] {
        if let Some(reps) = &self.per_repetition {
            if reps.len() > 1 {
                return reps;
            }
        }
        if let Some(pw) = &self.pointwise {
            return &pw.values;
        }
        self.per_repetition.as_deref().unwrap_or(&[])
    }
}

/// Predictions of every fold's model at every datum (not just its test
/// points); required by the bias correction.
pub struct PredictionGrid {
    /// `predictions[k][i]` = fold k's model evaluated at datum i.
    pub predictions: Vec<Vec<Prediction>>,
}

fn check_kind_feasible(data: &Dataset, kind: LossKind) -> Result<()> {
    if kind.needs_probability() && data.task() != Task::Classification {
        return Err(CvError::invalid(format!("loss `{kind}` needs a classification dataset")));
    }
    Ok(())
}

fn apply_threshold(mut pred: Prediction, threshold: Option<f64>) -> Prediction {
    if let Some(c) = threshold {
        pred.threshold = Some(c);
    }
    pred
}

struct SplitEval {
    /// Losses at this split's test points, in test order.
    test_losses: Vec<f64>,
    /// Losses of this fold's model at every datum (bias correction only).
    all_losses: Option<Vec<f64>>,
}

/// Cross-validated score of one model over one plan: the mean of the
/// pointwise test losses.
pub fn cv_score(
    spec: &ModelSpec,
    data: &Dataset,
    plan: &FoldPlan,
    kind: LossKind,
    opts: &ScoreOptions,
) -> Result<ScoreEstimate> {
    if plan.n != data.n() {
        return Err(CvError::invalid(format!(
            "plan covers n = {}, dataset has n = {}",
            plan.n,
            data.n()
        )));
    }
    plan.validate()?;
    check_kind_feasible(data, kind)?;
    spec.validate(data.p())?;
    let model = build_model(spec)?;
    let n = data.n();

    let evals: Vec<SplitEval> = plan
        .splits
        .par_iter()
        .enumerate()
        .map(|(s, split)| -> Result<SplitEval> {
            let fitted = model.fit(data, &split.train).map_err(|e| CvError::FitFailure {
                split: s,
                source: Box::new(e),
            })?;
            let loss_at = |i: usize| -> Result<f64> {
                let pred = apply_threshold(fitted.predict(data, i), opts.threshold);
                losses::pointwise_loss(kind, data.y(i), &pred)
            };
            let test_losses: Vec<f64> =
                split.test.iter().map(|&i| loss_at(i)).collect::<Result<_>>()?;
            let all_losses = if opts.bias_correction {
                Some((0..n).map(loss_at).collect::<Result<Vec<f64>>>()?)
            } else {
                None
            };
            Ok(SplitEval { test_losses, all_losses })
        })
        .collect::<Result<_>>()?;

    let mut fit_count = plan.splits.len();
    let reps = plan.n_repetitions();

    let (mean, se, se_method, pointwise, per_repetition) = if reps == 1 {
        // Merge by datum index so the pointwise vector is identical for
        // any split evaluation order.
        let mut points: Vec<Option<f64>> = vec![None; n];
        for (s, split) in plan.splits.iter().enumerate() {
            for (j, &i) in split.test.iter().enumerate() {
                if points[i].is_some() {
                    return Err(CvError::invalid(format!("datum {i} is tested twice")));
                }
                points[i] = Some(evals[s].test_losses[j]);
            }
        }
        let mut index = Vec::new();
        let mut values = Vec::new();
        for (i, v) in points.iter().enumerate() {
            if let Some(loss) = v {
                index.push(i);
                values.push(*loss);
            }
        }
        let mean = linalg::mean(&values);
        let se = linalg::sample_sd(&values) / (values.len() as f64).sqrt();
        (
            mean,
            se,
            "pointwise_normal".to_string(),
            Some(PointwiseLosses { kind, index, values }),
            Some(vec![mean]),
        )
    } else {
        // Per-repetition means, visiting one repetition at a time so a
        // single reusable stamp buffer catches duplicate coverage.
        let mut stamp = vec![usize::MAX; n];
        let mut rep_means = Vec::with_capacity(reps);
        for r in 0..reps {
            let mut sum = 0.0;
            let mut count = 0usize;
            for (s, split) in plan.repetition(r) {
                for (j, &i) in split.test.iter().enumerate() {
                    if stamp[i] == r {
                        return Err(CvError::invalid(format!(
                            "datum {i} is tested twice in repetition {r}"
                        )));
                    }
                    stamp[i] = r;
                    sum += evals[s].test_losses[j];
                    count += 1;
                }
            }
            rep_means.push(if count == 0 { 0.0 } else { sum / count as f64 });
        }
        let mean = linalg::mean(&rep_means);
        let se = linalg::sample_sd(&rep_means);
        (mean, se, "across_repetitions".to_string(), None, Some(rep_means))
    };

    // Burman correction: within-sample fit plus the already-computed
    // per-fold losses at every datum; one extra fit, no extra CV fits.
    let (kappa, corrected) = if opts.bias_correction {
        let all_idx: Vec<usize> = (0..n).collect();
        let within = model.fit(data, &all_idx).map_err(|e| CvError::FitFailure {
            split: usize::MAX,
            source: Box::new(e),
        })?;
        fit_count += 1;
        let ws_losses: Vec<f64> = (0..n)
            .map(|i| {
                let pred = apply_threshold(within.predict(data, i), opts.threshold);
                losses::pointwise_loss(kind, data.y(i), &pred)
            })
            .collect::<Result<_>>()?;

        let mut rep_kappas = Vec::with_capacity(reps);
        for r in 0..reps {
            let split_ids: Vec<usize> = plan.repetition(r).map(|(s, _)| s).collect();
            let k = split_ids.len() as f64;
            let mut sum = 0.0;
            for i in 0..n {
                let mut fold_avg = 0.0;
                for &s in &split_ids {
                    fold_avg += evals[s].all_losses.as_ref().expect("grid requested")[i];
                }
                fold_avg /= k;
                sum += ws_losses[i] - fold_avg;
            }
            rep_kappas.push(sum / n as f64);
        }
        let kappa = linalg::mean(&rep_kappas);
        (Some(kappa), Some(mean + kappa))
    } else {
        (None, None)
    };

    Ok(ScoreEstimate {
        kind: ScoreKind::Loss(kind),
        orientation: kind.orientation(),
        mean,
        se,
        se_method,
        utility_mean: kind.orientation().utility(mean),
        pointwise,
        per_repetition,
        bias_correction_kappa: kappa,
        corrected_mean: corrected,
        n_effective_params: None,
        model_id: spec.label(),
        plan_fingerprint: plan.fingerprint(),
        fit_count,
    })
}

/// Pointwise bias correction from a complete prediction grid (every fold
/// model evaluated at every datum) and the within-sample fit.
pub fn bias_correct(
    grid: &PredictionGrid,
    data: &Dataset,
    kind: LossKind,
    within: &dyn FittedModel,
) -> Result<f64> {
    let n = data.n();
    let k = grid.predictions.len();
    if k == 0 {
        return Err(CvError::invalid("empty prediction grid"));
    }
    for (s, preds) in grid.predictions.iter().enumerate() {
        if preds.len() != n {
            return Err(CvError::invalid(format!(
                "incomplete grid: fold {s} predicts {} of {n} data",
                preds.len()
            )));
        }
    }
    let mut sum = 0.0;
    for i in 0..n {
        let y = data.y(i);
        let ws = losses::pointwise_loss(kind, y, &within.predict(data, i))?;
        let mut fold_avg = 0.0;
        for preds in &grid.predictions {
            fold_avg += losses::pointwise_loss(kind, y, &preds[i])?;
        }
        fold_avg /= k as f64;
        sum += ws - fold_avg;
    }
    Ok(sum / n as f64)
}

/// Confusion-matrix metric estimated by pooling each repetition's test
/// outcomes (one matrix per repetition). A single-repetition plan gives
/// no across-repetition variability, so its standard error is 0; use a
/// repeated plan when the metric's sampling spread matters.
pub fn metric_score(
    spec: &ModelSpec,
    data: &Dataset,
    plan: &FoldPlan,
    metric: MetricKind,
    threshold: f64,
) -> Result<ScoreEstimate> {
    if data.task() != Task::Classification {
        return Err(CvError::invalid("confusion-matrix metrics need a classification dataset"));
    }
    if plan.n != data.n() {
        return Err(CvError::invalid("plan size does not match dataset"));
    }
    plan.validate()?;
    spec.validate(data.p())?;
    let model = build_model(spec)?;

    let probs_by_split: Vec<Vec<f64>> = plan
        .splits
        .par_iter()
        .enumerate()
        .map(|(s, split)| -> Result<Vec<f64>> {
            let fitted = model.fit(data, &split.train).map_err(|e| CvError::FitFailure {
                split: s,
                source: Box::new(e),
            })?;
            split
                .test
                .iter()
                .map(|&i| {
                    fitted.predict(data, i).prob.ok_or(CvError::MissingPredictionField {
                        field: "prob",
                        kind: metric.name().to_string(),
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let labels = data.labels().expect("classification dataset");
    let per_rep = losses::aggregate_metric(&probs_by_split, labels, plan, threshold, metric)?;
    let mean = linalg::mean(&per_rep);
    let se = if per_rep.len() > 1 { linalg::sample_sd(&per_rep) } else { 0.0 };

    Ok(ScoreEstimate {
        kind: ScoreKind::Metric(metric),
        orientation: metric.orientation(),
        mean,
        se,
        se_method: "across_repetitions".to_string(),
        utility_mean: metric.orientation().utility(mean),
        pointwise: None,
        per_repetition: Some(per_rep),
        bias_correction_kappa: None,
        corrected_mean: None,
        n_effective_params: None,
        model_id: spec.label(),
        plan_fingerprint: plan.fingerprint(),
        fit_count: plan.splits.len(),
    })
}

/// Dispatch on the score kind: pointwise losses go through [`cv_score`],
/// confusion-matrix metrics through [`metric_score`].
pub fn score(
    spec: &ModelSpec,
    data: &Dataset,
    plan: &FoldPlan,
    kind: ScoreKind,
    opts: &ScoreOptions,
) -> Result<ScoreEstimate> {
    match kind {
        ScoreKind::Loss(l) => cv_score(spec, data, plan, l, opts),
        ScoreKind::Metric(m) => {
            if opts.bias_correction {
                return Err(CvError::invalid(
                    "bias correction needs a pointwise loss, not a confusion-matrix metric",
                ));
            }
            metric_score(spec, data, plan, m, opts.threshold.unwrap_or(0.5))
        }
    }
}

/// Optimism of the fit measured in log density: within-sample total log
/// density minus the cross-validated total, over a plan that tests every
/// datum exactly once. Regression uses the Gaussian log density with the
/// per-fold dispersion MLE; classification uses log loss.
pub fn effective_params(data: &Dataset, spec: &ModelSpec, plan: &FoldPlan) -> Result<f64> {
    let kind = match data.task() {
        Task::Regression => LossKind::GaussianLogDensity,
        Task::Classification => LossKind::LogLoss,
    };
    if plan.n_repetitions() != 1 || !plan.is_partition() {
        return Err(CvError::invalid(
            "effective_params needs a plan that tests every datum exactly once",
        ));
    }
    let est = cv_score(spec, data, plan, kind, &ScoreOptions::default())?;
    let pointwise = est.pointwise.as_ref().expect("partition plan yields pointwise losses");
    let l_cv: f64 = pointwise.values.iter().sum();

    let all_idx: Vec<usize> = (0..data.n()).collect();
    let model = build_model(spec)?;
    let within = model
        .fit(data, &all_idx)
        .map_err(|e| CvError::FitFailure { split: usize::MAX, source: Box::new(e) })?;
    let mut l_ws = 0.0;
    for i in 0..data.n() {
        l_ws += losses::pointwise_loss(kind, data.y(i), &within.predict(data, i))?;
    }
    Ok(l_ws - l_cv)
}

/// Attach the effective-parameter count to a log-density score estimate
/// whose plan tested every datum exactly once. Reuses the estimate's
/// pointwise losses, so the only new work is the within-sample fit.
/// Returns false (untouched) when the kind or coverage does not apply.
pub fn attach_effective_params(
    est: &mut ScoreEstimate,
    spec: &ModelSpec,
    data: &Dataset,
) -> Result<bool> {
    let kind = match est.kind {
        ScoreKind::Loss(k @ LossKind::GaussianLogDensity) | ScoreKind::Loss(k @ LossKind::LogLoss) => k,
        _ => return Ok(false),
    };
    let l_cv = match &est.pointwise {
        Some(pw) if pw.index.len() == data.n() => pw.values.iter().sum::<f64>(),
        _ => return Ok(false),
    };
    let all_idx: Vec<usize> = (0..data.n()).collect();
    let model = build_model(spec)?;
    let within = model
        .fit(data, &all_idx)
        .map_err(|e| CvError::FitFailure { split: usize::MAX, source: Box::new(e) })?;
    let mut l_ws = 0.0;
    for i in 0..data.n() {
        l_ws += losses::pointwise_loss(kind, data.y(i), &within.predict(data, i))?;
    }
    est.n_effective_params = Some(l_ws - l_cv);
    est.fit_count += 1;
    Ok(true)
}

/// Exact LOO mean squared error for OLS from one fit (hat-matrix
/// shortcut). Pointwise values are the squared deflated residuals.
pub fn hat_loo(data: &Dataset, features: Option<&[usize]>) -> Result<ScoreEstimate> {
    if data.task() != Task::Regression {
        return Err(CvError::invalid("hat_loo applies to regression data"));
    }
    let n = data.n();
    let all_idx: Vec<usize> = (0..n).collect();
    let fit = crate::models::ols::fit_ols(data, &all_idx, features)?;
    let mut values = Vec::with_capacity(n);
    for i in 0..n {
        let h = fit.hat[i];
        if h >= 1.0 - 1e-8 {
            return Err(CvError::SelfDeterminedPoint { index: i });
        }
        let r = data.y(i) - fit.predict_mean(data, i);
        let d = r / (1.0 - h);
        values.push(d * d);
    }
    let mean = linalg::mean(&values);
    let se = linalg::sample_sd(&values) / (n as f64).sqrt();
    let spec_label = match features {
        Some(f) => {
            let list: Vec<String> = f.iter().map(|i| i.to_string()).collect();
            format!("ols[{}]", list.join(","))
        }
        None => "ols[*]".to_string(),
    };
    Ok(ScoreEstimate {
        kind: ScoreKind::Loss(LossKind::SquaredError),
        orientation: Orientation::LowerIsBetter,
        mean,
        se,
        se_method: "pointwise_normal".to_string(),
        utility_mean: -mean,
        pointwise: Some(PointwiseLosses { kind: LossKind::SquaredError, index: all_idx, values }),
        per_repetition: Some(vec![mean]),
        bias_correction_kappa: None,
        corrected_mean: None,
        n_effective_params: None,
        model_id: spec_label,
        plan_fingerprint: crate::splitters::loo_fingerprint(n)?,
        fit_count: 1,
    })
}

// ---------------------------------------------------------------------
// Regularisation-parameter tuning
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TuneRule {
    Best,
    OneSe,
}

impl std::str::FromStr for TuneRule {
    type Err = CvError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "best" => Ok(TuneRule::Best),
            "one_se" | "one-se" | "1se" => Ok(TuneRule::OneSe),
            other => Err(CvError::invalid(format!("unknown tune rule `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LambdaTuneReport {
    pub alpha: f64,
    pub objective: Objective,
    pub kind: ScoreKind,
    pub orientation: Orientation,
    pub lambdas: Vec<f64>,
    pub means: Vec<f64>,
    pub ses: Vec<f64>,
    /// Paired standard error of each lambda's score against the best.
    pub sigma_diff_vs_best: Vec<f64>,
    /// Nonzero coefficient count of a full-data fit at each lambda.
    pub nonzero_counts: Vec<usize>,
    pub best_index: usize,
    pub best_lambda: f64,
    pub one_se_index: usize,
    pub one_se_lambda: f64,
    pub alpha_surrogate_used: bool,
    pub plan_fingerprint: String,
}

impl LambdaTuneReport {
    pub fn chosen(&self, rule: TuneRule) -> f64 {
        match rule {
            TuneRule::Best => self.best_lambda,
            TuneRule::OneSe => self.one_se_lambda,
        }
    }
}

/// Cross-validated score along a descending lambda grid (the same folds
/// reused for every lambda), with both the best-score choice and the
/// largest lambda within one paired standard error of the best.
pub fn tune_lambda(
    data: &Dataset,
    plan: &FoldPlan,
    features: Option<&[usize]>,
    alpha: f64,
    n_lambda: usize,
    kind: ScoreKind,
    base: &ElasticNetConfig,
) -> Result<LambdaTuneReport> {
    let objective = match data.task() {
        Task::Regression => Objective::Linear,
        Task::Classification => Objective::Logistic,
    };
    if matches!(kind, ScoreKind::Metric(_)) && objective != Objective::Logistic {
        return Err(CvError::invalid("metric tuning needs a classification dataset"));
    }
    let all_idx: Vec<usize> = (0..data.n()).collect();
    let path: LambdaPath = lambda_path(data, &all_idx, features, alpha, n_lambda, objective)?;

    let feature_vec: Option<Vec<usize>> = features.map(|f| f.to_vec());
    let spec_for = |lambda: f64| -> Result<ModelSpec> {
        let cfg = ElasticNetConfig { alpha, lambda, objective, ..base.clone() };
        let mut spec = ModelSpec::new("elastic_net")
            .with_hyperparameters(serde_json::to_value(&cfg)?)
            .with_id(format!("elastic_net(a={alpha},l={lambda:.6e})"));
        spec.features = feature_vec.clone();
        Ok(spec)
    };

    let estimates: Vec<ScoreEstimate> = path
        .lambdas
        .iter()
        .map(|&lambda| {
            let spec = spec_for(lambda)?;
            score(
                &spec,
                data,
                plan,
                kind,
                &ScoreOptions { bias_correction: false, threshold: Some(base.threshold) },
            )
        })
        .collect::<Result<_>>()?;

    let nonzero_counts: Vec<usize> = path
        .lambdas
        .par_iter()
        .map(|&lambda| {
            let cfg = ElasticNetConfig { alpha, lambda, objective, ..base.clone() };
            fit_elastic_net(data, &all_idx, features, &cfg).map(|f| f.nonzero_count())
        })
        .collect::<Result<_>>()?;

    let means: Vec<f64> = estimates.iter().map(|e| e.mean).collect();
    let ses: Vec<f64> = estimates.iter().map(|e| e.se).collect();
    let utils: Vec<f64> = estimates.iter().map(|e| e.utility_mean).collect();
    let best_index = utils
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite scores"))
        .map(|(i, _)| i)
        .expect("nonempty grid");

    let best_vals = estimates[best_index].aligned_values().to_vec();
    let sigma_diff_vs_best: Vec<f64> = estimates
        .iter()
        .map(|e| {
            let rho = linalg::pearson(e.aligned_values(), &best_vals);
            let (sm, sb) = (e.se, estimates[best_index].se);
            (sm * sm + sb * sb - 2.0 * rho * sm * sb).max(0.0).sqrt()
        })
        .collect();

    // Largest lambda (the grid is descending, so the smallest index)
    // whose performance is within its paired standard error of the best.
    let best_util = utils[best_index];
    let mut one_se_index = best_index;
    for (i, util) in utils.iter().enumerate().take(best_index + 1) {
        if best_util - util <= sigma_diff_vs_best[i] {
            one_se_index = i;
            break;
        }
    }

    Ok(LambdaTuneReport {
        alpha,
        objective,
        kind,
        orientation: kind.orientation(),
        best_lambda: path.lambdas[best_index],
        one_se_lambda: path.lambdas[one_se_index],
        lambdas: path.lambdas,
        means,
        ses,
        sigma_diff_vs_best,
        nonzero_counts,
        best_index,
        one_se_index,
        alpha_surrogate_used: path.alpha_surrogate_used,
        plan_fingerprint: plan.fingerprint(),
    })
}

// ---------------------------------------------------------------------
// Nested CV
// ---------------------------------------------------------------------

/// One tunable candidate: a named family with a discrete grid of
/// concrete specs (hyperparameter settings or feature subsets).
#[derive(Debug, Clone)]
pub struct TuneCandidate {
    pub id: String,
    pub grid: Vec<ModelSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NestedChoice {
    pub split: usize,
    pub spec_index: usize,
    pub spec_label: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    pub inner_utility: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NestedCandidateResult {
    pub id: String,
    pub per_repetition: Vec<f64>,
    pub mean: f64,
    pub se: f64,
    pub choices: Vec<NestedChoice>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NestedTuneReport {
    pub kind: ScoreKind,
    pub orientation: Orientation,
    pub inner_k: usize,
    pub tune_threshold: bool,
    pub candidates: Vec<NestedCandidateResult>,
    pub outer_fingerprint: String,
    /// Original-index sets touched by inner computations, per outer
    /// split; kept so leakage can be audited from the report alone.
    pub inner_index_audit: Vec<Vec<usize>>,
}

fn inner_utility(
    spec: &ModelSpec,
    data: &Dataset,
    inner: &FoldPlan,
    kind: ScoreKind,
    threshold: f64,
) -> Result<f64> {
    let opts = ScoreOptions { bias_correction: false, threshold: Some(threshold) };
    let est = score(spec, data, inner, kind, &opts)?;
    Ok(est.utility_mean)
}

/// Nested CV: for every outer split, inner CV over the outer-train picks
/// the grid entry (and threshold, when tuning) with the best inner
/// utility; the winner refits on the whole outer-train and predicts the
/// outer test. Outer-test outcomes pool into per-repetition scores.
#[allow(clippy::too_many_arguments)]
pub fn tune_nested(
    candidates: &[TuneCandidate],
    data: &Dataset,
    outer: &FoldPlan,
    inner_k: usize,
    seed: u64,
    kind: ScoreKind,
    tune_threshold: bool,
    base_threshold: f64,
) -> Result<NestedTuneReport> {
    if candidates.is_empty() || candidates.iter().any(|c| c.grid.is_empty()) {
        return Err(CvError::invalid("nested tuning needs nonempty candidate grids"));
    }
    let threshold_sensitive = matches!(kind, ScoreKind::Metric(_))
        || matches!(kind, ScoreKind::Loss(LossKind::Misclassification));
    if tune_threshold && !threshold_sensitive {
        return Err(CvError::invalid(format!("threshold tuning has no effect on `{kind}`")));
    }
    let nested = make_nested(outer, inner_k, seed)?;
    let thresholds: Vec<f64> =
        if tune_threshold { threshold_grid() } else { vec![base_threshold] };

    struct SplitOutcome {
        choice: NestedChoice,
        preds: Vec<Prediction>,
    }

    let per_split: Vec<(Vec<usize>, Vec<SplitOutcome>)> = (0..outer.splits.len())
        .into_par_iter()
        .map(|s| -> Result<(Vec<usize>, Vec<SplitOutcome>)> {
            let inner_plan = widen_plan(&nested.inner[s].to_original(), data.n());
            let mut audit: Vec<usize> = Vec::new();
            for isp in &inner_plan.splits {
                audit.extend(isp.train.iter().copied());
                audit.extend(isp.test.iter().copied());
            }
            audit.sort_unstable();
            audit.dedup();

            let outer_split = &outer.splits[s];
            let mut outcomes = Vec::with_capacity(candidates.len());
            for cand in candidates {
                let mut best: Option<(f64, usize, f64)> = None;
                for (gi, spec) in cand.grid.iter().enumerate() {
                    for &c in &thresholds {
                        let util = inner_utility(spec, data, &inner_plan, kind, c)?;
                        let better = match &best {
                            None => true,
                            Some((bu, _, _)) => util > *bu,
                        };
                        if better {
                            best = Some((util, gi, c));
                        }
                        if !threshold_sensitive {
                            break;
                        }
                    }
                }
                let (util, gi, c) = best.expect("nonempty grid");
                let spec = &cand.grid[gi];
                let model = build_model(spec)?;
                let fitted =
                    model.fit(data, &outer_split.train).map_err(|e| CvError::FitFailure {
                        split: s,
                        source: Box::new(e),
                    })?;
                let preds: Vec<Prediction> = outer_split
                    .test
                    .iter()
                    .map(|&i| apply_threshold(fitted.predict(data, i), Some(c)))
                    .collect();
                outcomes.push(SplitOutcome {
                    choice: NestedChoice {
                        split: s,
                        spec_index: gi,
                        spec_label: spec.label(),
                        threshold: if threshold_sensitive { Some(c) } else { None },
                        inner_utility: util,
                    },
                    preds,
                });
            }
            Ok((audit, outcomes))
        })
        .collect::<Result<_>>()?;

    let reps = outer.n_repetitions();
    let mut results = Vec::with_capacity(candidates.len());
    for (ci, cand) in candidates.iter().enumerate() {
        let per_rep: Vec<f64> = (0..reps)
            .map(|r| -> Result<f64> {
                match kind {
                    ScoreKind::Loss(l) => {
                        let mut sum = 0.0;
                        let mut count = 0usize;
                        for (s, split) in outer.repetition(r) {
                            let preds = &per_split[s].1[ci].preds;
                            for (j, &i) in split.test.iter().enumerate() {
                                sum += losses::pointwise_loss(l, data.y(i), &preds[j])?;
                                count += 1;
                            }
                        }
                        Ok(sum / count as f64)
                    }
                    ScoreKind::Metric(m) => {
                        let labels = data.labels().ok_or_else(|| {
                            CvError::invalid("metric scoring needs classification labels")
                        })?;
                        let mut pooled = losses::ConfusionMatrix::default();
                        for (s, split) in outer.repetition(r) {
                            let outcome = &per_split[s].1[ci];
                            let c = outcome.choice.threshold.unwrap_or(base_threshold);
                            let probs: Vec<f64> = outcome
                                .preds
                                .iter()
                                .map(|p| {
                                    p.prob.ok_or(CvError::MissingPredictionField {
                                        field: "prob",
                                        kind: m.name().to_string(),
                                    })
                                })
                                .collect::<Result<_>>()?;
                            let ys: Vec<u8> = split.test.iter().map(|&i| labels[i]).collect();
                            pooled.add(&losses::build_confusion(&probs, &ys, c)?);
                        }
                        Ok(losses::confusion_metric(&pooled, m))
                    }
                }
            })
            .collect::<Result<_>>()?;
        let mean = linalg::mean(&per_rep);
        let se = if per_rep.len() > 1 { linalg::sample_sd(&per_rep) } else { 0.0 };
        results.push(NestedCandidateResult {
            id: cand.id.clone(),
            per_repetition: per_rep,
            mean,
            se,
            choices: per_split.iter().map(|(_, o)| o[ci].choice.clone()).collect(),
        });
    }

    Ok(NestedTuneReport {
        kind,
        orientation: kind.orientation(),
        inner_k,
        tune_threshold,
        candidates: results,
        outer_fingerprint: outer.fingerprint(),
        inner_index_audit: per_split.into_iter().map(|(a, _)| a).collect(),
    })
}

/// An inner plan mapped to original indices covers a subset of rows;
/// widen its declared n so validation against the full dataset holds.
fn widen_plan(plan: &FoldPlan, full_n: usize) -> FoldPlan {
    FoldPlan { scheme: plan.scheme.clone(), n: full_n, seed: plan.seed, splits: plan.splits.clone() }
}
