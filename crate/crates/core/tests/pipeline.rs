//! End-to-end library workflows across modules.

use cvselect_core::data::{self, demo};
use cvselect_core::engine::{self, ScoreOptions};
use cvselect_core::losses::{LossKind, MetricKind, ScoreKind};
use cvselect_core::models::growth::GrowthFunction;
use cvselect_core::models::ModelSpec;
use cvselect_core::report::{to_canonical_json, ReportEnvelope};
use cvselect_core::selection::{self, SelectionRule};
use cvselect_core::splitters;

/// Classification workflow: repeated 10-fold MCC over a discrete set of
/// logistic models, then the modified one-standard-error rule.
#[test]
fn classification_mcc_selection_workflow() {
    let data = demo::classification();
    let plan = splitters::make_repeated_kfold(data.n(), 10, 10, 7).unwrap();
    let specs = vec![
        ModelSpec::new("logistic").with_features(vec![0]).with_id("x1"),
        ModelSpec::new("logistic").with_features(vec![0, 1]).with_id("x1+x2"),
        ModelSpec::new("logistic").with_features(vec![0, 1, 2]).with_id("x1+x2+x3"),
        ModelSpec::new("logistic")
            .with_features((0..10).collect::<Vec<usize>>())
            .with_id("all"),
    ];
    let table = selection::score_table(
        &specs,
        &data,
        &plan,
        ScoreKind::Metric(MetricKind::Mcc),
        &ScoreOptions { bias_correction: false, threshold: Some(0.5) },
    )
    .unwrap();

    for entry in &table.entries {
        assert_eq!(entry.estimate.per_repetition.as_ref().unwrap().len(), 10);
    }

    let result = selection::select(&table, SelectionRule::OseModified).unwrap();
    let selected = result.models.iter().find(|m| m.id == result.selected).unwrap();
    let best = result.models.iter().find(|m| m.id == result.best).unwrap();
    assert!(selected.complexity <= best.complexity);
    // The informative predictors carry real signal on the demo data.
    assert!(best.mean > 0.3, "best MCC = {}", best.mean);
    assert_eq!(result.correlation_matrix.len(), 4);
}

/// Growth workflow: conditional (LOO) versus marginal (LOGO) scoring of
/// the three growth functions with per-group intercepts, both tables
/// carrying paired-difference standard errors.
#[test]
fn growth_conditional_vs_marginal_workflow() {
    let data = demo::growth();
    let groups = data.groups.clone().unwrap();

    let spec_for = |name: &str, function: &str| {
        ModelSpec::new("growth")
            .with_hyperparameters(serde_json::json!({
                "function": function,
                "group_intercepts_on_l0": true,
            }))
            .with_id(name)
    };
    let specs = vec![
        spec_for("vb", "von_bertalanffy"),
        spec_for("gompertz", "gompertz"),
        spec_for("logistic-curve", "logistic"),
    ];

    let kind = ScoreKind::Loss(LossKind::GaussianLogDensity);
    let loo = splitters::make_loo(data.n()).unwrap();
    let logo = splitters::make_logo(&groups).unwrap();
    assert_eq!(logo.splits.len(), 10);

    let conditional =
        selection::score_table(&specs, &data, &loo, kind, &ScoreOptions::default()).unwrap();
    let marginal =
        selection::score_table(&specs, &data, &logo, kind, &ScoreOptions::default()).unwrap();

    let sd_cond = selection::sigma_diff(&conditional).unwrap();
    let sd_marg = selection::sigma_diff(&marginal).unwrap();
    assert_eq!(sd_cond.len(), 3);
    assert_eq!(sd_marg.len(), 3);

    let res_cond = selection::select(&conditional, SelectionRule::OseDiff).unwrap();
    let res_marg = selection::select(&marginal, SelectionRule::OseDiff).unwrap();
    // The generator is von Bertalanffy; the conditional view should not
    // reject it.
    assert_eq!(res_cond.best, "vb");
    // Marginal scores exist and are finite for every model.
    for m in &res_marg.models {
        assert!(m.mean.is_finite());
        assert!(m.sigma_diff >= 0.0);
    }
}

/// Leave-d-out with d ~ n/K approaches the repeated K-fold estimate.
#[test]
fn leave_d_out_approaches_repeated_kfold() {
    let data = data::simulate_linear_gaussian(100, &[1.0, -0.5, 0.25, 0.0, 0.3], 1.0, 11).unwrap();
    let spec = ModelSpec::new("ols");
    let d = 20; // n / K with K = 5
    let ldo_plan = splitters::make_leave_d_out(100, d, 400, 3).unwrap();
    let rep_plan = splitters::make_repeated_kfold(100, 5, 80, 4).unwrap();
    let ldo = engine::cv_score(
        &spec,
        &data,
        &ldo_plan,
        LossKind::SquaredError,
        &ScoreOptions::default(),
    )
    .unwrap();
    let rep = engine::cv_score(
        &spec,
        &data,
        &rep_plan,
        LossKind::SquaredError,
        &ScoreOptions::default(),
    )
    .unwrap();
    let tol = 2.0
        * (ldo.se / (400f64).sqrt() + rep.se / (80f64).sqrt())
        + 0.01 * rep.mean;
    assert!(
        (ldo.mean - rep.mean).abs() < tol,
        "leave-d-out {} vs repeated {} (tol {tol})",
        ldo.mean,
        rep.mean
    );
}

/// Score estimates survive the report envelope byte-for-byte.
#[test]
fn score_estimate_report_round_trip() {
    let data = demo::linear();
    let plan = splitters::make_kfold(data.n(), 10, 2).unwrap();
    let est = engine::cv_score(
        &ModelSpec::new("ols"),
        &data,
        &plan,
        LossKind::SquaredError,
        &ScoreOptions { bias_correction: true, threshold: None },
    )
    .unwrap();

    std::env::set_var("CVSELECT_TIMESTAMP", "2026-08-08T00:00:00Z");
    let env = ReportEnvelope::new("score_estimate", &est, serde_json::json!({"seed": 2}))
        .unwrap()
        .with_fingerprint(est.plan_fingerprint.clone());
    let dir = std::env::temp_dir().join("cvselect-pipeline-tests");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("score.json");
    cvselect_core::report::write_report(&env, &path).unwrap();
    let back = cvselect_core::report::read_report(&path).unwrap();
    assert_eq!(to_canonical_json(&env).unwrap(), to_canonical_json(&back).unwrap());
    std::env::remove_var("CVSELECT_TIMESTAMP");

    let parsed: cvselect_core::engine::ScoreEstimate =
        serde_json::from_value(back.payload).unwrap();
    assert_eq!(parsed.mean.to_bits(), est.mean.to_bits());
    assert_eq!(parsed.corrected_mean, est.corrected_mean);
}

/// Blocked CV composes with scoring: nearby points leave the training
/// sets, and the estimate stays finite and reproducible.
#[test]
fn blocked_cv_scoring_end_to_end() {
    let base_data =
        data::simulate_linear_gaussian(60, &[1.0, 0.5], 1.0, 21).unwrap();
    // 1-d coordinates along a line: block out neighbours within 1.5.
    let coords = cvselect_core::linalg::Mat::from_fn(60, 1, |i, _| i as f64);
    let data = cvselect_core::data::Dataset::new(
        base_data.features().clone(),
        base_data.response().clone(),
        None,
        None,
        Some(coords),
        base_data.feature_names.clone(),
    )
    .unwrap();
    let base = splitters::make_kfold(60, 6, 5).unwrap();
    let blocked = splitters::make_blocked(data.coords.as_ref().unwrap(), &base, 1.5).unwrap();
    assert_eq!(blocked.dropped_splits, 0);
    for (b, orig) in blocked.plan.splits.iter().zip(base.splits.iter()) {
        assert!(b.train.len() <= orig.train.len());
    }
    let est = engine::cv_score(
        &ModelSpec::new("ols"),
        &data,
        &blocked.plan,
        LossKind::SquaredError,
        &ScoreOptions::default(),
    )
    .unwrap();
    assert!(est.mean.is_finite());
    let again = engine::cv_score(
        &ModelSpec::new("ols"),
        &data,
        &blocked.plan,
        LossKind::SquaredError,
        &ScoreOptions::default(),
    )
    .unwrap();
    assert_eq!(est.mean.to_bits(), again.mean.to_bits());
}

/// The growth demo's generating function wins under squared error too,
/// and unknown groups predict through the population curve.
#[test]
fn growth_logo_marginal_prediction_is_population_level() {
    let data = data::simulate_growth(
        GrowthFunction::Gompertz,
        6,
        15,
        &data::GrowthTruth { sigma: 2.0, ..Default::default() },
        5,
    )
    .unwrap();
    let groups = data.groups.clone().unwrap();
    let logo = splitters::make_logo(&groups).unwrap();
    let spec = ModelSpec::new("growth").with_hyperparameters(serde_json::json!({
        "function": "gompertz",
        "group_intercepts_on_l0": true,
    }));
    let est = engine::cv_score(
        &spec,
        &data,
        &logo,
        LossKind::SquaredError,
        &ScoreOptions::default(),
    )
    .unwrap();
    assert!(est.mean.is_finite());
    assert_eq!(est.pointwise.as_ref().unwrap().values.len(), data.n());
}
