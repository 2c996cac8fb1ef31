//! Binary-level tests of the cvselect CLI: exit codes, report schemas,
//! and byte determinism.

use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_cvselect"));
    // Pin the envelope timestamp so byte comparisons are meaningful.
    cmd.env("CVSELECT_TIMESTAMP", "2026-08-08T00:00:00Z");
    cmd
}

fn tmpdir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("cvselect-cli-tests").join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("valid JSON on stdout")
}

#[test]
fn split_emits_plan_and_is_deterministic() {
    let args = ["split", "--n", "20", "--scheme", "kfold", "--k", "5", "--seed", "1"];
    let a = run(&args);
    let b = run(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout, "same invocation must emit identical bytes");
    let plan = stdout_json(&a);
    assert_eq!(plan["splits"].as_array().unwrap().len(), 5);
    assert_eq!(plan["scheme"], "kfold 5");
}

#[test]
fn split_usage_errors_exit_2() {
    let out = run(&["split", "--scheme", "logo"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["split", "--n", "10", "--scheme", "kfold"]); // missing --k
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["split", "--n", "10", "--scheme", "warp"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn score_loo_matches_hat_shortcut() {
    let out = run(&[
        "score",
        "--data",
        "demo:linear",
        "--model",
        r#"{"family":"ols"}"#,
        "--scheme",
        "loo",
        "--kind",
        "squared_error",
    ]);
    let envelope = stdout_json(&out);
    let mean = envelope["payload"]["mean"].as_f64().unwrap();
    let expected = cvselect_core::engine::hat_loo(&cvselect_core::data::demo::linear(), None)
        .unwrap()
        .mean;
    assert!((mean - expected).abs() < 1e-10, "{mean} vs {expected}");
}

#[test]
fn score_log_density_reports_effective_params() {
    let out = run(&[
        "score",
        "--data",
        "demo:linear",
        "--model",
        r#"{"family":"ols","features":[0,1,2]}"#,
        "--scheme",
        "loo",
        "--kind",
        "gaussian_log_density",
    ]);
    let envelope = stdout_json(&out);
    let p_cv = envelope["payload"]["n_effective_params"].as_f64().unwrap();
    // 3 coefficients + intercept + variance, up to estimation noise.
    assert!((p_cv - 5.0).abs() < 2.0, "p_cv = {p_cv}");
}

#[test]
fn score_repeated_kfold_mcc_reports_fifty_repetitions() {
    let out = run(&[
        "score",
        "--data",
        "demo:classification",
        "--model",
        r#"{"family":"logistic","features":[0,1,2]}"#,
        "--kind",
        "mcc",
        "--scheme",
        "repeated-kfold",
        "--k",
        "10",
        "--repeats",
        "50",
        "--seed",
        "1",
    ]);
    let envelope = stdout_json(&out);
    let reps = envelope["payload"]["per_repetition"].as_array().unwrap();
    assert_eq!(reps.len(), 50);
}

#[test]
fn score_missing_dataset_exits_2_and_fit_failure_exits_1() {
    let out = run(&[
        "score",
        "--data",
        "/nonexistent/file.csv",
        "--response",
        "y",
        "--model",
        r#"{"family":"ols"}"#,
        "--scheme",
        "loo",
    ]);
    assert_eq!(out.status.code(), Some(2));

    // 10 features + intercept cannot fit on 2-fold training halves of
    // the 120-row demo? They can; use a tiny CSV instead.
    let dir = tmpdir("fitfail");
    let csv = dir.join("tiny.csv");
    std::fs::write(&csv, "y,x1,x2,x3\n1,0.1,0.2,0.3\n2,0.4,0.5,0.6\n3,0.7,0.8,0.9\n4,1.0,1.1,1.2\n5,1.3,1.4,1.5\n6,1.6,1.7,1.8\n").unwrap();
    let out = run(&[
        "score",
        "--data",
        csv.to_str().unwrap(),
        "--response",
        "y",
        "--model",
        r#"{"family":"ols"}"#,
        "--scheme",
        "loo",
    ]);
    assert_eq!(out.status.code(), Some(1), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("split"));
}

#[test]
fn csv_ingestion_via_flags() {
    let dir = tmpdir("csv");
    let data = cvselect_core::data::demo::linear();
    let csv = dir.join("linear.csv");
    data.write_csv(&csv).unwrap();
    let features: Vec<String> = data.feature_names.clone();
    let out = run(&[
        "score",
        "--data",
        csv.to_str().unwrap(),
        "--response",
        "y",
        "--features",
        &features.join(","),
        "--task",
        "regression",
        "--model",
        r#"{"family":"ols"}"#,
        "--scheme",
        "kfold",
        "--k",
        "10",
        "--seed",
        "3",
    ]);
    let envelope = stdout_json(&out);
    assert!(envelope["payload"]["mean"].as_f64().unwrap().is_finite());
    // resolved config embeds the schema
    assert_eq!(envelope["config"]["dataset"]["schema"]["response_column"], "y");
}

#[test]
fn select_identical_specs_tie_cleanly() {
    let out = run(&[
        "select",
        "--data",
        "demo:linear",
        "--model",
        r#"{"family":"ols","features":[0],"id":"a"}"#,
        "--model",
        r#"{"family":"ols","features":[0],"id":"b"}"#,
        "--scheme",
        "loo",
        "--kind",
        "squared_error",
        "--rule",
        "ose-mod",
    ]);
    let envelope = stdout_json(&out);
    let models = envelope["payload"]["models"].as_array().unwrap();
    for m in models {
        assert_eq!(m["delta"].as_f64().unwrap(), 0.0);
        assert_eq!(m["sigma_adj"].as_f64().unwrap(), 0.0);
    }
    assert_eq!(envelope["payload"]["selected"], "a");
}

#[test]
fn select_ose_mod_never_more_complex_than_best() {
    let out = run(&[
        "select",
        "--data",
        "demo:linear",
        "--model",
        r#"{"family":"ols","features":[0],"id":"p1"}"#,
        "--model",
        r#"{"family":"ols","features":[0,1,2],"id":"p3"}"#,
        "--model",
        r#"{"family":"ols","features":[0,1,2,3,4,5,6,7,8,9],"id":"p10"}"#,
        "--scheme",
        "loo",
        "--kind",
        "squared_error",
        "--rule",
        "ose-mod",
    ]);
    let envelope = stdout_json(&out);
    let payload = &envelope["payload"];
    let models = payload["models"].as_array().unwrap();
    let complexity = |id: &str| {
        models
            .iter()
            .find(|m| m["id"] == id)
            .and_then(|m| m["complexity"].as_u64())
            .unwrap()
    };
    let best = payload["best"].as_str().unwrap();
    let selected = payload["selected"].as_str().unwrap();
    assert!(complexity(selected) <= complexity(best));
    // schema contract: per-model fields exist
    for m in models {
        for field in ["mean", "se", "sigma_adj", "sigma_diff", "delta", "complexity"] {
            assert!(m.get(field).is_some(), "missing {field}");
        }
    }
    assert_eq!(payload["correlation_matrix"].as_array().unwrap().len(), 3);
}

#[test]
fn tune_lasso_path_properties() {
    let out = run(&[
        "tune",
        "--data",
        "demo:classification",
        "--family",
        "elastic-net",
        "--alpha",
        "1",
        "--n-lambda",
        "12",
        "--scheme",
        "kfold",
        "--k",
        "5",
        "--kind",
        "mcc",
        "--seed",
        "2",
    ]);
    let envelope = stdout_json(&out);
    let payload = &envelope["payload"];
    let lambdas: Vec<f64> =
        payload["lambdas"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    let nonzero: Vec<u64> = payload["nonzero_counts"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_u64().unwrap())
        .collect();
    assert!(lambdas.windows(2).all(|w| w[1] < w[0]));
    // Count of retained coefficients never rises as lambda grows.
    for w in nonzero.windows(2) {
        assert!(w[0] <= w[1], "nonzero counts not monotone: {nonzero:?}");
    }
    let best = payload["best_lambda"].as_f64().unwrap();
    let one_se = payload["one_se_lambda"].as_f64().unwrap();
    assert!(one_se >= best);
}

#[test]
fn tune_ridge_keeps_every_predictor() {
    let out = run(&[
        "tune",
        "--data",
        "demo:classification",
        "--alpha",
        "0",
        "--n-lambda",
        "8",
        "--scheme",
        "kfold",
        "--k",
        "5",
        "--kind",
        "mcc",
        "--seed",
        "2",
    ]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("surrogate"));
    let envelope = stdout_json(&out);
    for v in envelope["payload"]["nonzero_counts"].as_array().unwrap() {
        assert_eq!(v.as_u64().unwrap(), 10, "ridge keeps all 10 predictors");
    }
}

#[test]
fn tune_nested_reports_choices() {
    let out = run(&[
        "tune",
        "--data",
        "demo:classification",
        "--nested",
        "--inner-k",
        "5",
        "--model",
        r#"{"family":"logistic","features":[0],"id":"small"}"#,
        "--model",
        r#"{"family":"logistic","features":[0,1,2],"id":"big"}"#,
        "--scheme",
        "kfold",
        "--k",
        "5",
        "--kind",
        "mcc",
        "--seed",
        "4",
    ]);
    let envelope = stdout_json(&out);
    let cand = &envelope["payload"]["candidates"][0];
    assert_eq!(cand["choices"].as_array().unwrap().len(), 5);
    assert_eq!(cand["per_repetition"].as_array().unwrap().len(), 1);
}

#[test]
fn tune_nested_compares_candidate_families_from_config() {
    let dir = tmpdir("nested-candidates");
    let cfg = dir.join("run.json");
    std::fs::write(
        &cfg,
        serde_json::json!({
            "dataset": {"path": "demo:classification"},
            "candidates": [
                {"id": "sparse", "grid": [
                    {"family": "logistic", "features": [0]},
                    {"family": "logistic", "features": [0, 1]}
                ]},
                {"id": "penalised", "grid": [
                    {"family": "elastic_net",
                     "hyperparameters": {"alpha": 1.0, "lambda": 0.05, "objective": "logistic"}},
                    {"family": "elastic_net",
                     "hyperparameters": {"alpha": 1.0, "lambda": 0.2, "objective": "logistic"}}
                ]}
            ],
            "plan": {"scheme": "kfold", "k": 5},
            "kind": "mcc",
            "inner_k": 4,
            "seed": 8
        })
        .to_string(),
    )
    .unwrap();
    let envelope = stdout_json(&run(&["tune", "--config", cfg.to_str().unwrap(), "--nested"]));
    let cands = envelope["payload"]["candidates"].as_array().unwrap();
    assert_eq!(cands.len(), 2);
    assert_eq!(cands[0]["id"], "sparse");
    assert_eq!(cands[1]["id"], "penalised");
    for c in cands {
        assert_eq!(c["per_repetition"].as_array().unwrap().len(), 1);
        assert_eq!(c["choices"].as_array().unwrap().len(), 5);
    }
}

#[test]
fn bench_unknown_name_exits_2_listing_options() {
    let out = run(&["bench", "warp-speed"]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    for name in ["k-bias", "bias-variance", "repeat-vs-k", "consistency"] {
        assert!(stderr.contains(name), "{stderr}");
    }
}

#[test]
fn bench_consistency_at_n_100_uses_d_73() {
    let dir = tmpdir("bench-consistency");
    let out = bin()
        .args([
            "bench",
            "consistency",
            "--n",
            "100",
            "--replicates",
            "10",
            "--out",
            dir.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("consistency.json")).unwrap())
            .unwrap();
    let cells = json["payload"]["cells"].as_array().unwrap();
    let ldo = cells
        .iter()
        .find(|c| c["keys"]["scheme"] == "leave-dc-out" && c["keys"]["n"] == "100")
        .expect("leave-dc-out cell");
    assert_eq!(ldo["keys"]["d"], "73");
}

#[test]
fn bench_writes_json_and_tidy_csv() {
    let dir = tmpdir("bench");
    let out = bin()
        .args(["bench", "repeat-vs-k", "--replicates", "12", "--out", dir.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("repeat-vs-k.json")).unwrap())
            .unwrap();
    assert_eq!(json["payload"]["experiment"], "repeat-vs-k");
    let csv = std::fs::read_to_string(dir.join("repeat-vs-k.csv")).unwrap();
    assert!(csv.starts_with("experiment,cell,statistic,value,mc_se"));
    assert!(csv.contains("estimator_variance"));
}

#[test]
fn parallel_does_not_change_report_bytes() {
    let args = |dir: &str, threads: &str| {
        vec![
            "score".to_string(),
            "--data".into(),
            "demo:classification".into(),
            "--model".into(),
            r#"{"family":"logistic","features":[0,1]}"#.into(),
            "--kind".into(),
            "mcc".into(),
            "--scheme".into(),
            "repeated-kfold".into(),
            "--k".into(),
            "5".into(),
            "--repeats".into(),
            "6".into(),
            "--seed".into(),
            "9".into(),
            "--parallel".into(),
            threads.into(),
            "--out".into(),
            dir.into(),
        ]
    };
    let d1 = tmpdir("par1");
    let d8 = tmpdir("par8");
    let o1 = bin().args(args(d1.to_str().unwrap(), "1")).output().unwrap();
    let o8 = bin().args(args(d8.to_str().unwrap(), "8")).output().unwrap();
    assert!(o1.status.success() && o8.status.success());
    let b1 = std::fs::read(d1.join("score.json")).unwrap();
    let b8 = std::fs::read(d8.join("score.json")).unwrap();
    assert_eq!(b1, b8, "--parallel must not change report bytes");
}

#[test]
fn config_file_with_flag_overrides() {
    let dir = tmpdir("config");
    let cfg = dir.join("run.json");
    std::fs::write(
        &cfg,
        serde_json::json!({
            "dataset": {"path": "demo:linear"},
            "models": [{"family": "ols", "features": [0, 1]}],
            "plan": {"scheme": "kfold", "k": 4},
            "kind": "squared_error",
            "seed": 5
        })
        .to_string(),
    )
    .unwrap();
    // Flag overrides k = 4 with k = 10.
    let out = run(&["score", "--config", cfg.to_str().unwrap(), "--k", "10"]);
    let envelope = stdout_json(&out);
    assert_eq!(envelope["config"]["plan"]["k"], 10);
    assert_eq!(envelope["config"]["seed"], 5);
    // Seed flag wins over the config seed.
    let out2 = run(&["score", "--config", cfg.to_str().unwrap(), "--k", "10", "--seed", "77"]);
    let envelope2 = stdout_json(&out2);
    assert_eq!(envelope2["config"]["seed"], 77);
}

#[test]
fn run_directory_contains_resolved_config() {
    let dir = tmpdir("rundir");
    let out = bin()
        .args([
            "score",
            "--data",
            "demo:linear",
            "--model",
            r#"{"family":"ols"}"#,
            "--scheme",
            "kfold",
            "--k",
            "4",
            "--out",
            dir.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let cfg: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("config.json")).unwrap()).unwrap();
    // Seed is explicit even though none was passed.
    assert_eq!(cfg["seed"], 0);
    assert_eq!(cfg["plan"]["k"], 4);
}

#[test]
fn misclassification_loss_respects_threshold() {
    let envelope = stdout_json(&run(&[
        "score",
        "--data",
        "demo:classification",
        "--model",
        r#"{"family":"logistic","features":[0,1,2]}"#,
        "--scheme",
        "kfold",
        "--k",
        "8",
        "--kind",
        "misclassification",
        "--threshold",
        "0.5",
        "--seed",
        "6",
    ]));
    let mean = envelope["payload"]["mean"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&mean));
    // An absurd threshold predicts everything negative: the error rate
    // becomes the positive-class prevalence.
    let all_neg = stdout_json(&run(&[
        "score",
        "--data",
        "demo:classification",
        "--model",
        r#"{"family":"logistic","features":[0,1,2]}"#,
        "--scheme",
        "kfold",
        "--k",
        "8",
        "--kind",
        "misclassification",
        "--threshold",
        "0.999999",
        "--seed",
        "6",
    ]));
    let labels = cvselect_core::data::demo::classification();
    let prevalence = labels.labels().unwrap().iter().filter(|&&y| y == 1).count() as f64
        / labels.n() as f64;
    let mean_neg = all_neg["payload"]["mean"].as_f64().unwrap();
    assert!((mean_neg - prevalence).abs() < 1e-12, "{mean_neg} vs {prevalence}");
}

#[test]
fn pointwise_csv_sidecar() {
    let dir = tmpdir("sidecar");
    let out = bin()
        .args([
            "score",
            "--data",
            "demo:linear",
            "--model",
            r#"{"family":"ols"}"#,
            "--scheme",
            "loo",
            "--out",
            dir.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let csv = std::fs::read_to_string(dir.join("pointwise.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "index,loss");
    assert_eq!(lines.len(), 121); // header + one row per datum
}
