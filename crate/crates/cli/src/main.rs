//! cvselect: batch cross-validation scoring, selection, tuning, and
//! Monte Carlo experiments.
//!
//! Exit codes: 0 success, 1 computation failure, 2 usage/config error.
//! All randomness flows from one resolved seed. Reports are canonical
//! JSON (plus tidy CSV for experiments), and `--parallel N` never
//! changes report bytes.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use cvselect_core::data::Task;
use cvselect_core::engine::{self, ScoreOptions, TuneCandidate, TuneRule};
use cvselect_core::error::CvError;
use cvselect_core::experiments::{
    run_bias_variance, run_consistency_demo, run_k_bias_study, run_repeat_vs_large_k,
    BiasVarianceConfig, ConsistencyConfig, ExperimentReport, KBiasConfig, RepeatVsKConfig,
};
use cvselect_core::losses::ScoreKind;
use cvselect_core::models::elastic_net::ElasticNetConfig;
use cvselect_core::report::{self, ReportEnvelope};
use cvselect_core::selection::{self, SelectionRule};

use config::{resolve_models, resolve_seed, DatasetArgs, FileConfig, PlanArgs};

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config, or inputs: exit 2.
    Usage(String),
    /// The computation itself failed: exit 1.
    Compute(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Compute(m) => f.write_str(m),
        }
    }
}

pub fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn compute(err: CvError) -> CliError {
    CliError::Compute(err.to_string())
}

#[derive(Parser)]
#[command(
    name = "cvselect",
    version,
    about = "Cross-validated model scoring and calibrated selection"
)]
struct Cli {
    /// JSON config file; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random choice (default: config, then CVSELECT_SEED, then 0).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Rayon thread count (default: all cores). Reports are byte-identical for any value.
    #[arg(long, global = true)]
    parallel: Option<usize>,
    /// Output directory; stdout when omitted (experiments default to `.`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a splitting plan and emit it as JSON.
    Split(SplitArgs),
    /// Cross-validate one model and emit its score estimate.
    Score(ScoreArgs),
    /// Score several models on a shared plan and apply a selection rule.
    Select(SelectArgs),
    /// Tune the elastic-net penalty along a lambda path, or run nested CV
    /// over a discrete model grid.
    Tune(TuneArgs),
    /// Run a named Monte Carlo experiment and write JSON + tidy CSV.
    Bench(BenchArgs),
}

#[derive(Args)]
struct SplitArgs {
    #[command(flatten)]
    plan: PlanArgs,
    #[command(flatten)]
    dataset: DatasetArgs,
}

#[derive(Args)]
struct ScoreArgs {
    #[command(flatten)]
    dataset: DatasetArgs,
    #[command(flatten)]
    plan: PlanArgs,
    /// Model spec as JSON, e.g. '{"family":"ols"}' (see README for fields).
    #[arg(long)]
    model: Option<String>,
    /// Loss or metric name (squared_error, gaussian_log_density, mcc, ...).
    #[arg(long)]
    kind: Option<String>,
    /// Also compute the additive bias correction (pointwise losses only).
    #[arg(long)]
    bias_correct: bool,
    /// Classification threshold for metrics and misclassification loss.
    #[arg(long)]
    threshold: Option<f64>,
    /// Write the pointwise losses as a CSV sidecar.
    #[arg(long)]
    pointwise_csv: Option<PathBuf>,
}

#[derive(Args)]
struct SelectArgs {
    #[command(flatten)]
    dataset: DatasetArgs,
    #[command(flatten)]
    plan: PlanArgs,
    /// Model spec JSON; repeat for each candidate.
    #[arg(long = "model")]
    models: Vec<String>,
    #[arg(long)]
    kind: Option<String>,
    /// best | ose-mod | ose-diff
    #[arg(long)]
    rule: Option<String>,
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Args)]
struct TuneArgs {
    #[command(flatten)]
    dataset: DatasetArgs,
    #[command(flatten)]
    plan: PlanArgs,
    /// Family to tune (elastic-net); ignored with --nested.
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    n_lambda: Option<usize>,
    /// best | one-se (lambda choice reported either way)
    #[arg(long)]
    rule: Option<String>,
    /// Nested CV over the discrete --model grid instead of a lambda path.
    #[arg(long)]
    nested: bool,
    #[arg(long)]
    inner_k: Option<usize>,
    /// Tune the classification threshold on the inner folds.
    #[arg(long)]
    tune_threshold: bool,
    #[arg(long = "model")]
    models: Vec<String>,
    #[arg(long)]
    kind: Option<String>,
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Args)]
struct BenchArgs {
    /// k-bias | bias-variance | repeat-vs-k | consistency
    experiment: String,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Compute(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file_cfg = FileConfig::load(cli.config.as_deref())?;
    let seed = resolve_seed(cli.seed, &file_cfg);
    let parallel = cli.parallel.or(file_cfg.parallel);
    let out = cli.out.clone().or_else(|| file_cfg.out.clone());

    let pool = {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = parallel {
            if n == 0 {
                return Err(usage("--parallel must be at least 1"));
            }
            builder = builder.num_threads(n);
        }
        builder.build().map_err(|e| usage(format!("thread pool: {e}")))?
    };

    pool.install(|| match &cli.command {
        Command::Split(args) => cmd_split(args, &file_cfg, seed, out.as_deref()),
        Command::Score(args) => cmd_score(args, &file_cfg, seed, out.as_deref()),
        Command::Select(args) => cmd_select(args, &file_cfg, seed, out.as_deref()),
        Command::Tune(args) => cmd_tune(args, &file_cfg, seed, out.as_deref()),
        Command::Bench(args) => cmd_bench(args, &file_cfg, seed, out.as_deref()),
    })
}

/// Write a report envelope to stdout or the run directory; run
/// directories also get the resolved config as its own file.
fn emit_envelope(
    envelope: &ReportEnvelope,
    out: Option<&Path>,
    filename: &str,
) -> Result<(), CliError> {
    let text = report::to_canonical_json(envelope).map_err(compute)?;
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)
            .map_err(|e| usage(format!("cannot create {}: {e}", dir.display())))?;
        let cfg = report::to_canonical_json(&envelope.config).map_err(compute)?;
        std::fs::write(dir.join("config.json"), cfg)
            .map_err(|e| CliError::Compute(format!("cannot write config.json: {e}")))?;
    }
    emit(&text, out, filename)
}

fn emit(text: &str, out: Option<&Path>, filename: &str) -> Result<(), CliError> {
    match out {
        None => {
            print!("{text}");
            Ok(())
        }
        Some(dir) => {
            std::fs::create_dir_all(dir)
                .map_err(|e| usage(format!("cannot create {}: {e}", dir.display())))?;
            let path = dir.join(filename);
            std::fs::write(&path, text)
                .map_err(|e| CliError::Compute(format!("cannot write {}: {e}", path.display())))?;
            eprintln!("wrote {}", path.display());
            Ok(())
        }
    }
}

// The resolved config captures exactly what determines the artifact:
// the thread count is an execution detail and is deliberately excluded,
// keeping reports byte-identical for any --parallel value.
fn resolved_config(seed: u64, pieces: &[(&str, Value)]) -> Value {
    let mut obj = serde_json::Map::new();
    obj.insert("seed".into(), json!(seed));
    for (k, v) in pieces {
        obj.insert((*k).to_string(), v.clone());
    }
    Value::Object(obj)
}

fn parse_kind(flag: &Option<String>, cfg: &FileConfig, default: &str) -> Result<ScoreKind, CliError> {
    let name = flag.clone().or_else(|| cfg.kind.clone()).unwrap_or_else(|| default.to_string());
    name.parse::<ScoreKind>().map_err(|e| usage(e.to_string()))
}

fn cmd_split(
    args: &SplitArgs,
    cfg: &FileConfig,
    seed: u64,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let dataset = if args.dataset.is_empty() && cfg.dataset.is_none() {
        None
    } else {
        Some(args.dataset.resolve(cfg)?.0)
    };
    let (plan, _) = args.plan.resolve(cfg, dataset.as_ref(), seed)?;
    let text = report::to_canonical_json(&plan).map_err(compute)?;
    eprintln!("plan: {} with {} splits over n={}", plan.scheme, plan.splits.len(), plan.n);
    emit(&text, out, "plan.json")
}

fn cmd_score(
    args: &ScoreArgs,
    cfg: &FileConfig,
    seed: u64,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let (dataset, dataset_cfg) = args.dataset.resolve(cfg)?;
    let (plan, plan_cfg) = args.plan.resolve(cfg, Some(&dataset), seed)?;
    let models = resolve_models(args.model.as_slice(), cfg)?;
    let spec = match models.as_slice() {
        [one] => one.clone(),
        _ => return Err(usage("score takes exactly one --model")),
    };
    let kind = parse_kind(&args.kind, cfg, "squared_error")?;
    let bias_correct = args.bias_correct || cfg.bias_correct.unwrap_or(false);
    let threshold = args.threshold.or(cfg.threshold);
    let opts = ScoreOptions { bias_correction: bias_correct, threshold };

    let mut estimate = engine::score(&spec, &dataset, &plan, kind, &opts).map_err(compute)?;
    // Log-density scores over one full pass carry the effective
    // parameter count for free (one within-sample fit).
    engine::attach_effective_params(&mut estimate, &spec, &dataset).map_err(compute)?;
    let estimate = estimate;

    let resolved = resolved_config(
        seed,
        &[
            ("dataset", dataset_cfg),
            ("plan", plan_cfg),
            ("model", serde_json::to_value(&spec).map_err(|e| compute(e.into()))?),
            ("kind", json!(kind.name())),
            ("bias_correct", json!(bias_correct)),
            ("threshold", json!(threshold)),
        ],
    );
    let envelope = ReportEnvelope::new("score_estimate", &estimate, resolved)
        .map_err(compute)?
        .with_fingerprint(estimate.plan_fingerprint.clone());

    eprintln!(
        "score {} on {}: mean={:.6} se={:.6}{}",
        estimate.kind,
        plan.scheme,
        estimate.mean,
        estimate.se,
        estimate
            .corrected_mean
            .map(|c| format!(" corrected={c:.6}"))
            .unwrap_or_default()
    );

    if let Some(path) = &args.pointwise_csv {
        let pw = estimate
            .pointwise
            .as_ref()
            .ok_or_else(|| usage("--pointwise-csv needs a single-repetition pointwise plan"))?;
        report::write_pointwise_csv(pw, path).map_err(compute)?;
        eprintln!("wrote {}", path.display());
    } else if let Some(dir) = out {
        if let Some(pw) = &estimate.pointwise {
            std::fs::create_dir_all(dir)
                .map_err(|e| usage(format!("cannot create {}: {e}", dir.display())))?;
            report::write_pointwise_csv(pw, dir.join("pointwise.csv")).map_err(compute)?;
        }
    }

    emit_envelope(&envelope, out, "score.json")
}

fn cmd_select(
    args: &SelectArgs,
    cfg: &FileConfig,
    seed: u64,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let (dataset, dataset_cfg) = args.dataset.resolve(cfg)?;
    let (plan, plan_cfg) = args.plan.resolve(cfg, Some(&dataset), seed)?;
    let models = resolve_models(&args.models, cfg)?;
    if models.len() < 2 {
        return Err(usage("select needs at least 2 models"));
    }
    let default_kind =
        if dataset.task() == Task::Classification { "mcc" } else { "squared_error" };
    let kind = parse_kind(&args.kind, cfg, default_kind)?;
    let rule: SelectionRule = args
        .rule
        .clone()
        .or_else(|| cfg.rule.clone())
        .unwrap_or_else(|| "ose-mod".to_string())
        .parse()
        .map_err(|e: CvError| usage(e.to_string()))?;
    let threshold = args.threshold.or(cfg.threshold);
    let opts = ScoreOptions { bias_correction: false, threshold };

    let table = selection::score_table(&models, &dataset, &plan, kind, &opts).map_err(compute)?;
    let result = selection::select(&table, rule).map_err(compute)?;

    let resolved = resolved_config(
        seed,
        &[
            ("dataset", dataset_cfg),
            ("plan", plan_cfg),
            ("models", serde_json::to_value(&models).map_err(|e| compute(e.into()))?),
            ("kind", json!(kind.name())),
            ("rule", serde_json::to_value(rule).map_err(|e| compute(e.into()))?),
            ("threshold", json!(threshold)),
        ],
    );
    let envelope = ReportEnvelope::new("selection_result", &result, resolved)
        .map_err(compute)?
        .with_fingerprint(table.plan_fingerprint.clone());

    eprintln!(
        "best={} selected={} (rule {:?}, {} models{})",
        result.best,
        result.selected,
        rule,
        result.models.len(),
        if result.small_sample_warning { ", small-sample warning" } else { "" }
    );
    emit_envelope(&envelope, out, "selection.json")
}

fn cmd_tune(
    args: &TuneArgs,
    cfg: &FileConfig,
    seed: u64,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let (dataset, dataset_cfg) = args.dataset.resolve(cfg)?;
    let (plan, plan_cfg) = args.plan.resolve(cfg, Some(&dataset), seed)?;
    let default_kind =
        if dataset.task() == Task::Classification { "mcc" } else { "squared_error" };
    let kind = parse_kind(&args.kind, cfg, default_kind)?;
    let threshold = args.threshold.or(cfg.threshold).unwrap_or(0.5);

    if args.nested {
        let inner_k = args
            .inner_k
            .or(cfg.inner_k)
            .ok_or_else(|| usage("--inner-k is required with --nested"))?;
        let tune_threshold = args.tune_threshold || cfg.tune_threshold.unwrap_or(false);
        // Config-file candidates compare several tunable families on the
        // same outer folds; --model flags form a single candidate grid.
        let candidates: Vec<TuneCandidate> = if !cfg.candidates.is_empty() && args.models.is_empty()
        {
            cfg.candidates
                .iter()
                .map(|c| TuneCandidate { id: c.id.clone(), grid: c.grid.clone() })
                .collect()
        } else {
            vec![TuneCandidate { id: "grid".to_string(), grid: resolve_models(&args.models, cfg)? }]
        };
        if candidates.iter().any(|c| c.grid.is_empty()) {
            return Err(usage("every candidate needs a nonempty grid"));
        }
        let report_data = engine::tune_nested(
            &candidates,
            &dataset,
            &plan,
            inner_k,
            seed,
            kind,
            tune_threshold,
            threshold,
        )
        .map_err(compute)?;

        let candidate_summary: Vec<Value> = candidates
            .iter()
            .map(|c| json!({"id": c.id, "grid": c.grid}))
            .collect();
        let resolved = resolved_config(
            seed,
            &[
                ("dataset", dataset_cfg),
                ("plan", plan_cfg),
                ("candidates", Value::Array(candidate_summary)),
                ("kind", json!(kind.name())),
                ("inner_k", json!(inner_k)),
                ("tune_threshold", json!(tune_threshold)),
                ("threshold", json!(threshold)),
            ],
        );
        let envelope = ReportEnvelope::new("nested_tune_report", &report_data, resolved)
            .map_err(compute)?
            .with_fingerprint(report_data.outer_fingerprint.clone());
        for cand in &report_data.candidates {
            eprintln!(
                "nested CV candidate {}: mean={:.6} se={:.6}",
                cand.id, cand.mean, cand.se
            );
        }
        return emit_envelope(&envelope, out, "tune.json");
    }

    match args.family.as_deref().unwrap_or("elastic-net") {
        "elastic-net" | "elastic_net" => {}
        other => return Err(usage(format!("unknown tunable family `{other}`"))),
    }
    let alpha = args.alpha.or(cfg.alpha).unwrap_or(1.0);
    let n_lambda = args.n_lambda.or(cfg.n_lambda).unwrap_or(30);
    let rule: TuneRule = args
        .rule
        .clone()
        .or_else(|| cfg.tune_rule.clone())
        .unwrap_or_else(|| "one_se".to_string())
        .parse()
        .map_err(|e: CvError| usage(e.to_string()))?;
    let base = ElasticNetConfig { threshold, ..Default::default() };

    let report_data =
        engine::tune_lambda(&dataset, &plan, None, alpha, n_lambda, kind, &base)
            .map_err(compute)?;

    let resolved = resolved_config(
        seed,
        &[
            ("dataset", dataset_cfg),
            ("plan", plan_cfg),
            ("family", json!("elastic-net")),
            ("alpha", json!(alpha)),
            ("n_lambda", json!(n_lambda)),
            ("kind", json!(kind.name())),
            ("rule", serde_json::to_value(rule).map_err(|e| compute(e.into()))?),
            ("threshold", json!(threshold)),
        ],
    );
    let envelope = ReportEnvelope::new("lambda_tune_report", &report_data, resolved)
        .map_err(compute)?
        .with_fingerprint(report_data.plan_fingerprint.clone());

    eprintln!(
        "lambda path (alpha={alpha}): best={:.6e}, one-se={:.6e}, chosen({:?})={:.6e}",
        report_data.best_lambda,
        report_data.one_se_lambda,
        rule,
        report_data.chosen(rule)
    );
    if report_data.alpha_surrogate_used {
        eprintln!("warning: alpha = 0; lambda_max used the 0.001 surrogate");
    }
    emit_envelope(&envelope, out, "tune.json")
}

fn cmd_bench(
    args: &BenchArgs,
    cfg: &FileConfig,
    seed: u64,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let replicates = args.replicates.or(cfg.replicates);
    let report_data: ExperimentReport = match args.experiment.as_str() {
        "k-bias" => {
            let mut c = KBiasConfig { seed, ..Default::default() };
            if let Some(r) = replicates {
                c.replicates = r;
            }
            if let Some(n) = args.n {
                c.n = n;
            }
            run_k_bias_study(&c).map_err(compute)?
        }
        "bias-variance" => {
            let mut c = BiasVarianceConfig { seed, ..Default::default() };
            if let Some(r) = replicates {
                c.replicates = r;
            }
            if let Some(n) = args.n {
                c.n = n;
            }
            run_bias_variance(&c).map_err(compute)?
        }
        "repeat-vs-k" => {
            let mut c = RepeatVsKConfig { seed, ..Default::default() };
            if let Some(r) = replicates {
                c.replicates = r;
            }
            if let Some(n) = args.n {
                c.n = n;
            }
            run_repeat_vs_large_k(&c).map_err(compute)?
        }
        "consistency" => {
            let mut c = ConsistencyConfig { seed, ..Default::default() };
            if let Some(r) = replicates {
                c.replicates = r;
            }
            if let Some(n) = args.n {
                c.n_values = vec![n];
            }
            run_consistency_demo(&c).map_err(compute)?
        }
        other => {
            return Err(usage(format!(
                "unknown experiment `{other}` (available: k-bias, bias-variance, repeat-vs-k, consistency)"
            )))
        }
    };

    let resolved = resolved_config(
        seed,
        &[
            ("experiment", json!(args.experiment)),
            ("experiment_config", report_data.config.clone()),
        ],
    );
    let envelope =
        ReportEnvelope::new("experiment_report", &report_data, resolved).map_err(compute)?;

    let dir = out.unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)
        .map_err(|e| usage(format!("cannot create {}: {e}", dir.display())))?;
    let json_path = dir.join(format!("{}.json", args.experiment));
    let csv_path = dir.join(format!("{}.csv", args.experiment));
    report::write_report(&envelope, &json_path).map_err(compute)?;
    let cfg_text = report::to_canonical_json(&envelope.config).map_err(compute)?;
    std::fs::write(dir.join("config.json"), cfg_text)
        .map_err(|e| CliError::Compute(format!("cannot write config.json: {e}")))?;
    std::fs::write(&csv_path, report_data.tidy_csv())
        .map_err(|e| CliError::Compute(format!("cannot write {}: {e}", csv_path.display())))?;
    eprintln!(
        "experiment {}: {} cells -> {}, {}",
        report_data.experiment,
        report_data.cells.len(),
        json_path.display(),
        csv_path.display()
    );
    Ok(())
}
