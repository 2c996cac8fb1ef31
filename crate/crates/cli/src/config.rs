//! Run configuration: JSON config file with flag overrides (flags win).
//!
//! The resolved configuration — seed included, never implicit — is
//! embedded in every report envelope so an archived run directory is
//! self-describing.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use cvselect_core::data::{self, CsvSchema, Dataset, Task};
use cvselect_core::models::ModelSpec;
use cvselect_core::splitters::{self, FoldPlan};

use crate::{usage, CliError};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub dataset: Option<DatasetConfig>,
    pub models: Vec<ModelSpec>,
    /// Named tuning candidates for nested CV; each grid is tuned
    /// independently and scored on the same outer folds.
    pub candidates: Vec<CandidateConfig>,
    pub plan: Option<PlanConfig>,
    pub kind: Option<String>,
    pub rule: Option<String>,
    pub tune_rule: Option<String>,
    pub threshold: Option<f64>,
    pub bias_correct: Option<bool>,
    pub seed: Option<u64>,
    pub parallel: Option<usize>,
    pub out: Option<PathBuf>,
    pub alpha: Option<f64>,
    pub n_lambda: Option<usize>,
    pub inner_k: Option<usize>,
    pub tune_threshold: Option<bool>,
    pub replicates: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub path: String,
    #[serde(default)]
    pub schema: Option<CsvSchema>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidateConfig {
    pub id: String,
    pub grid: Vec<ModelSpec>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanConfig {
    pub scheme: Option<String>,
    pub k: Option<usize>,
    pub repeats: Option<usize>,
    pub d: Option<usize>,
    pub iterations: Option<usize>,
    pub h: Option<f64>,
    pub block_base: Option<String>,
    pub n: Option<usize>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(FileConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| usage(format!("cannot read config {}: {e}", p.display())))?;
                serde_json::from_str(&text)
                    .map_err(|e| usage(format!("bad config {}: {e}", p.display())))
            }
        }
    }
}

/// Seed resolution order: flag, config file, CVSELECT_SEED, 0.
pub fn resolve_seed(flag: Option<u64>, cfg: &FileConfig) -> u64 {
    flag.or(cfg.seed)
        .or_else(|| std::env::var("CVSELECT_SEED").ok().and_then(|v| v.parse().ok()))
        .unwrap_or(0)
}

/// Dataset flags; `demo:<name>` paths resolve to the bundled generators.
#[derive(Debug, Clone, clap::Args, Default)]
pub struct DatasetArgs {
    /// CSV path or demo:<linear|classification|growth>
    #[arg(long)]
    pub data: Option<String>,
    /// Response column name
    #[arg(long)]
    pub response: Option<String>,
    /// Comma-separated feature column names (default: demo schema)
    #[arg(long, value_delimiter = ',')]
    pub features: Option<Vec<String>>,
    #[arg(long, value_parser = ["regression", "classification"])]
    pub task: Option<String>,
    #[arg(long)]
    pub groups_column: Option<String>,
    #[arg(long)]
    pub strata_column: Option<String>,
    /// Comma-separated coordinate column names (for blocked CV)
    #[arg(long, value_delimiter = ',')]
    pub coord_columns: Option<Vec<String>>,
}

impl DatasetArgs {
    pub fn is_empty(&self) -> bool {
        self.data.is_none()
    }

    pub fn resolve(&self, cfg: &FileConfig) -> Result<(Dataset, Value), CliError> {
        let (path, schema_cfg) = match (&self.data, &cfg.dataset) {
            (Some(p), _) => (p.clone(), None),
            (None, Some(dc)) => (dc.path.clone(), dc.schema.clone()),
            (None, None) => return Err(usage("no dataset: pass --data or a config file")),
        };

        if let Some(name) = path.strip_prefix("demo:") {
            let dataset = data::demo_dataset(name).map_err(|e| usage(e.to_string()))?;
            let resolved = serde_json::json!({ "path": path });
            return Ok((dataset, resolved));
        }

        let schema = match schema_cfg {
            Some(s) => s,
            None => self.schema_from_flags(&path)?,
        };
        let dataset = data::load_csv(&path, &schema).map_err(|e| usage(e.to_string()))?;
        let resolved = serde_json::json!({ "path": path, "schema": schema });
        Ok((dataset, resolved))
    }

    fn schema_from_flags(&self, path: &str) -> Result<CsvSchema, CliError> {
        let response = self
            .response
            .clone()
            .ok_or_else(|| usage("--response is required for CSV datasets"))?;
        let task = match self.task.as_deref() {
            Some("classification") => Task::Classification,
            Some("regression") | None => Task::Regression,
            Some(other) => return Err(usage(format!("unknown task `{other}`"))),
        };
        let features = match &self.features {
            Some(f) => f.clone(),
            None => {
                // Default: every header column not otherwise assigned.
                let text = std::fs::read_to_string(path)
                    .map_err(|e| usage(format!("cannot read {path}: {e}")))?;
                let header = text
                    .lines()
                    .next()
                    .ok_or_else(|| usage("empty CSV"))?
                    .split(',')
                    .map(|c| c.trim().to_string());
                header
                    .filter(|c| {
                        *c != response
                            && Some(c) != self.groups_column.as_ref()
                            && Some(c) != self.strata_column.as_ref()
                            && !self
                                .coord_columns
                                .as_ref()
                                .is_some_and(|cols| cols.contains(c))
                    })
                    .collect()
            }
        };
        Ok(CsvSchema {
            response_column: response,
            feature_columns: features,
            group_column: self.groups_column.clone(),
            strata_column: self.strata_column.clone(),
            coord_columns: self.coord_columns.clone(),
            task,
        })
    }
}

/// Splitting-plan flags shared by the scoring commands.
#[derive(Debug, Clone, clap::Args, Default)]
pub struct PlanArgs {
    /// kfold | repeated-kfold | loo | leave-d-out | logo | stratified-kfold | blocked
    #[arg(long)]
    pub scheme: Option<String>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Blocking distance for blocked CV
    #[arg(long)]
    pub h: Option<f64>,
    /// Base scheme wrapped by blocked CV: kfold or loo
    #[arg(long)]
    pub block_base: Option<String>,
    /// Dataset size for plans built without a dataset (split command)
    #[arg(long)]
    pub n: Option<usize>,
}

impl PlanArgs {
    fn merged(&self, cfg: &FileConfig) -> PlanConfig {
        let base = cfg.plan.clone().unwrap_or_default();
        PlanConfig {
            scheme: self.scheme.clone().or(base.scheme),
            k: self.k.or(base.k),
            repeats: self.repeats.or(base.repeats),
            d: self.d.or(base.d),
            iterations: self.iterations.or(base.iterations),
            h: self.h.or(base.h),
            block_base: self.block_base.clone().or(base.block_base),
            n: self.n.or(base.n),
        }
    }

    /// Build the plan. `dataset` provides n, groups, strata, and coords;
    /// the split command may instead pass an explicit --n.
    pub fn resolve(
        &self,
        cfg: &FileConfig,
        dataset: Option<&Dataset>,
        seed: u64,
    ) -> Result<(FoldPlan, Value), CliError> {
        let plan_cfg = self.merged(cfg);
        let scheme = plan_cfg.scheme.clone().unwrap_or_else(|| "kfold".to_string());
        let n = match (dataset, plan_cfg.n) {
            (Some(d), _) => d.n(),
            (None, Some(n)) => n,
            (None, None) => return Err(usage("--n is required when no dataset is given")),
        };
        let need = |v: Option<usize>, flag: &str| {
            v.ok_or_else(|| usage(format!("--{flag} is required for scheme `{scheme}`")))
        };

        let plan = match scheme.as_str() {
            "kfold" => splitters::make_kfold(n, need(plan_cfg.k, "k")?, seed),
            "repeated-kfold" => splitters::make_repeated_kfold(
                n,
                need(plan_cfg.k, "k")?,
                need(plan_cfg.repeats, "repeats")?,
                seed,
            ),
            "loo" => splitters::make_loo(n),
            "leave-d-out" => splitters::make_leave_d_out(
                n,
                need(plan_cfg.d, "d")?,
                plan_cfg.iterations.unwrap_or(n),
                seed,
            ),
            "logo" => {
                let groups = dataset
                    .and_then(|d| d.groups.as_ref())
                    .ok_or_else(|| usage("scheme `logo` needs a dataset with --groups-column"))?;
                splitters::make_logo(groups)
            }
            "stratified-kfold" => {
                let strata = dataset
                    .and_then(|d| d.strata.as_ref())
                    .ok_or_else(|| {
                        usage("scheme `stratified-kfold` needs a dataset with --strata-column")
                    })?;
                splitters::make_stratified_kfold(need(plan_cfg.k, "k")?, strata, seed)
            }
            "blocked" => {
                let ds = dataset
                    .ok_or_else(|| usage("scheme `blocked` needs a dataset with --coord-columns"))?;
                let coords = ds.coords.as_ref().ok_or_else(|| {
                    usage("scheme `blocked` needs a dataset with --coord-columns")
                })?;
                let h = plan_cfg
                    .h
                    .ok_or_else(|| usage("--h is required for scheme `blocked`"))?;
                let base = match plan_cfg.block_base.as_deref().unwrap_or("loo") {
                    "loo" => splitters::make_loo(n),
                    "kfold" => splitters::make_kfold(n, need(plan_cfg.k, "k")?, seed),
                    other => return Err(usage(format!("unknown block base `{other}`"))),
                }
                .map_err(|e| usage(e.to_string()))?;
                let blocked = splitters::make_blocked(coords, &base, h)
                    .map_err(|e| usage(e.to_string()))?;
                if blocked.dropped_splits > 0 {
                    eprintln!(
                        "warning: blocking dropped {} split(s) with empty training sets",
                        blocked.dropped_splits
                    );
                }
                Ok(blocked.plan)
            }
            other => return Err(usage(format!("unknown scheme `{other}`"))),
        }
        .map_err(|e| usage(e.to_string()))?;

        let resolved = serde_json::to_value(&plan_cfg).expect("plan config serializes");
        let mut resolved = resolved;
        resolved["scheme"] = Value::String(scheme);
        resolved["n"] = Value::from(n);
        Ok((plan, resolved))
    }
}

/// Models from repeated `--model` JSON flags, falling back to the config
/// file's list.
pub fn resolve_models(flags: &[String], cfg: &FileConfig) -> Result<Vec<ModelSpec>, CliError> {
    if flags.is_empty() {
        if cfg.models.is_empty() {
            return Err(usage("no models: pass --model JSON or list them in the config"));
        }
        return Ok(cfg.models.clone());
    }
    flags
        .iter()
        .map(|text| {
            serde_json::from_str::<ModelSpec>(text)
                .map_err(|e| usage(format!("bad --model `{text}`: {e}")))
        })
        .collect()
}
