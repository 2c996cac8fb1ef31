//! Calibrated model selection over aligned score tables.
//!
//! Selecting the best-scoring model can overfit on estimation noise
//! alone. The modified one-standard-error rules pick the least complex
//! model whose score lies within a correlation-aware threshold of the
//! best: either `sigma_adj = sigma_best * sqrt(1 - rho)` or the paired
//! standard error of the score difference
//! `sigma_diff = sqrt(sigma_m^2 + sigma_best^2 - 2*rho*sigma_m*sigma_best)`.
//! Correlations come from the aligned loss vectors (pointwise for
//! partition plans, per-repetition for repeated plans), so shared
//! hard-to-predict points do not inflate the apparent variation
//! between models.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::engine::{self, ScoreEstimate, ScoreOptions};
use crate::error::{CvError, Result};
use crate::linalg;
use crate::losses::{Orientation, ScoreKind};
use crate::models::ModelSpec;
use crate::splitters::FoldPlan;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreEntry {
    pub model_id: String,
    pub complexity_rank: u32,
    pub estimate: ScoreEstimate,
}

/// Scores of M models over the same plan, with aligned loss vectors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreTable {
    pub kind: ScoreKind,
    pub orientation: Orientation,
    pub paired: bool,
    pub plan_fingerprint: String,
    pub n: usize,
    pub entries: Vec<ScoreEntry>,
}

impl ScoreTable {
    /// Assemble a table from per-model estimates, checking alignment.
    pub fn from_entries(n: usize, entries: Vec<ScoreEntry>) -> Result<Self> {
        let first = entries.first().ok_or_else(|| CvError::invalid("empty score table"))?;
        let kind = first.estimate.kind;
        let fingerprint = first.estimate.plan_fingerprint.clone();
        let len = first.estimate.aligned_values().len();
        for e in &entries {
            if e.estimate.kind != kind {
                return Err(CvError::invalid("mixed score kinds in one table"));
            }
            if e.estimate.plan_fingerprint != fingerprint {
                return Err(CvError::invalid(format!(
                    "model `{}` was scored on a different plan",
                    e.model_id
                )));
            }
            if e.estimate.aligned_values().len() != len {
                return Err(CvError::invalid("misaligned score vectors"));
            }
        }
        Ok(ScoreTable {
            kind,
            orientation: kind.orientation(),
            paired: len >= 2,
            plan_fingerprint: fingerprint,
            n,
            entries,
        })
    }

    pub fn aligned(&self, idx: usize) -> &[f64] {
        self.entries[idx].estimate.aligned_values()
    }

    /// Index of the best model by mean score (orientation-aware; ties go
    /// to the earlier entry).
    pub fn best_index(&self) -> usize {
        let mut best = 0;
        for i in 1..self.entries.len() {
            if self.entries[i].estimate.utility_mean > self.entries[best].estimate.utility_mean {
                best = i;
            }
        }
        best
    }
}

/// Score every spec over the same plan and assemble the aligned table.
pub fn score_table(
    specs: &[ModelSpec],
    data: &Dataset,
    plan: &FoldPlan,
    kind: ScoreKind,
    opts: &ScoreOptions,
) -> Result<ScoreTable> {
    if specs.is_empty() {
        return Err(CvError::invalid("no models to score"));
    }
    let registry = crate::models::ModelRegistry::builtin();
    let mut entries = Vec::with_capacity(specs.len());
    for spec in specs {
        let estimate = engine::score(spec, data, plan, kind, opts).map_err(|e| {
            CvError::invalid(format!("model `{}`: {e}", spec.label()))
        })?;
        let complexity_rank = match spec.complexity_rank {
            Some(r) => r,
            None => registry.build(spec)?.nominal_params(data) as u32,
        };
        entries.push(ScoreEntry { model_id: spec.label(), complexity_rank, estimate });
    }
    ScoreTable::from_entries(data.n(), entries)
}

/// Pearson correlation of each model's aligned loss vector with the best
/// model's. Exactly identical vectors give 1; any other zero-variance
/// case gives 0.
pub fn correlation_with_best(table: &ScoreTable) -> Result<Vec<f64>> {
    if !table.paired {
        return Err(CvError::invalid(
            "correlations need paired score vectors of length >= 2",
        ));
    }
    let best = table.best_index();
    let best_vals = table.aligned(best);
    Ok((0..table.entries.len())
        .map(|m| linalg::pearson(table.aligned(m), best_vals))
        .collect())
}

/// Correlation-adjusted standard errors:
/// `sigma_m = sigma_best * sqrt(1 - rho_best_m)`.
pub fn sigma_adj(table: &ScoreTable) -> Result<Vec<f64>> {
    let rho = correlation_with_best(table)?;
    let sigma_best = table.entries[table.best_index()].estimate.se;
    Ok(rho.iter().map(|r| sigma_best * (1.0 - r).max(0.0).sqrt()).collect())
}

/// Paired standard error of each model's score difference from the best:
/// `sqrt(sigma_m^2 + sigma_best^2 - 2 rho sigma_m sigma_best)`.
pub fn sigma_diff(table: &ScoreTable) -> Result<Vec<f64>> {
    let rho = correlation_with_best(table)?;
    let best = table.best_index();
    let sigma_best = table.entries[best].estimate.se;
    Ok(table
        .entries
        .iter()
        .zip(rho.iter())
        .map(|(e, r)| {
            let sm = e.estimate.se;
            (sm * sm + sigma_best * sigma_best - 2.0 * r * sm * sigma_best).max(0.0).sqrt()
        })
        .collect())
}

/// Full M×M correlation matrix of the aligned loss vectors (used for
/// model-enlargement diagnostics in reports).
pub fn correlation_matrix(table: &ScoreTable) -> Vec<Vec<f64>> {
    let m = table.entries.len();
    let mut out = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in 0..m {
            out[i][j] =
                if i == j { 1.0 } else { linalg::pearson(table.aligned(i), table.aligned(j)) };
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionRule {
    BestScore,
    OseModified,
    OseDiff,
}

impl std::str::FromStr for SelectionRule {
    type Err = CvError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "best" | "best_score" => Ok(SelectionRule::BestScore),
            "ose-mod" | "ose_modified" | "ose" => Ok(SelectionRule::OseModified),
            "ose-diff" | "ose_diff" => Ok(SelectionRule::OseDiff),
            other => Err(CvError::invalid(format!("unknown selection rule `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSummary {
    pub id: String,
    pub mean: f64,
    pub se: f64,
    pub sigma_adj: f64,
    pub sigma_diff: f64,
    /// Performance gap to the best model in the higher-is-better view
    /// (0 for the best model itself).
    pub delta: f64,
    pub complexity: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionResult {
    pub rule: SelectionRule,
    pub kind: ScoreKind,
    pub orientation: Orientation,
    pub best: String,
    pub selected: String,
    pub models: Vec<ModelSummary>,
    pub correlation_matrix: Vec<Vec<f64>>,
    /// Standard-error estimates are unreliable for small n or
    /// near-tied models; surfaced as a caution, not a behaviour change.
    pub small_sample_warning: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tie_break_note: Option<String>,
    pub plan_fingerprint: String,
}

/// Apply a selection rule to a score table.
///
/// `best_score` takes the argmax of mean utility. The OSE rules restrict
/// to models no more complex than the best and pick the least complex
/// one whose performance gap is within its threshold (`sigma_adj` or
/// `sigma_diff`); rank ties break by better mean, then table order.
pub fn select(table: &ScoreTable, rule: SelectionRule) -> Result<SelectionResult> {
    if table.entries.is_empty() {
        return Err(CvError::invalid("empty score table"));
    }
    let m = table.entries.len();
    let best = table.best_index();
    let best_util = table.entries[best].estimate.utility_mean;

    let (adj, diff) = if table.paired && m >= 1 {
        (sigma_adj(table)?, sigma_diff(table)?)
    } else {
        (vec![0.0; m], vec![0.0; m])
    };

    let deltas: Vec<f64> =
        table.entries.iter().map(|e| best_util - e.estimate.utility_mean).collect();

    let mut tie_break_note = None;
    let selected = match rule {
        SelectionRule::BestScore => best,
        SelectionRule::OseModified | SelectionRule::OseDiff => {
            let thresholds = if rule == SelectionRule::OseModified { &adj } else { &diff };
            let best_rank = table.entries[best].complexity_rank;
            let mut chosen = best;
            let mut tied = false;
            for (i, entry) in table.entries.iter().enumerate() {
                if entry.complexity_rank > best_rank || deltas[i] > thresholds[i] {
                    continue;
                }
                let cur = &table.entries[chosen];
                let simpler = entry.complexity_rank < cur.complexity_rank;
                let same_rank = entry.complexity_rank == cur.complexity_rank;
                if simpler {
                    chosen = i;
                    tied = false;
                } else if same_rank && i != chosen {
                    // Rank ties break by better mean, then model id.
                    tied = true;
                    let better_mean = entry.estimate.utility_mean > cur.estimate.utility_mean;
                    let equal_mean = entry.estimate.utility_mean == cur.estimate.utility_mean;
                    if better_mean || (equal_mean && entry.model_id < cur.model_id) {
                        chosen = i;
                    }
                }
            }
            if tied {
                tie_break_note = Some(
                    "complexity-rank tie broken by better mean, then table order".to_string(),
                );
            }
            chosen
        }
    };

    let models: Vec<ModelSummary> = table
        .entries
        .iter()
        .enumerate()
        .map(|(i, e)| ModelSummary {
            id: e.model_id.clone(),
            mean: e.estimate.mean,
            se: e.estimate.se,
            sigma_adj: adj[i],
            sigma_diff: diff[i],
            delta: deltas[i],
            complexity: e.complexity_rank,
        })
        .collect();

    // The normal approximation is shaky for n < 100, and for log-density
    // scores when the best models are near-tied (total gap below ~4).
    let log_density_kind = matches!(
        table.kind,
        ScoreKind::Loss(crate::losses::LossKind::GaussianLogDensity)
            | ScoreKind::Loss(crate::losses::LossKind::LogLoss)
    );
    let near_tied = log_density_kind
        && deltas
            .iter()
            .enumerate()
            .any(|(i, d)| i != best && d * (table.n as f64) < 4.0);
    let small_sample_warning = table.n < 100 || near_tied;

    Ok(SelectionResult {
        rule,
        kind: table.kind,
        orientation: table.orientation,
        best: table.entries[best].model_id.clone(),
        selected: table.entries[selected].model_id.clone(),
        models,
        correlation_matrix: correlation_matrix(table),
        small_sample_warning,
        tie_break_note,
        plan_fingerprint: table.plan_fingerprint.clone(),
    })
}
