//! Compare candidate models on shared folds and apply the calibrated
//! selection rules.
//!
//! ```sh
//! cargo run --example model_selection
//! ```

use cvselect_core::engine::ScoreOptions;
use cvselect_core::losses::{MetricKind, ScoreKind};
use cvselect_core::models::ModelSpec;
use cvselect_core::selection::{self, SelectionRule};
use cvselect_core::{data, splitters, Result};

fn main() -> Result<()> {
    let dataset = data::demo::classification();
    println!("dataset: {}", data::describe(&dataset));

    // The same repeated 10-fold splits score every candidate, so the
    // per-repetition MCC vectors are paired across models.
    let plan = splitters::make_repeated_kfold(dataset.n(), 10, 20, 1)?;
    let specs = vec![
        ModelSpec::new("logistic").with_features(vec![0]).with_id("x1"),
        ModelSpec::new("logistic").with_features(vec![0, 1]).with_id("x1+x2"),
        ModelSpec::new("logistic").with_features(vec![0, 1, 2]).with_id("x1+x2+x3"),
        ModelSpec::new("logistic").with_features((0..10).collect::<Vec<_>>()).with_id("all"),
    ];

    let table = selection::score_table(
        &specs,
        &dataset,
        &plan,
        ScoreKind::Metric(MetricKind::Mcc),
        &ScoreOptions { bias_correction: false, threshold: Some(0.5) },
    )?;

    println!("\n{:<10} {:>6} {:>8} {:>8} {:>10} {:>10}", "model", "rank", "mcc", "se", "sigma_adj", "delta");
    let result = selection::select(&table, SelectionRule::OseModified)?;
    for m in &result.models {
        println!(
            "{:<10} {:>6} {:>8.4} {:>8.4} {:>10.4} {:>10.4}",
            m.id, m.complexity, m.mean, m.se, m.sigma_adj, m.delta
        );
    }
    println!("\nbest by mean score : {}", result.best);
    println!("modified OSE pick  : {}", result.selected);
    if result.small_sample_warning {
        println!("(small-sample warning: treat the standard errors with care)");
    }
    Ok(())
}
