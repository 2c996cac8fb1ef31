//! Cross-validation score estimation and calibrated model selection.
//!
//! The crate estimates out-of-sample model scores by data splitting and
//! turns those estimates into defensible selections:
//!
//! - [`data`] — dataset representation, CSV ingestion, and synthetic
//!   generators for the bundled demo problems.
//! - [`splitters`] — reproducible train/test plans: K-fold, repeated
//!   K-fold, LOO, leave-d-out, LOGO, stratified, blocked, and nested.
//! - [`losses`] — pointwise losses and scores with explicit optimisation
//!   orientation, plus the binary confusion matrix and its metrics.
//! - [`models`] — built-in model families behind a uniform fit/predict
//!   trait, registered by name: OLS, IRLS logistic regression,
//!   elastic-net penalised regression, and nonlinear growth curves.
//! - [`engine`] — the estimator core: CV scoring, Burman bias correction,
//!   effective parameter counts, the hat-matrix LOO shortcut, and
//!   hyperparameter tuning (lambda paths and nested CV).
//! - [`selection`] — score tables, correlation-adjusted standard errors,
//!   paired-difference standard errors, and the modified
//!   one-standard-error selection rules.
//! - [`experiments`] — a Monte Carlo harness for the bias/variance and
//!   choice-of-K studies.
//! - [`report`] — canonical JSON/CSV serialization shared by the CLI.
//!
//! All randomness is driven by explicit integer seeds and every
//! published artifact is reproducible byte-for-byte from its inputs.
//!
//! # Example
//!
//! Score two nested linear models on shared leave-one-out folds and let
//! the modified one-standard-error rule arbitrate:
//!
//! ```
//! use cvselect_core::{data, engine, losses, models, selection, splitters};
//!
//! let dataset = data::simulate_linear_gaussian(60, &[1.0, 0.0, 0.0], 1.0, 7)?;
//! let plan = splitters::make_loo(dataset.n())?;
//! let specs = vec![
//!     models::ModelSpec::new("ols").with_features(vec![0]).with_id("small"),
//!     models::ModelSpec::new("ols").with_features(vec![0, 1, 2]).with_id("full"),
//! ];
//! let table = selection::score_table(
//!     &specs,
//!     &dataset,
//!     &plan,
//!     losses::ScoreKind::Loss(losses::LossKind::SquaredError),
//!     &engine::ScoreOptions::default(),
//! )?;
//! let result = selection::select(&table, selection::SelectionRule::OseModified)?;
//! assert!(result.models.len() == 2);
//! # Ok::<(), cvselect_core::CvError>(())
//! ```

// Indexed loops over matched vectors dominate the numeric kernels;
// iterator-chain rewrites obscure the math without changing the codegen.
#![allow(clippy::needless_range_loop)]

pub mod data;
pub mod engine;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod losses;
pub mod models;
pub mod report;
pub mod selection;
pub mod splitters;

pub use error::{CvError, Result};
