//! Error type shared across the toolkit.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CvError>;

#[derive(Error, Debug)]
pub enum CvError {
    /// A precondition or configuration value was invalid.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// CSV ingestion failed (missing column, bad cell, missing value).
    #[error("csv: {0}")]
    Csv(String),

    /// The design matrix is rank deficient; the named columns are
    /// linearly dependent on earlier ones.
    #[error("rank-deficient design: collinear columns {columns:?}")]
    RankDeficient { columns: Vec<String> },

    /// Logistic fitting detected complete separation (coefficients diverge).
    #[error("complete separation detected after {iterations} IRLS iterations")]
    Separation { iterations: usize },

    /// An iterative fit did not converge within its iteration budget.
    #[error("{what} did not converge after {iterations} iterations")]
    NonConvergence { what: String, iterations: usize },

    /// A model failed to fit on one split of a plan.
    #[error("model fit failed on split {split}: {source}")]
    FitFailure {
        split: usize,
        #[source]
        source: Box<CvError>,
    },

    /// A loss was asked for a prediction field the model did not provide.
    #[error("prediction is missing the field `{field}` required by {kind}")]
    MissingPredictionField { field: &'static str, kind: String },

    /// A hat value of 1 makes the LOO shortcut undefined at that point.
    #[error("hat value is 1 at index {index}: the point determines its own fit")]
    SelfDeterminedPoint { index: usize },

    /// The model registry has no family under the requested name.
    #[error("unknown model family `{0}`")]
    UnknownFamily(String),

    /// The report on disk declares an unsupported schema version.
    #[error("report schema version mismatch: expected {expected}, found {found}")]
    SchemaVersion { expected: u32, found: u32 },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl CvError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        CvError::InvalidArgument(msg.into())
    }
}
