use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("non-numeric cell {value:?} at row {row}, column {column:?}")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },

    #[error("target column {0:?} not found")]
    MissingTargetColumn(String),

    #[error("invalid target column: {0}")]
    InvalidTarget(String),

    #[error("class {class} has {count} rows, at least {required} required")]
    TooFewPerClass {
        class: u8,
        count: usize,
        required: usize,
    },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("every feature was dropped by the correlation filter (threshold {0})")]
    AllFeaturesDropped(f64),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid weight vector: {0}")]
    InvalidWeights(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("nothing to optimize: {0}")]
    NothingToOptimize(String),

    #[error("{model} did not converge within {iterations} iterations")]
    NonConvergence {
        model: &'static str,
        iterations: usize,
    },

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("degenerate split: {0}")]
    DegenerateSplit(String),

    #[error("fold {fold} contains a single class")]
    SingleClassFold { fold: usize },

    #[error("instance is outside the feature bounds on feature {feature:?}")]
    OutOfBounds { feature: String },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("not enough records of class {class}: need {needed}, have {available}")]
    NotEnoughNeighbors {
        class: u8,
        needed: usize,
        available: usize,
    },

    #[error("unsupported model document version {0}")]
    UnsupportedVersion(u32),

    #[error("missing baseline report for model {0:?}")]
    MissingBaseline(String),
}

pub type Result<T> = std::result::Result<T, Error>;
