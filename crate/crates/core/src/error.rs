//! Error types shared across the crate.

use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// All failure modes surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Input file or row does not match the expected schema.
    #[error("schema error: {0}")]
    Schema(String),

    /// Timestamps are not strictly increasing.
    #[error("timestamp ordering error at row {row}: {prev:?} >= {next:?}")]
    Ordering {
        row: usize,
        prev: String,
        next: String,
    },

    /// No usable rows remain.
    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    /// Too few samples for the requested operation.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// A temporal split would leave one side empty or the fraction is invalid.
    #[error("split error: {0}")]
    Split(String),

    /// Subsequence window is invalid for the given series.
    #[error("window error: {0}")]
    Window(String),

    /// Caller violated an API contract (shape, finiteness, symmetry, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Problem cannot be posed with the given sizes (e.g. more clusters than samples).
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// Requested mode is intentionally not supported.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// Grid search could not be carried out.
    #[error("tuning error: {0}")]
    Tuning(String),

    /// A conditional subset of samples is empty.
    #[error("subset error: {0}")]
    Subset(String),

    /// Regression system has more unknowns than equations.
    #[error("underdetermined: {0}")]
    Underdetermined(String),

    /// Persisted model was written by an incompatible schema.
    #[error("model schema version mismatch: expected {expected}, found {found}")]
    SchemaVersion { expected: u32, found: u32 },

    /// A pipeline stage failed; wraps the underlying error with the stage name.
    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Wrap an error with the pipeline stage it occurred in.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
