use thiserror::Error;

use crate::active::ActiveRunRecord;
use crate::data::ClassLabel;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse classification used by the CLI to pick an exit code.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorKind {
    Data,
    Numerical,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("ingestion error at row {row}, column {column}: {message}")]
    Ingest {
        /// 1-based line number in the source file (header is line 1).
        row: usize,
        column: String,
        message: String,
    },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("class {class} has {available} points, {needed} required")]
    InsufficientClass {
        class: ClassLabel,
        needed: usize,
        available: usize,
    },

    #[error("feature length mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("training set must contain both classes (only {present} present)")]
    SingleClass { present: ClassLabel },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(
        "solver did not converge after {iterations} updates (max KKT violation {violation:.3e}, tolerance {tolerance:.1e})"
    )]
    NonConvergence {
        iterations: usize,
        violation: f64,
        tolerance: f64,
    },

    #[error("pool is empty")]
    EmptyPool,

    #[error("unknown point id {0}")]
    UnknownPoint(usize),

    #[error("label oracle failed after {} queries: {message}", partial.queries.len())]
    Oracle {
        message: String,
        partial: Box<ActiveRunRecord>,
    },

    #[error("LOOCV fold {fold} failed: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("trial {trial} failed: {source}")]
    Trial {
        trial: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{} trial(s) failed: {}", .0.len(), .0.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; "))]
    Experiment(Vec<Error>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("results document: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::NonConvergence { .. } => ErrorKind::Numerical,
            Error::Fold { source, .. } | Error::Trial { source, .. } => source.kind(),
            Error::Experiment(errors) => errors
                .iter()
                .map(Error::kind)
                .find(|k| *k != ErrorKind::Data)
                .unwrap_or(ErrorKind::Data),
            Error::Io(_) | Error::Serde(_) => ErrorKind::Io,
            _ => ErrorKind::Data,
        }
    }
}
