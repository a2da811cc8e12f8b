use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum IrrError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("row {row} has {found} fields, expected {expected}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("row {row}, column {column}: cannot parse {value:?} as a number")]
    ParseCell {
        row: usize,
        column: usize,
        value: String,
    },

    #[error("label column {0:?} not found")]
    UnknownColumn(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not positive definite ({0})")]
    NotPositiveDefinite(String),

    #[error("eigensolver did not converge within {0} iterations")]
    EigenNoConvergence(usize),

    #[error("target fraction {target} is unreachable (reachable range [{floor:.4}, 1])")]
    UnreachableTarget { target: f64, floor: f64 },

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),

    #[error("trial {trial}, method {method}: {source}")]
    Experiment {
        trial: usize,
        method: String,
        #[source]
        source: Box<IrrError>,
    },
}

pub type Result<T> = std::result::Result<T, IrrError>;

impl IrrError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        IrrError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        IrrError::Dimension(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        IrrError::InvalidArgument(msg.into())
    }
}
