use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the story engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("span error: {0}")]
    SpanError(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("empty prompt: {0}")]
    EmptyPrompt(String),

    #[error("prompt needs {needed} content tokens but only {available} fit")]
    Overflow { needed: usize, available: usize },

    #[error("index {index} out of range (valid: 1..={max})")]
    IndexOutOfRange { index: usize, max: usize },

    #[error("numeric failure: {0}")]
    NumericFailure(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("need at least 2 vectors, got {0}")]
    TooFewVectors(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}
