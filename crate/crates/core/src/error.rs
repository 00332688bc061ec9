use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}: row {row}: {message}")]
    Csv {
        path: PathBuf,
        row: usize,
        message: String,
    },

    #[error("invalid event specification: {0}")]
    EventSpec(String),

    #[error("labeling error: {0}")]
    Labeling(String),

    #[error("schema mismatch: expected {expected} features, got {actual}")]
    SchemaMismatch { expected: usize, actual: usize },

    #[error("dataset contains a single class ({0})")]
    SingleClass(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("detector not fitted: {0}")]
    NotFitted(String),

    #[error("unsupported format: {0}")]
    Format(String),

    #[error("{context}: {inner}")]
    Context { context: String, inner: Box<Error> },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Prefixes the error with where it happened.
    pub fn context(self, context: impl Into<String>) -> Self {
        Self::Context { context: context.into(), inner: Box::new(self) }
    }

    /// Innermost error, past any context layers.
    pub fn root(&self) -> &Error {
        match self {
            Self::Context { inner, .. } => inner.root(),
            e => e,
        }
    }
}
