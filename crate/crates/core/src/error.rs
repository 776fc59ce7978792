use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the clustering pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("value error at row {row}, column `{column}`: {message}")]
    Value {
        row: usize,
        column: String,
        message: String,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("oracle undefined: {0}")]
    Oracle(String),

    #[error("K={k}, fold {fold}: {source}")]
    Fold {
        k: usize,
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by the numerical computation rather than by
    /// malformed input or configuration.
    pub fn is_computation(&self) -> bool {
        match self {
            Error::Fit(_) => true,
            Error::Fold { source, .. } => source.is_computation(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
