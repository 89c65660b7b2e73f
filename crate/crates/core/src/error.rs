use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the noise-treatment pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid parameters (rates, counts, dimensions, policies).
    #[error("configuration error: {0}")]
    Config(String),

    /// A JSONL line that is not valid JSON or lacks required fields.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// A syntactically valid record that violates the record schema.
    #[error("schema error at line {line}: {message}")]
    Schema { line: usize, message: String },

    /// An operation was called with inputs it cannot accept.
    #[error("usage error: {0}")]
    Usage(String),

    /// Mixture fitting could not proceed.
    #[error("fit error: {0}")]
    Fit(String),

    /// Epochs or active sets arrived out of order.
    #[error("sequencing error: {0}")]
    Sequencing(String),

    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error at {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("JSON error at {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv {
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

    /// True for errors caused by bad user input rather than a failed run.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Usage(_) | Error::Parse { .. } | Error::Schema { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
