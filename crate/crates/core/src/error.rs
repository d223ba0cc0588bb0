use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors shared across the evaluation modules.
///
/// Judge-specific failures live in [`crate::judge::JudgeError`] because they
/// are reported per item rather than aborting a run.
#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid relevance label {0}; expected 0, 1 or 2")]
    InvalidLabel(i64),

    #[error("invalid value for {field}: {message}")]
    InvalidValue {
        field: &'static str,
        message: String,
    },

    #[error("annotation protocol violation for ({query_id}, {item_id}): {message}")]
    Protocol {
        query_id: String,
        item_id: String,
        message: String,
    },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("missing label for ({query_id}, {item_id})")]
    MissingLabel { query_id: String, item_id: String },

    #[error("experiment {experiment_id}: {message}")]
    Experiment {
        experiment_id: String,
        message: String,
    },

    #[error("coverage mismatch: {0}")]
    Coverage(String),

    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(field: &'static str, message: impl Into<String>) -> Self {
        Error::InvalidValue {
            field,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
