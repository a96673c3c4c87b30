use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value produced by `{primitive}`")]
    NonFinite { primitive: &'static str },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid camera: {0}")]
    InvalidCamera(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed {what}: {reason}")]
    Format { what: &'static str, reason: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("training diverged at iteration {iteration}: non-finite {term}")]
    TrainingDiverged { iteration: usize, term: String },

    #[error("variational fit diverged at step {step}")]
    VariationalDiverged { step: usize },

    #[error("every chain diverged: {0}")]
    AllChainsDiverged(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Format {
            what,
            reason: reason.into(),
        }
    }
}
