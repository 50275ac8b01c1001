use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = PceError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum PceError {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed image at byte {offset}: {reason}")]
    Format { offset: usize, reason: String },

    #[error("unsupported image: {0}")]
    Unsupported(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("uninitialized state: {0}")]
    Uninitialized(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

impl PceError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        PceError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        PceError::Shape(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        PceError::Config(msg.into())
    }
}
