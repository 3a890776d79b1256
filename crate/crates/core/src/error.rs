use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the tomography pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("basis of order {order} lost orthonormality: gram deviation {deviation:.3e} exceeds {limit:.1e}")]
    BasisConditioning {
        order: usize,
        deviation: f64,
        limit: f64,
    },

    #[error("fast marching stalled after accepting {accepted} of {total} nodes")]
    MarchingStalled { accepted: usize, total: usize },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed {what}: {detail}")]
    Format { what: String, detail: String },

    #[error("stage `{stage}` has not been run: {detail}")]
    MissingStage { stage: String, detail: String },

    #[error("configuration mismatch with stage `{stage}`: key `{key}` was {recorded}, now {current}")]
    ConfigMismatch {
        stage: String,
        key: String,
        recorded: String,
        current: String,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(what: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Format {
            what: what.into(),
            detail: detail.into(),
        }
    }
}
