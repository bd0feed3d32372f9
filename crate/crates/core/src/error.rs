//! Error type shared by every module of the crate.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// An enclosure precondition failed (e.g. reciprocal of a set that
    /// touches zero). `dim` is the offending coordinate.
    #[error("domain error in dimension {dim}: {msg}")]
    Domain { dim: usize, msg: String },

    #[error("not found: {0}")]
    NotFound(String),

    #[error("numeric error at {stage} {index}: {msg}")]
    Numeric {
        stage: &'static str,
        index: usize,
        msg: String,
    },

    #[error("parse error at {location}: {msg}")]
    Parse { location: String, msg: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("resource limit exceeded: {0}")]
    Resource(String),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

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

    pub(crate) fn parse(location: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            msg: msg.into(),
        }
    }
}
