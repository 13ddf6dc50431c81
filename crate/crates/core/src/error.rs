use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: field `{field}`: {message}")]
    Parse { path: PathBuf, line: usize, field: String, message: String },

    #[error("duplicate record id `{0}`")]
    DuplicateId(String),

    #[error("record `{id}`: edge endpoint out of range ({src} -> {dst}, {count} instructions)")]
    EdgeOutOfRange { id: String, src: usize, dst: usize, count: usize },

    #[error("invalid record `{id}`: {message}")]
    InvalidRecord { id: String, message: String },

    #[error("k must be >= 1")]
    ZeroHop,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("unknown label `{0}`")]
    UnknownLabel(String),

    #[error("degenerate projection")]
    DegenerateProjection,

    #[error("non-finite gradient in parameter `{0}`")]
    NonFiniteGradient(String),

    #[error("non-finite loss: {0}")]
    NonFiniteLoss(f64),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("leakage: {0}")]
    Leakage(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
