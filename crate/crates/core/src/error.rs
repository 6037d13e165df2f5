use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("degenerate point cloud `{id}`: {reason}")]
    DegenerateCloud { id: String, reason: String },

    #[error("invalid point cloud `{id}`: {reason}")]
    InvalidCloud { id: String, reason: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("unknown {kind} `{token}`")]
    Unknown { kind: &'static str, token: String },

    #[error("action `{action}`: {reason}")]
    InsufficientData { action: String, reason: String },

    #[error("invalid training data: {0}")]
    TrainingData(String),

    #[error("training diverged at epoch {epoch}, batch {batch}: loss = {loss}")]
    Diverged {
        epoch: usize,
        batch: usize,
        loss: f64,
    },

    #[error("model for `{action}` has no anchor")]
    MissingAnchor { action: String },

    #[error("model mismatch: {0}")]
    ModelMismatch(String),

    #[error("evaluation misaligned: {0}")]
    Misaligned(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("model file {path}: {source}")]
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

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}
