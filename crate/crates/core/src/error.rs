use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("attention row {row} is fully masked")]
    DegenerateRow { row: usize },

    #[error("{path}:{line}: {msg}")]
    Schema { path: PathBuf, line: usize, msg: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("checkpoint does not match model:\n{0}")]
    CheckpointMismatch(String),

    #[error("config: {0}")]
    Config(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch}; diagnostics in {dump}")]
    NonFiniteLoss { epoch: usize, batch: usize, dump: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable code printed by the command line front end.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Shape { .. } => "E_SHAPE",
            Error::Contract(_) => "E_CONTRACT",
            Error::DegenerateRow { .. } => "E_MASK",
            Error::Schema { .. } => "E_SCHEMA",
            Error::Checkpoint(_) => "E_CHECKPOINT",
            Error::CheckpointMismatch(_) => "E_CHECKPOINT_MISMATCH",
            Error::Config(_) => "E_CONFIG",
            Error::NonFiniteLoss { .. } => "E_NAN_LOSS",
            Error::Io { .. } => "E_IO",
            Error::Json(_) => "E_JSON",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
}
