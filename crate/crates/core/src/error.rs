use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("non-finite value produced in {context}")]
    NonFinite { context: &'static str },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("infeasible configuration: {0}")]
    Infeasible(String),

    #[error("iterate diverged at round {round} (last finite norm {last_norm:e})")]
    Divergence { round: usize, last_norm: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("config file not found: {}", .0.display())]
    ConfigNotFound(PathBuf),

    #[error("dataset not found: {}", .0.display())]
    DatasetNotFound(PathBuf),

    #[error("IDX format error in {}: {message} (byte offset {offset})", path.display())]
    Format {
        path: PathBuf,
        offset: u64,
        message: String,
    },

    #[error("data error: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for this error: 2 config, 3 data, 4 divergence, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::ConfigNotFound(_)
            | Error::InvalidParameter(_)
            | Error::Infeasible(_) => 2,
            Error::DatasetNotFound(_) | Error::Format { .. } | Error::Data(_) => 3,
            Error::Divergence { .. } | Error::NonFinite { .. } => 4,
            Error::DimensionMismatch { .. } | Error::Io(_) | Error::Json(_) => 1,
        }
    }
}
