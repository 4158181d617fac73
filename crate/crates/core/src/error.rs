use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no slice point received a phase label (every blurred pixel lies in the ambiguous band)")]
    DegenerateLabels,

    #[error("format error: {0}")]
    Format(String),

    #[error("points per plane must be a positive perfect square, got {0}")]
    BadGrid(usize),

    #[error("unknown geometry `{0}`")]
    UnknownGeometry(String),

    #[error("invalid network shape: {0}")]
    BadShape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("loss or its gradient is not finite")]
    NonFiniteLoss,

    #[error("parameter update produced non-finite values at epoch {epoch}")]
    NonFiniteUpdate { epoch: usize },

    #[error("no grid cell straddles the iso level {0}")]
    EmptySurface(f64),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 1 usage, 2 data, 3 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::UnknownGeometry(_) | Error::Config(_) | Error::BadShape(_) => 1,
            Error::DegenerateLabels
            | Error::Format(_)
            | Error::BadGrid(_)
            | Error::EmptySurface(_)
            | Error::Io { .. } => 2,
            Error::NonFiniteLoss | Error::NonFiniteUpdate { .. } => 3,
        }
    }
}
