use std::path::PathBuf;

use thiserror::Error;

use crate::tensor::TensorError;

/// Process exit codes, one per error class.
pub mod exit {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 2;
    pub const CONFIG: i32 = 3;
    pub const IO: i32 = 4;
    pub const TENSOR: i32 = 5;
    pub const NUMERICAL: i32 = 6;
    pub const MISSING_SCHEDULE: i32 = 7;
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("method `{0}` requested without a step-size schedule")]
    MissingSchedule(String),
    #[error(transparent)]
    Core(#[from] ipnb_core::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }

    pub fn exit_code(&self) -> i32 {
        use ipnb_core::Error as C;
        match self {
            Self::Io { .. } | Self::Csv(_) => exit::IO,
            Self::Json { .. } | Self::Config(_) => exit::CONFIG,
            Self::Tensor(TensorError::Io(_)) => exit::IO,
            Self::Tensor(_) => exit::TENSOR,
            Self::MissingSchedule(_) => exit::MISSING_SCHEDULE,
            Self::Core(C::InvalidConfig(_) | C::Shape(_) | C::EmptyDataset) => exit::CONFIG,
            Self::Core(_) => exit::NUMERICAL,
        }
    }
}
