use std::path::Path;

use shiftlens_core::augment::AugmentError;
use shiftlens_core::stats::StatsError;
use shiftlens_core::tensorio::{ManifestError, TensorIoError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("no .jpg, .jpeg or .png files found under {0}")]
    NoImagesFound(String),
    #[error("all {0} images failed to decode or augment")]
    AllImagesFailed(usize),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("invalid report: {0}")]
    InvalidReport(String),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Tensor(#[from] TensorIoError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

impl CliError {
    /// 1 for usage errors, 2 for everything that went wrong with the data.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => 1,
            _ => 2,
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
