use std::path::PathBuf;

use planlab_core::sokoban::{GenerationError, InstanceFileError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error in {file}: {message}")]
    Config { file: String, message: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("instance file {path}: {source}")]
    Instance { path: PathBuf, source: InstanceFileError },
    #[error("map generation for T*={t_star}: {source}")]
    Generation { t_star: u32, source: GenerationError },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

impl HarnessError {
    pub(crate) fn config(file: impl Into<String>, message: impl Into<String>) -> Self {
        HarnessError::Config {
            file: file.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }

    /// Errors caused by user input rather than the environment.
    pub fn is_config(&self) -> bool {
        matches!(self, HarnessError::Config { .. } | HarnessError::Instance { .. })
    }
}
