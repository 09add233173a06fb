use std::io;
use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
}

impl CliError {
    /// Process exit status: 2 for usage errors, 1 otherwise.
    pub fn status(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Json { .. } => 2,
            CliError::Io { .. } => 1,
        }
    }
}
