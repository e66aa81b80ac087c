use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] holokan::Error),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("config {path}: {message}")]
    Config { path: PathBuf, message: String },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: PathBuf, message: String },

    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u64, expected: u64 },

    #[error("architecture mismatch: checkpoint has {found}, expected {expected}")]
    ArchitectureMismatch { found: String, expected: String },

    #[error("checksum mismatch: stored {stored}, computed {computed}")]
    ChecksumMismatch { stored: String, computed: String },

    #[error("field `{field}` is invalid: {message}")]
    Field { field: &'static str, message: String },

    #[error("table: {0}")]
    Table(String),

    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }
}
