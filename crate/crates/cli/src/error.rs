use std::path::PathBuf;

use thiserror::Error;

/// Failures surfaced by the command line, grouped by exit status.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error at {key}: {reason}")]
    Config { key: String, reason: String },
    #[error("numerical error: {0}")]
    Numerical(talbot_core::Error),
    #[error("I/O error on {path}: {reason}")]
    Io { path: PathBuf, reason: String },
}

impl CliError {
    pub fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        CliError::Config { key: key.into(), reason: reason.into() }
    }

    pub fn io(path: impl Into<PathBuf>, reason: impl ToString) -> Self {
        CliError::Io { path: path.into(), reason: reason.to_string() }
    }

    /// 2 config, 3 numerical, 4 I/O.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Numerical(_) => 3,
            CliError::Io { .. } => 4,
        }
    }
}

impl From<talbot_core::Error> for CliError {
    fn from(e: talbot_core::Error) -> Self {
        match e {
            talbot_core::Error::Io(err) => CliError::io("<unknown>", err),
            other => CliError::Numerical(other),
        }
    }
}

/// Attach a path to core I/O and format errors.
pub trait AtPath<T> {
    fn at_path(self, path: &std::path::Path) -> Result<T, CliError>;
}

impl<T> AtPath<T> for talbot_core::Result<T> {
    fn at_path(self, path: &std::path::Path) -> Result<T, CliError> {
        self.map_err(|e| match e {
            talbot_core::Error::Io(err) => CliError::io(path, err),
            talbot_core::Error::Format(msg) => CliError::io(path, msg),
            other => CliError::Numerical(other),
        })
    }
}

pub type CliResult<T> = Result<T, CliError>;
