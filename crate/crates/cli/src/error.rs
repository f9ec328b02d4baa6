use std::path::PathBuf;

use thiserror::Error;

/// Process exit codes.
pub const EXIT_OK: u8 = 0;
pub const EXIT_INVALID_INPUT: u8 = 1;
pub const EXIT_VERIFICATION: u8 = 2;
pub const EXIT_DIVERGED: u8 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] gtsim_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: {msg}")]
    Config { path: PathBuf, msg: String },
    #[error("invalid argument: {0}")]
    Usage(String),
    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use gtsim_core::Error as E;
        match self {
            CliError::Core(E::Diverged { .. }) => EXIT_DIVERGED,
            CliError::Core(E::GuardViolation(_) | E::NoConvergence { .. }) => EXIT_VERIFICATION,
            _ => EXIT_INVALID_INPUT,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
