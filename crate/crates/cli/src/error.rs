use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] lel_core::Error),

    #[error("config {path}: {message}")]
    Config { path: PathBuf, message: String },

    #[error("invalid argument: {0}")]
    Usage(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 for domain and usage errors, 3 when a numerical
    /// iteration fails to converge, 4 for file system errors.
    pub fn exit_code(&self) -> u8 {
        use lel_core::Error as E;
        match self {
            CliError::Core(E::Convergence(_) | E::StepUnderflow { .. }) => 3,
            CliError::Core(_) | CliError::Config { .. } | CliError::Usage(_) => 2,
            CliError::Io { .. } => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
