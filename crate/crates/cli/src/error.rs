use std::io;
use std::path::Path;

/// Failure of a command, grouped by the exit code it maps to.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("training failed: {0}")]
    Training(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Training(_) => 4,
        }
    }

    pub fn io(path: &Path, e: io::Error) -> Self {
        CliError::Data(format!("{}: {e}", path.display()))
    }

    pub fn config(e: impl std::fmt::Display) -> Self {
        CliError::Config(e.to_string())
    }

    pub fn data(e: impl std::fmt::Display) -> Self {
        CliError::Data(e.to_string())
    }

    pub fn training(e: impl std::fmt::Display) -> Self {
        CliError::Training(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
