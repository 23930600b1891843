use thiserror::Error;

/// Failure of a subcommand, split by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Invalid configuration or arguments (exit code 2).
    #[error("configuration error: {0:#}")]
    Config(anyhow::Error),
    /// Anything that went wrong while running (exit code 1).
    #[error("{0:#}")]
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn config(msg: impl std::fmt::Display) -> Self {
        Self::Config(anyhow::anyhow!("{msg}"))
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Runtime(_) => 1,
        }
    }
}

impl From<ecsi_core::Error> for CliError {
    fn from(e: ecsi_core::Error) -> Self {
        match e {
            ecsi_core::Error::Config(_) => Self::Config(e.into()),
            other => Self::Runtime(other.into()),
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        Self::Runtime(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Runtime(e.into())
    }
}

pub type CliResult<T> = Result<T, CliError>;
