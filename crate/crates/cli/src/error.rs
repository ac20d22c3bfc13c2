use thiserror::Error;

use thermobin_core::Error as CoreError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] CoreError),

    #[error("check failed: {0}")]
    CheckFailed(String),

    #[error("could not write output: {0}")]
    Output(#[from] std::io::Error),
}

impl CliError {
    /// 2 for bad input, 3 for numerical failures, 4 for non-convergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Output(_) => 2,
            CliError::Core(CoreError::NoConvergence(_)) => 4,
            CliError::Core(e) if e.is_config_error() => 2,
            CliError::Core(_) | CliError::CheckFailed(_) => 3,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub fn config(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}
