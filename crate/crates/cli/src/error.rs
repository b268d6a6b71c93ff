use thiserror::Error;

/// Failures of a CLI invocation, each mapped to a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] damlab_core::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("acceptance failure: {0}")]
    Acceptance(String),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        Self::Config(msg.into())
    }

    /// 0 success, 1 acceptance failure, 2 configuration error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Acceptance(_) => 1,
            Self::Config(_) | Self::Core(_) | Self::Io(_) => 2,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
