use thiserror::Error;

/// CLI failures, each mapped to an exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("I/O error: {0}")]
    Io(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Core(#[from] mlift::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Shape(_) => 2,
            CliError::Io(_) | CliError::Parse(_) => 3,
            CliError::Core(mlift::Error::Shape(_) | mlift::Error::InvalidArgument(_)) => 2,
            CliError::Core(_) => 1,
        }
    }
}

/// Exit code when the solver stops at the iteration cap; outputs are written.
pub const EXIT_NOT_CONVERGED: i32 = 4;
