use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("solver error: {0}")]
    Solver(cacwb_core::Error),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

impl From<cacwb_core::Error> for CliError {
    fn from(e: cacwb_core::Error) -> Self {
        match e {
            cacwb_core::Error::Validation { field, reason } => {
                CliError::Validation(format!("{field}: {reason}"))
            }
            other => CliError::Solver(other),
        }
    }
}
