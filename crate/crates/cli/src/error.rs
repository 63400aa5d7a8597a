use thiserror::Error;

/// Command failures, each mapped to a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),

    #[error("{0}")]
    Io(String),

    #[error("numerical abort at step {step}: non-finite {term}")]
    Abort { step: usize, term: String },

    #[error("gradient check failed: {0}")]
    Gradcheck(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Io(_) => 2,
            CliError::Abort { .. } => 3,
            CliError::Gradcheck(_) => 4,
        }
    }

    pub fn io(context: impl std::fmt::Display, err: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{context}: {err}"))
    }
}

impl From<mmgan_core::Error> for CliError {
    fn from(e: mmgan_core::Error) -> Self {
        use mmgan_core::Error as E;
        match e {
            E::NumericalAbort { step, term } => CliError::Abort { step, term },
            E::Io(_) | E::BadMagic { .. } | E::Truncated { .. } | E::CountMismatch { .. } => CliError::Io(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}
