use thiserror::Error;

/// CLI failure, classified by process exit status.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Convergence(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 3,
            CliError::Convergence(_) => 4,
            CliError::Io(_) => 5,
            CliError::Other(_) => 1,
        }
    }
}

impl From<gsm_biphoton::Error> for CliError {
    fn from(e: gsm_biphoton::Error) -> Self {
        use gsm_biphoton::Error as E;
        match e {
            E::InvalidParameter { .. } => CliError::Config(e.to_string()),
            E::NonConvergence(_) | E::FitFailure(_) => CliError::Convergence(e.to_string()),
            E::Format(_) | E::Io(_) => CliError::Io(e.to_string()),
            E::Underdetermined(_) => CliError::Other(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
