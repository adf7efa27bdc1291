use thiserror::Error;

/// Failure of a command, split by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad input file, flag or config; exit code 2.
    #[error("{0}")]
    Input(String),
    /// The estimator or simulation failed on valid input; exit code 1.
    #[error(transparent)]
    Estimation(#[from] effect_risk::Error),
    /// Writing results failed; exit code 1.
    #[error("cannot write {path}: {source}")]
    Output {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn input(msg: impl Into<String>) -> Self {
        CliError::Input(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Estimation(_) | CliError::Output { .. } => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
