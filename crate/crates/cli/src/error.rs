use ascmlab_core::error::{Error, InferenceError, SolverError};
use thiserror::Error;

/// Command failure, carrying the process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags or input data (exit 2).
    #[error("{0}")]
    Input(String),
    /// Weight estimation failed (exit 3).
    #[error("solver failure: {0}")]
    Solver(String),
    /// Anything else, including output I/O (exit 4).
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Input(_) => 2,
            Self::Solver(_) => 3,
            Self::Internal(_) => 4,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match &e {
            Error::Panel(_) | Error::Spec(_) => Self::Input(e.to_string()),
            Error::Solver(SolverError::TooFewDonors { .. } | SolverError::TooFewPeriods(_)) => {
                Self::Input(e.to_string())
            }
            Error::Solver(_) => Self::Solver(e.to_string()),
            Error::Inference(
                InferenceError::InvalidAlpha(_)
                | InferenceError::InvalidT0 { .. }
                | InferenceError::Insufficient(_),
            ) => Self::Input(e.to_string()),
            Error::Inference(_) => Self::Internal(e.to_string()),
        }
    }
}

macro_rules! lift {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                Error::from(e).into()
            }
        }
    )*};
}

lift!(
    ascmlab_core::error::PanelError,
    ascmlab_core::error::SpecError,
    SolverError,
    InferenceError
);

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Internal(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::Internal(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::Internal(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
