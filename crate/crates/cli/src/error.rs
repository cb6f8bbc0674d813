use furbi::error::FurbiError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {message}")]
    Input { path: String, message: String },

    #[error("{0}")]
    Model(#[from] FurbiError),

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 2 for usage, configuration and data problems, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Model(
                FurbiError::Domain(_)
                | FurbiError::QuadratureNonConvergence { .. }
                | FurbiError::SeriesNonConvergence { .. }
                | FurbiError::TailInversion { .. },
            ) => 3,
            _ => 2,
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(std::io::Error::other(e.to_string()))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(std::io::Error::other(e.to_string()))
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
