use thiserror::Error;

/// Errors raised by the simulation and optimization routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid truncation: {0}")]
    InvalidTruncation(String),

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("no avoided crossing: {0}")]
    NoCrossing(String),

    #[error("out of range: {0}")]
    Range(String),

    #[error("representation mismatch: {0}")]
    Representation(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("at grid point ({eps_1:e}, {eps_2:e}): {source}")]
    AtGridPoint {
        eps_1: f64,
        eps_2: f64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Broad failure class, used by the CLI to pick an exit code.
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) | Error::InvalidTruncation(_) | Error::Representation(_) => {
                ErrorClass::Config
            }
            Error::NoCrossing(_) | Error::Range(_) | Error::ContractViolation(_) => {
                ErrorClass::Domain
            }
            Error::Numerical(_) => ErrorClass::Numerical,
            Error::AtGridPoint { source, .. } => source.class(),
            Error::Io(_) | Error::Csv(_) | Error::Json(_) => ErrorClass::Io,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Domain,
    Numerical,
    Io,
}

pub type Result<T> = std::result::Result<T, Error>;
