//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by data handling, learners, and estimators.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid argument or specification (bad kinds, unknown names, bad
    /// hyperparameters).
    #[error("invalid input: {0}")]
    Invalid(String),

    /// Malformed data: missing cells, unparseable values, inconsistent
    /// lengths, unobserved levels.
    #[error("data error: {0}")]
    Data(String),

    /// A nuisance learner could not be fit or applied.
    #[error("learner error: {0}")]
    Learner(String),

    /// A linear system was singular or ill-conditioned beyond tolerance.
    #[error("singular system: {0}")]
    Singular(String),

    /// An estimation run failed (too many failed splits/replicates, ...).
    #[error("estimation error: {0}")]
    Estimation(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Coarse error class used for CLI exit codes and machine-parsable
/// diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Configuration or data-schema violation (exit code 2).
    Config,
    /// Estimation failure (exit code 3).
    Estimation,
    /// I/O failure (exit code 4).
    Io,
}

impl ErrorClass {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::Config => 2,
            ErrorClass::Estimation => 3,
            ErrorClass::Io => 4,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ErrorClass::Config => "config",
            ErrorClass::Estimation => "estimation",
            ErrorClass::Io => "io",
        }
    }
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Invalid(_) | Error::Data(_) => ErrorClass::Config,
            Error::Learner(_) | Error::Singular(_) | Error::Estimation(_) => {
                ErrorClass::Estimation
            }
            Error::Io(_) => ErrorClass::Io,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
