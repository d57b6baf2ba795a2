use alloc::string::String;

/// Errors raised anywhere in the core crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: String,
        expected: usize,
        actual: usize,
    },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("posterior undefined: mixture probability of the true label is zero")]
    DegeneratePosterior,
    #[error("AUC undefined: predictions contain a single class")]
    UndefinedAuc,
    #[error("prediction sets cannot be paired: {0}")]
    Pairing(String),
}

/// Coarse classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Data,
    Numeric,
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::InvalidConfig(_) => ErrorCategory::Config,
            Error::Shape { .. }
            | Error::InvalidInput(_)
            | Error::UndefinedAuc
            | Error::Pairing(_) => ErrorCategory::Data,
            Error::NonFinite(_) | Error::DegeneratePosterior => ErrorCategory::Numeric,
        }
    }

    pub(crate) fn shape(context: impl Into<String>, expected: usize, actual: usize) -> Self {
        Error::Shape {
            context: context.into(),
            expected,
            actual,
        }
    }
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
