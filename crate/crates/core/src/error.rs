use thiserror::Error;

/// Errors produced anywhere in the forecasting pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("insufficient data: need {required} points, have {available}")]
    InsufficientData { required: usize, available: usize },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("ill-conditioned {context}: condition number {condition:e}")]
    IllConditioned { context: &'static str, condition: f64 },

    #[error("no subspace satisfies condition cap {cap:e} (smallest achievable {min_condition:e})")]
    NoFeasibleSubspace { cap: f64, min_condition: f64 },
}

impl Error {
    pub(crate) fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// Process exit code for this error class: 1 usage, 2 data, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Argument(_) => 1,
            Error::Io(_)
            | Error::Parse { .. }
            | Error::Domain(_)
            | Error::InsufficientData { .. } => 2,
            Error::IllConditioned { .. } | Error::NoFeasibleSubspace { .. } => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
