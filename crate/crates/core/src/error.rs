use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A file could not be read or did not parse under its schema.
    #[error("input error at {location}: {message}")]
    Input { location: String, message: String },

    /// A value is outside the domain of the operation.
    #[error("invalid {field}: {reason}")]
    Validation { field: &'static str, reason: String },

    #[error("unknown class id {0}")]
    UnknownClass(u32),

    /// Both the positive and the negative tail are empty at the threshold.
    #[error("precision undefined at threshold {threshold}: no sample scores above it")]
    UndefinedPrecision { threshold: f64 },

    #[error("resource limit exceeded: {0}")]
    Resource(String),

    #[error("numerical failure: {message}")]
    Numerical { message: String },

    #[error("no convergence after {iterations} iterations (objective {objective}, projected gradient norm {grad_norm:.3e})")]
    NonConvergence {
        iterations: usize,
        objective: f64,
        grad_norm: f64,
        last_iterate: Vec<f64>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn validation(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Validation {
            field,
            reason: reason.into(),
        }
    }

    pub(crate) fn numerical(message: impl Into<String>) -> Self {
        Error::Numerical {
            message: message.into(),
        }
    }

    /// True for errors caused by malformed input rather than by a failed check.
    pub fn is_input(&self) -> bool {
        matches!(self, Error::Input { .. } | Error::Io(_))
    }
}
