use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// Instance invariant violated; `state`/`action` locate the offending record when known.
    #[error("validation failed{}: {message}", location(*state, *action))]
    Validation {
        state: Option<usize>,
        action: Option<usize>,
        message: String,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("numerical failure after {iterations} iterations (last residual {residual:e})")]
    NumericalFailure { iterations: usize, residual: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn location(state: Option<usize>, action: Option<usize>) -> String {
    match (state, action) {
        (Some(s), Some(a)) => format!(" at (s={s}, a={a})"),
        (Some(s), None) => format!(" at s={s}"),
        _ => String::new(),
    }
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }
}
