use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A value lies outside the domain of the named field.
    #[error("domain error in `{field}`: {message}")]
    Domain { field: &'static str, message: String },

    /// Two inputs that must be aligned have different lengths.
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// An iterative solver ran out of iterations.
    #[error("no convergence after {iterations} iterations: {message}")]
    Convergence { iterations: usize, message: String },

    /// The request is valid but too large to serve (combinatorial guard).
    #[error("refused: {0}")]
    Refused(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(field: &'static str, message: impl Into<String>) -> Self {
        Error::Domain {
            field,
            message: message.into(),
        }
    }

    /// True for errors caused by malformed or out-of-range input rather than
    /// by the environment.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::Domain { .. }
                | Error::Shape(_)
                | Error::InvalidArgument(_)
                | Error::Refused(_)
                | Error::Parse(_)
                | Error::Json(_)
        )
    }
}
