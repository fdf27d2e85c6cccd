use thiserror::Error;

/// Errors raised anywhere in the toolkit.
///
/// Each variant maps onto one of the CLI exit codes via [`Error::exit_code`].
#[derive(Debug, Error)]
pub enum Error {
    /// A non-finite or out-of-range argument was passed to a primitive.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A function was evaluated outside its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// A named parameter violates its documented invariant.
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParam { field: String, reason: String },

    /// The configuration text could not be parsed or validated.
    #[error("config error: {0}")]
    Config(String),

    /// The requested analysis does not apply to this solution (e.g. no steady state).
    #[error("not applicable: {0}")]
    NotApplicable(String),

    /// An iterative solver hit its iteration cap.
    #[error("did not converge: {0}")]
    NonConvergence(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("internal error: {0}")]
    Internal(String),

    /// One or more built-in invariant checks failed.
    #[error("self-check failed: {0}")]
    CheckFailed(String),
}

impl Error {
    pub(crate) fn param(field: &str, reason: impl Into<String>) -> Self {
        Error::InvalidParam { field: field.to_string(), reason: reason.into() }
    }

    /// Process exit code used by the batch front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidParam { .. } => 2,
            Error::CheckFailed(_) => 1,
            Error::NonConvergence(_) => 3,
            Error::Io(_) => 4,
            Error::InvalidInput(_) | Error::Domain(_) | Error::NotApplicable(_) | Error::Internal(_) => 5,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
