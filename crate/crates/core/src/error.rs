use thiserror::Error;

/// Errors raised by divergence, bound and experiment routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A divergence or bound that is mathematically undefined for the inputs,
    /// e.g. a Gaussian KL divergence with a zero-variance prior.
    #[error("undefined: {0}")]
    Undefined(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    /// An iterative routine failed to reach its answer in floating point.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("unsupported size {size} (maximum {max})")]
    UnsupportedSize { size: usize, max: usize },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for results that are well-posed questions with an undefined answer.
    pub fn is_undefined(&self) -> bool {
        matches!(self, Error::Undefined(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
