use thiserror::Error;

/// Failure modes shared by every module.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("gamma function pole at {0}")]
    Pole(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("pole collision: {0}")]
    PoleCollision(String),
    #[error("no convergence: {0}")]
    NonConverged(String),
    #[error("index out of range: {0}")]
    Index(String),
    #[error("sign error: {0}")]
    Sign(String),
    #[error("singular system: {0}")]
    SingularSystem(String),
    #[error("singular point: {0}")]
    SingularPoint(String),
    #[error("problem too large for the brute-force oracle: {0}")]
    Complexity(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn non_converged(msg: impl Into<String>) -> Self {
        Error::NonConverged(msg.into())
    }
}
