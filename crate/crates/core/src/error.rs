//! Error type shared by every module.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("kernel tail mass {mass:.3e} outside the padded box exceeds {threshold:.1e}; enlarge L for t = {t}")]
    Truncation { mass: f64, threshold: f64, t: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("structural error: {0}")]
    Structural(String),

    #[error("model error: {0}")]
    Model(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("divergence: {0}")]
    Divergence(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn structural(msg: impl Into<String>) -> Self {
        Error::Structural(msg.into())
    }

    pub(crate) fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
