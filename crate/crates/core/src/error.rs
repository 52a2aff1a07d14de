use thiserror::Error;

/// Errors raised anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("correlation matrix could not be factorized (last nugget tried: {nugget:e})")]
    Conditioning { nugget: f64 },

    #[error("matrix error: {0}")]
    Matrix(String),

    #[error("invalid design: {0}")]
    InvalidDesign(String),

    #[error("no cached optimum for correlation parameters {0}")]
    MissingTheta(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// True for failures that stem from floating-point behaviour rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Conditioning { .. } | Error::Matrix(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
