use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid input parameters or mismatched dimensions.
    #[error("parameter error: {0}")]
    Parameter(String),
    /// A numerical routine failed (non-convergence, singular system, ...).
    #[error("numerical error: {0}")]
    Numerical(String),
    /// An internal consistency check failed.
    #[error("internal error: {0}")]
    Internal(String),
    /// An iterative solver ran out of iterations; carries its best estimate.
    #[error("not converged after {iterations} iterations: eigenvalue {eigenvalue}, residual {residual:e}")]
    NotConverged {
        eigenvalue: f64,
        residual: f64,
        iterations: usize,
    },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub(crate) fn internal(msg: impl Into<String>) -> Self {
        Error::Internal(msg.into())
    }
}
