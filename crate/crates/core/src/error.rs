use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument fell outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Cholesky factorization failed; `minor` is the 1-based index of the
    /// first leading minor that is not positive.
    #[error("matrix is not positive definite (leading minor {minor})")]
    NotPositiveDefinite { minor: usize },

    #[error("not implemented: {0}")]
    Unsupported(String),

    #[error("quadrature did not converge: successive estimates differ by {change:e} at order {order}")]
    Quadrature { change: f64, order: usize },

    #[error("{failed} of {total} replicates failed; aborting run")]
    TooManyFailures { failed: usize, total: usize },

    #[error("invalid input: {0}")]
    Input(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
