use thiserror::Error;

/// Crate-wide result type.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors surfaced by the solver, generators and evaluation harnesses.
#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on user input was violated (shape mismatch, invalid
    /// hyperparameter, malformed weight matrix, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A dense factorization failed; usually a sign of a singular or
    /// non-finite system matrix.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// The alternating loop produced a non-finite iterate.
    #[error("solver diverged at iteration {iter}: {detail}")]
    Diverged { iter: usize, detail: String },

    /// A ratio over an all-zero weight matrix is undefined.
    #[error("undefined ratio: weight matrix has zero total mass")]
    ZeroWeightMass,
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
