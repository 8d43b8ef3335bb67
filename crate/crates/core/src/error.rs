use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Inputs or configuration that violate a precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A march produced non-finite values or broke a discrete invariant.
    #[error("numerical failure at step {step}: {reason}")]
    Numerical { step: usize, reason: String },

    /// An iterative method ran out of iterations.
    #[error("no convergence after {iterations} iterations: {reason}")]
    NonConvergence { iterations: usize, reason: String },
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn numerical(step: usize, reason: impl Into<String>) -> Self {
        Error::Numerical { step, reason: reason.into() }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
