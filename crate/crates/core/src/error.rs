use thiserror::Error;

use crate::solver::SolverError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("non-finite value in step output")]
    NonFinite,

    #[error("singular matrix")]
    SingularMatrix,

    #[error(transparent)]
    Solver(#[from] SolverError),

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("error {0:e} is below the 1e-12 precision floor; slope fit is meaningless")]
    PrecisionFloor(f64),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
