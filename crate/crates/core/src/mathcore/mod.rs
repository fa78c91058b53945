//! Deterministic small-dimension numerical kernel: the logistic link, dense
//! symmetric linear algebra, and the incrementally maintained covariance.

mod covariance;
mod linalg;
mod logistic;
mod scalar;
mod vector;

use thiserror::Error;

pub use covariance::{CovarianceState, DEFAULT_REFRESH_INTERVAL};
pub use linalg::{Cholesky, SymMatrix};
pub use logistic::{log_sigmoid, sigmoid, sigmoid_prime, softplus};
pub use scalar::Real;
pub use vector::Vector;

pub(crate) use vector::dot;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MathError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite entry")]
    NonFinite,
    #[error("empty input")]
    Empty,
    #[error("regularizer must be positive and finite")]
    InvalidRegularizer,
    #[error("matrix is not numerically positive definite")]
    NotPositiveDefinite,
    #[error("eigenvalue iteration did not converge")]
    NoConvergence,
}
