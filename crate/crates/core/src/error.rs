//! Crate-wide error type.

use crate::symcone::SolveStatus;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    /// Incompatible matrix or vector dimensions. Raised before any numerical
    /// work starts.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A matrix that must be positive semidefinite has a significantly
    /// negative eigenvalue.
    #[error("matrix `{name}` is not positive semidefinite (min eigenvalue {min_eig:e})")]
    NotPsd { name: String, min_eig: f64 },

    /// A linear solve or factorization hit a (numerically) singular matrix.
    #[error("singular matrix: {0}")]
    Singular(String),

    /// The discounted closed loop is not stable enough for the requested
    /// computation: `sqrt(alpha) * M` must have spectral radius below one.
    #[error("discounted spectral radius {rho} is not < 1 ({context})")]
    Unstable { rho: f64, context: String },

    /// `smat` input whose length is not a triangular number.
    #[error("vector length {len} is not a triangular number")]
    NotTriangular { len: usize },

    /// An extraction was attempted on a solution that is not `Optimal`.
    #[error("solution status is {status:?}, expected Optimal")]
    NotOptimal { status: SolveStatus },

    /// An iterative routine ran out of iterations.
    #[error("iteration limit reached: {0}")]
    IterationLimit(String),
}
