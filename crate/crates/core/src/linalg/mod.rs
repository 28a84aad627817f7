//! Dense double-precision linear algebra: symmetric eigendecomposition,
//! matrix powers, inverse square root (eigendecomposition oracle and
//! Newton–Schulz iteration), polar projection, and Gaussian sampling.
//!
//! Everything here is pure and reentrant; no external BLAS/LAPACK.

mod eig;
mod matrix;
mod powers;
mod rng;
mod spd;

pub use eig::{sym_eig, sym_eig_with_hint, Eigendecomposition};
pub use matrix::DenseMatrix;
pub use powers::{inv_sqrt_ns, polar_project, sym_pow, InvSqrt, NS_MAX_ITERS, NS_TOL};
pub use rng::{gaussian_matrix, mix_seed, SeededRng};
pub use spd::{random_orthogonal, random_spd, ridge, SpdMatrix};

/// Default relative ridge: `lambda = RIDGE_REL * trace(S)/n + RIDGE_ABS`.
///
/// Keeps preconditioners finite at the very first step, when covariance
/// estimates built from a single batch may be rank-deficient (`b < n`).
pub const RIDGE_REL: f64 = 1e-8;
/// Default absolute ridge floor; rescues the all-zero covariance.
pub const RIDGE_ABS: f64 = 1e-12;

#[derive(Debug, Clone, thiserror::Error)]
pub enum LinalgError {
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix must be symmetric, max |a_ij - a_ji| = {deviation:.3e} exceeds tolerance {tolerance:.3e}")]
    NotSymmetric { deviation: f64, tolerance: f64 },
    #[error("matrix contains a non-finite entry")]
    NonFinite,
    #[error("eigenvalue {value:.6e} at index {index} is not positive after ridging")]
    SingularEigenvalue { index: usize, value: f64 },
    #[error("Jacobi eigensolver did not converge in {sweeps} sweeps")]
    EigNotConverged { sweeps: usize },
    #[error("matrix is rank-deficient beyond ridge rescue: {detail}")]
    RankDeficient { detail: String },
    #[error("dimension mismatch: {detail}")]
    DimensionMismatch { detail: String },
}
