//! Shampoo with instantaneous-batch preconditioners.
//!
//! With `S = X^T G / b`, the update is
//!
//! ```text
//! W_U = [S S^T]^{-1/4}  S  [S^T S]^{-1/4}
//! ```
//!
//! ridged before each fractional power. History accumulation of the
//! preconditioners is deliberately not implemented; this is the one-batch
//! form used as a comparison point for Iso.

use super::{LayerBatch, OptimError, OptimizerConfig};
use crate::linalg::{ridge, sym_pow, DenseMatrix};

pub fn shampoo_update(
    batch: &LayerBatch,
    config: &OptimizerConfig,
) -> Result<DenseMatrix, OptimError> {
    let grad = batch.mean_gradient();
    // S S^T via row dot products is exactly symmetric (a_ij and a_ji reduce
    // the same products in the same order).
    let left_gram = grad.mul_a_bt(&grad);
    let right_gram = grad.gram_scaled(1.0);
    let left = sym_pow(&ridge(&left_gram, config.ridge_rel, config.ridge_abs)?, -0.25)?;
    let right = sym_pow(&ridge(&right_gram, config.ridge_rel, config.ridge_abs)?, -0.25)?;
    Ok(left.matmul(&grad).matmul(&right))
}
