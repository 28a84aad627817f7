//! Adam on a weight matrix, driven directly by `(X, G)` batches.

use super::{LayerBatch, OptimError, OptimizerConfig, OptimizerState};
use crate::linalg::DenseMatrix;

/// One Adam step.
///
/// ```text
/// M   <- M + (1 - beta1) (X^T G / b - M)
/// V   <- V + (1 - beta2) ((X^T G / b)^2 - V)          (entrywise)
/// W_U = (M / d1) / (sqrt(V / d2) + epsilon)           (entrywise)
/// ```
///
/// with `d1 = 1 - beta1^t`, `d2 = 1 - beta2^t`. Setting
/// `config.bias_correction = false` drops the `d1`, `d2` divisions.
pub fn adam_step(
    state: &mut OptimizerState,
    batch: &LayerBatch,
    config: &OptimizerConfig,
) -> Result<DenseMatrix, OptimError> {
    state.check_batch(batch)?;
    let grad = batch.mean_gradient();

    state.step_count += 1;
    state.advance_denominators(config.beta1, config.beta2);
    state.m.ema_update(&grad, 1.0 - config.beta1);
    let w2 = 1.0 - config.beta2;
    for (v, g) in state.v.data_mut().iter_mut().zip(grad.data()) {
        *v += w2 * (g * g - *v);
    }

    let (d1, d2) = if config.bias_correction {
        (state.d1, state.d2)
    } else {
        (1.0, 1.0)
    };
    let mut update = DenseMatrix::zeros(batch.input_dim(), batch.output_dim());
    for ((u, m), v) in update
        .data_mut()
        .iter_mut()
        .zip(state.m.data())
        .zip(state.v.data())
    {
        *u = (m / d1) / ((v / d2).sqrt() + config.epsilon);
    }
    Ok(update)
}
