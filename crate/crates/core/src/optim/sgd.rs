//! Stateless baselines: stochastic gradient descent and sign descent.

use super::LayerBatch;
use crate::linalg::DenseMatrix;

/// Plain SGD update: the stochastic gradient `X^T G / b` itself.
pub fn sgd_update(batch: &LayerBatch) -> DenseMatrix {
    batch.mean_gradient()
}

/// Sign descent: the entrywise sign of the stochastic gradient, with
/// `sgn(0) = 0`.
pub fn sign_descent_update(batch: &LayerBatch) -> DenseMatrix {
    batch.mean_gradient().map(sgn)
}

#[inline]
fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{gaussian_matrix, SeededRng};
    use crate::optim::LayerBatch;

    #[test]
    fn zero_batch_gives_zero_update() {
        let batch = LayerBatch::new(DenseMatrix::zeros(4, 3), DenseMatrix::zeros(4, 2)).unwrap();
        assert!(sgd_update(&batch).max_abs() == 0.0);
        assert!(sign_descent_update(&batch).max_abs() == 0.0);
    }

    #[test]
    fn scalar_case_matches_hand_sum() {
        // b = 2, n = m = 1: (1*2 + 2*4) / 2 = 5.
        let x = DenseMatrix::from_vec(2, 1, vec![1.0, 2.0]);
        let g = DenseMatrix::from_vec(2, 1, vec![2.0, 4.0]);
        let u = sgd_update(&LayerBatch::new(x, g).unwrap());
        assert_eq!(u.get(0, 0), 5.0);
    }

    #[test]
    fn sgd_is_linear_in_input_transform() {
        // update(X A, G) = A^T update(X, G).
        let mut rng = SeededRng::new(17);
        let x = gaussian_matrix(&mut rng, 12, 4, 1.0);
        let g = gaussian_matrix(&mut rng, 12, 3, 1.0);
        let a = gaussian_matrix(&mut rng, 4, 4, 1.0);
        let base = sgd_update(&LayerBatch::new(x.clone(), g.clone()).unwrap());
        let transformed = sgd_update(&LayerBatch::new(x.matmul(&a), g).unwrap());
        let expected = a.mul_at_b(&base);
        let err = transformed.sub(&expected).frobenius_norm();
        assert!(err < 1e-12, "linearity violated by {err:.3e}");
    }

    #[test]
    fn sign_of_negative_entry_is_minus_one() {
        let x = DenseMatrix::from_vec(1, 1, vec![1.0]);
        let g = DenseMatrix::from_vec(1, 1, vec![-3.7]);
        let u = sign_descent_update(&LayerBatch::new(x, g).unwrap());
        assert_eq!(u.get(0, 0), -1.0);
    }

    #[test]
    fn sign_descent_is_scale_invariant() {
        let mut rng = SeededRng::new(23);
        let x = gaussian_matrix(&mut rng, 8, 3, 1.0);
        let g = gaussian_matrix(&mut rng, 8, 2, 1.0);
        let base = sign_descent_update(&LayerBatch::new(x.scaled(1.0), g.clone()).unwrap());
        let scaled = sign_descent_update(&LayerBatch::new(x.scaled(100.0), g).unwrap());
        assert_eq!(base.data(), scaled.data());
    }
}
