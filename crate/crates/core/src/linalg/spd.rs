//! Symmetric positive (semi)definite matrices and the ridge policy that
//! rescues rank-deficient covariance estimates before inversion.

use super::matrix::DenseMatrix;
use super::powers::polar_project;
use super::rng::{gaussian_matrix, SeededRng};
use super::LinalgError;

/// Symmetric positive (semi)definite matrix plus the ridge that was added
/// to it. Covariance estimates `X^T X / b` and `G^T G / b` live here.
#[derive(Debug, Clone)]
pub struct SpdMatrix {
    mat: DenseMatrix,
    ridge_applied: f64,
}

impl SpdMatrix {
    /// Wraps an already-symmetric matrix without ridging.
    ///
    /// Symmetry is validated within `1e-12 * (1 + max|entry|)`; positivity is
    /// a caller contract checked downstream where eigenvalues are consumed.
    pub fn from_symmetric(mat: DenseMatrix) -> Result<Self, LinalgError> {
        validate_symmetric(&mat)?;
        Ok(Self {
            mat,
            ridge_applied: 0.0,
        })
    }

    pub fn mat(&self) -> &DenseMatrix {
        &self.mat
    }

    pub fn ridge_applied(&self) -> f64 {
        self.ridge_applied
    }

    pub fn n(&self) -> usize {
        self.mat.rows()
    }

    pub fn into_mat(self) -> DenseMatrix {
        self.mat
    }
}

fn validate_symmetric(mat: &DenseMatrix) -> Result<(), LinalgError> {
    if !mat.is_square() {
        return Err(LinalgError::NotSquare {
            rows: mat.rows(),
            cols: mat.cols(),
        });
    }
    if !mat.is_finite() {
        return Err(LinalgError::NonFinite);
    }
    let tolerance = 1e-12 * (1.0 + mat.max_abs());
    let deviation = mat.asymmetry();
    if deviation > tolerance {
        return Err(LinalgError::NotSymmetric { deviation, tolerance });
    }
    Ok(())
}

/// `S + lambda I` with `lambda = eps_rel * trace(S)/n + eps_abs`, recording
/// `lambda` in the result.
pub fn ridge(s: &DenseMatrix, eps_rel: f64, eps_abs: f64) -> Result<SpdMatrix, LinalgError> {
    validate_symmetric(s)?;
    let n = s.rows();
    let lambda = if n == 0 {
        eps_abs
    } else {
        eps_rel * s.trace() / n as f64 + eps_abs
    };
    let mut mat = s.clone();
    for i in 0..n {
        mat.set(i, i, mat.get(i, i) + lambda);
    }
    Ok(SpdMatrix {
        mat,
        ridge_applied: lambda,
    })
}

/// Haar-like random orthogonal matrix: the polar factor of a Gaussian draw,
/// polished to machine-precision orthogonality.
pub fn random_orthogonal(rng: &mut SeededRng, n: usize) -> DenseMatrix {
    loop {
        let g = gaussian_matrix(rng, n, n, 1.0);
        // A Gaussian matrix is almost surely far from singular; retry on the
        // measure-zero failure rather than unwrap.
        if let Ok(mut q) = polar_project(&g) {
            // The polar contract alone allows ||Q^T Q - I|| up to 1e-8 n,
            // too loose for matrices used as exact rotations in tests and
            // checks. Each Newton-Schulz step squares the deviation.
            for _ in 0..4 {
                let gram = q.mul_at_b(&q);
                let err = gram
                    .sub(&DenseMatrix::identity(n))
                    .frobenius_norm();
                if err <= 1e-14 * n as f64 {
                    break;
                }
                let mut t = gram.scaled(-0.5);
                for i in 0..n {
                    t.set(i, i, t.get(i, i) + 1.5);
                }
                q = q.matmul(&t);
            }
            return q;
        }
    }
}

/// Random SPD matrix with eigenvalues log-uniform in `[1/condition, 1]` and a
/// Haar-like eigenbasis.
pub fn random_spd(rng: &mut SeededRng, n: usize, condition: f64) -> SpdMatrix {
    assert!(condition >= 1.0, "condition number must be >= 1");
    let q = random_orthogonal(rng, n);
    let log_span = condition.ln();
    let mut eigenvalues = Vec::with_capacity(n);
    for i in 0..n {
        if n > 1 && i == 0 {
            eigenvalues.push(1.0 / condition); // pin both spectrum ends so the
        } else if n > 1 && i == 1 {
            eigenvalues.push(1.0); // condition number is exact
        } else {
            eigenvalues.push((-rng.uniform() * log_span).exp());
        }
    }
    let mut scaled = q.clone();
    for i in 0..n {
        for j in 0..n {
            scaled.set(i, j, q.get(i, j) * eigenvalues[j]);
        }
    }
    let mut mat = scaled.mul_a_bt(&q);
    mat.symmetrize();
    SpdMatrix {
        mat,
        ridge_applied: 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::eig::sym_eig;

    fn min_eigenvalue(s: &SpdMatrix) -> f64 {
        sym_eig(s.mat()).unwrap().eigenvalues[0]
    }

    #[test]
    fn ridge_of_zero_matrix_is_eps_abs_identity() {
        let s = ridge(&DenseMatrix::zeros(3, 3), 1e-8, 1e-12).unwrap();
        assert_eq!(s.ridge_applied(), 1e-12);
        for i in 0..3 {
            assert_eq!(s.mat().get(i, i), 1e-12);
        }
    }

    #[test]
    fn ridge_of_identity_scales_diagonal() {
        let s = ridge(&DenseMatrix::identity(4), 1e-6, 0.0).unwrap();
        assert_eq!(s.ridge_applied(), 1e-6);
        for i in 0..4 {
            assert!((s.mat().get(i, i) - (1.0 + 1e-6)).abs() < 1e-18);
        }
    }

    #[test]
    fn ridged_rank_one_matrix_is_positive_definite() {
        let raw = DenseMatrix::from_vec(2, 2, vec![1.0, 1.0, 1.0, 1.0]);
        let s = ridge(&raw, 1e-8, 1e-12).unwrap();
        let min = min_eigenvalue(&s);
        assert!(min > 0.0, "smallest eigenvalue {min:.3e} not positive after ridging");
    }

    #[test]
    fn asymmetric_input_rejected() {
        let raw = DenseMatrix::from_vec(2, 2, vec![1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(
            ridge(&raw, 1e-8, 0.0),
            Err(LinalgError::NotSymmetric { .. })
        ));
    }

    #[test]
    fn random_spd_hits_requested_condition() {
        let mut rng = SeededRng::new(9);
        let s = random_spd(&mut rng, 6, 100.0);
        let eig = sym_eig(s.mat()).unwrap();
        let cond = eig.eigenvalues[5] / eig.eigenvalues[0];
        assert!((cond - 100.0).abs() / 100.0 < 1e-8, "condition {cond}");
        assert!(eig.eigenvalues[0] > 0.0);
    }

    #[test]
    fn random_orthogonal_is_orthogonal() {
        let mut rng = SeededRng::new(2);
        let q = random_orthogonal(&mut rng, 10);
        let err = q
            .mul_at_b(&q)
            .sub(&DenseMatrix::identity(10))
            .frobenius_norm();
        assert!(err < 1e-13, "orthogonality error {err:.3e}");
    }
}
