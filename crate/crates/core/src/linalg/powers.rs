//! Fractional matrix powers and the polar projection.
//!
//! Two routes to the inverse square root are kept deliberately independent:
//! [`sym_pow`] goes through the eigendecomposition (the reference oracle),
//! while [`inv_sqrt_ns`] runs the coupled Newton–Schulz iteration and falls
//! back to the oracle when it does not reach tolerance.

use super::eig::sym_eig;
use super::matrix::DenseMatrix;
use super::spd::{ridge, SpdMatrix};
use super::LinalgError;

/// Default Newton–Schulz iteration cap.
pub const NS_MAX_ITERS: usize = 30;
/// Default Newton–Schulz residual tolerance.
pub const NS_TOL: f64 = 1e-9;

/// `S^p = Q diag(lambda^p) Q^T` via the symmetric eigendecomposition.
///
/// Requires every eigenvalue to be strictly positive (the input is expected
/// to be ridged); a non-positive eigenvalue is reported by index and value.
pub fn sym_pow(s: &SpdMatrix, p: f64) -> Result<DenseMatrix, LinalgError> {
    let eig = sym_eig(s.mat())?;
    for (index, &value) in eig.eigenvalues.iter().enumerate() {
        if value <= 0.0 {
            return Err(LinalgError::SingularEigenvalue { index, value });
        }
    }
    Ok(eig.map_eigenvalues(|l| l.powf(p)))
}

/// Result of [`inv_sqrt_ns`]: the inverse square root, how it was obtained,
/// and how many polynomial iterations ran.
#[derive(Debug, Clone)]
pub struct InvSqrt {
    pub mat: DenseMatrix,
    /// True when the iteration missed `tol` within `max_iters` and the
    /// eigendecomposition route was used instead.
    pub fell_back: bool,
    pub iterations: usize,
}

/// Coupled Newton–Schulz iteration for `S^{-1/2}`.
///
/// Runs on `A = S / ||S||_F` (so the spectrum lies in (0, 1]) with the
/// coupled pair `Y -> A^{1/2}`, `Z -> A^{-1/2}`:
///
/// ```text
/// T = (3 I - Z Y) / 2,   Y <- Y T,   Z <- T Z
/// ```
///
/// Returns `Z / sqrt(||S||_F)` once `||Y_inv S Y_inv - I||_F <= tol` for the
/// returned `Y_inv`, or falls back to [`sym_pow`] after `max_iters`, flagging
/// the fallback in the status.
pub fn inv_sqrt_ns(s: &SpdMatrix, max_iters: usize, tol: f64) -> Result<InvSqrt, LinalgError> {
    let n = s.n();
    let scale = s.mat().frobenius_norm();
    if scale == 0.0 || !scale.is_finite() {
        return fallback(s, 0);
    }
    let a = s.mat().scaled(1.0 / scale);
    let identity = DenseMatrix::identity(n);

    let mut y = a.clone();
    let mut z = identity.clone();
    let mut iterations = 0;
    let mut residual = f64::INFINITY;
    for k in 0..max_iters {
        let p = z.matmul(&y);
        let r = p.sub(&identity).frobenius_norm();
        if r <= 0.5 * tol {
            break;
        }
        if !r.is_finite() || (k > 0 && r > 4.0 * residual && r > 1.0) {
            // Diverging (possible only on contract-violating input).
            return fallback(s, k);
        }
        residual = r;
        let mut t = p.scaled(-0.5);
        for i in 0..n {
            t.set(i, i, t.get(i, i) + 1.5);
        }
        y = y.matmul(&t);
        z = t.matmul(&z);
        iterations = k + 1;
    }

    let inv_sqrt = z.scaled(1.0 / scale.sqrt());
    let final_residual = inv_sqrt
        .matmul(s.mat())
        .matmul(&inv_sqrt)
        .sub(&identity)
        .frobenius_norm();
    if final_residual <= tol {
        let mut mat = inv_sqrt;
        mat.symmetrize();
        Ok(InvSqrt {
            mat,
            fell_back: false,
            iterations,
        })
    } else {
        fallback(s, iterations)
    }
}

fn fallback(s: &SpdMatrix, iterations: usize) -> Result<InvSqrt, LinalgError> {
    Ok(InvSqrt {
        mat: sym_pow(s, -0.5)?,
        fell_back: true,
        iterations,
    })
}

/// Relative ridge used to stabilize `B^T B` inside the polar projection.
/// Machine-level so the orthogonality contract `||P^T P - I|| <= 1e-8 n`
/// survives; genuine rank deficiency still surfaces as an error.
const POLAR_RIDGE_REL: f64 = 1e-14;

/// Closest orthogonal matrix to `B` in Frobenius norm: `B (B^T B)^{-1/2}`.
pub fn polar_project(b: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
    if !b.is_square() {
        return Err(LinalgError::NotSquare {
            rows: b.rows(),
            cols: b.cols(),
        });
    }
    if !b.is_finite() {
        return Err(LinalgError::NonFinite);
    }
    let n = b.rows();
    let gram = ridge(&b.gram_scaled(1.0), POLAR_RIDGE_REL, 0.0)?;
    let inv_half = sym_pow(&gram, -0.5).map_err(|e| match e {
        LinalgError::SingularEigenvalue { index, value } => LinalgError::RankDeficient {
            detail: format!("B^T B eigenvalue {value:.3e} at index {index} is not positive"),
        },
        other => other,
    })?;
    let p = b.matmul(&inv_half);
    let orthogonality = p
        .mul_at_b(&p)
        .sub(&DenseMatrix::identity(n))
        .frobenius_norm();
    if orthogonality > 1e-8 * n as f64 {
        return Err(LinalgError::RankDeficient {
            detail: format!("projection is not orthogonal (||P^T P - I||_F = {orthogonality:.3e})"),
        });
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::rng::{gaussian_matrix, SeededRng};
    use crate::linalg::spd::random_spd;

    fn spd_from(mat: DenseMatrix) -> SpdMatrix {
        SpdMatrix::from_symmetric(mat).unwrap()
    }

    /// Householder reflection `I - 2 v v^T / (v^T v)`: an orthogonal matrix
    /// built without going through polar_project.
    fn householder(v: &[f64]) -> DenseMatrix {
        let n = v.len();
        let norm_sq: f64 = v.iter().map(|x| x * x).sum();
        let mut h = DenseMatrix::identity(n);
        for i in 0..n {
            for j in 0..n {
                h.set(i, j, h.get(i, j) - 2.0 * v[i] * v[j] / norm_sq);
            }
        }
        h
    }

    #[test]
    fn sym_pow_identity_inverse_sqrt_is_identity() {
        let y = sym_pow(&spd_from(DenseMatrix::identity(3)), -0.5).unwrap();
        assert!(y.sub(&DenseMatrix::identity(3)).frobenius_norm() < 1e-13);
    }

    #[test]
    fn sym_pow_diagonal_analytic() {
        let y = sym_pow(&spd_from(DenseMatrix::from_diag(&[4.0, 9.0])), -0.5).unwrap();
        assert!((y.get(0, 0) - 0.5).abs() < 1e-14);
        assert!((y.get(1, 1) - 1.0 / 3.0).abs() < 1e-14);
        assert!(y.get(0, 1).abs() < 1e-15);
    }

    #[test]
    fn sym_pow_quarter_root_composition() {
        let mut rng = SeededRng::new(21);
        let s = random_spd(&mut rng, 8, 50.0);
        let direct = sym_pow(&s, -0.25).unwrap();
        let half = sym_pow(&s, -0.5).unwrap();
        let composed = sym_pow(&spd_from(half), 0.5).unwrap();
        let err = direct.sub(&composed).frobenius_norm();
        assert!(err < 1e-8, "composition mismatch {err:.3e}");
    }

    #[test]
    fn sym_pow_inverse_sqrt_contract() {
        let mut rng = SeededRng::new(22);
        for n in [4, 16, 64] {
            let s = random_spd(&mut rng, n, 1e6);
            let y = sym_pow(&s, -0.5).unwrap();
            let err = y
                .matmul(s.mat())
                .matmul(&y)
                .sub(&DenseMatrix::identity(n))
                .frobenius_norm();
            assert!(err <= 1e-8 * n as f64, "||YSY - I|| = {err:.3e} at n={n}");
        }
    }

    #[test]
    fn sym_pow_names_offending_eigenvalue() {
        let s = spd_from(DenseMatrix::from_diag(&[1.0, -2.0]));
        match sym_pow(&s, -0.5) {
            Err(LinalgError::SingularEigenvalue { index, value }) => {
                assert_eq!(index, 0);
                assert!((value + 2.0).abs() < 1e-14);
            }
            other => panic!("expected SingularEigenvalue, got {other:?}"),
        }
    }

    #[test]
    fn newton_schulz_identity_converges_fast_without_fallback() {
        let r = inv_sqrt_ns(&spd_from(DenseMatrix::identity(8)), NS_MAX_ITERS, NS_TOL).unwrap();
        assert!(!r.fell_back);
        assert!(r.iterations <= 10, "identity took {} iterations", r.iterations);
        assert!(r.mat.sub(&DenseMatrix::identity(8)).frobenius_norm() < 1e-9);
    }

    #[test]
    fn newton_schulz_diagonal_analytic() {
        let r = inv_sqrt_ns(&spd_from(DenseMatrix::from_diag(&[4.0, 9.0])), 30, 1e-10).unwrap();
        assert!(!r.fell_back);
        assert!((r.mat.get(0, 0) - 0.5).abs() < 1e-10);
        assert!((r.mat.get(1, 1) - 1.0 / 3.0).abs() < 1e-10);
    }

    #[test]
    fn newton_schulz_matches_oracle_on_ill_conditioned_input() {
        let mut rng = SeededRng::new(23);
        let s = random_spd(&mut rng, 32, 1e4);
        let ns = inv_sqrt_ns(&s, NS_MAX_ITERS, NS_TOL).unwrap();
        let oracle = sym_pow(&s, -0.5).unwrap();
        let err = ns.mat.sub(&oracle).frobenius_norm();
        assert!(err < 1e-6, "NS vs oracle disagreement {err:.3e}");
    }

    #[test]
    fn newton_schulz_fallback_still_satisfies_contract() {
        // One iteration cannot reach tolerance; the status must say so and
        // the fallback must still return a valid inverse square root.
        let mut rng = SeededRng::new(24);
        let s = random_spd(&mut rng, 16, 1e4);
        let r = inv_sqrt_ns(&s, 1, 1e-12).unwrap();
        assert!(r.fell_back);
        let err = r
            .mat
            .matmul(s.mat())
            .matmul(&r.mat)
            .sub(&DenseMatrix::identity(16))
            .frobenius_norm();
        assert!(err < 1e-8 * 16.0);
    }

    #[test]
    fn polar_of_orthogonal_matrix_is_itself() {
        let h1 = householder(&[1.0, 2.0, -0.5, 0.3]);
        let h2 = householder(&[0.2, -1.0, 0.8, 2.5]);
        let q = h1.matmul(&h2);
        let p = polar_project(&q).unwrap();
        let err = p.sub(&q).frobenius_norm();
        assert!(err < 1e-8, "polar of orthogonal deviates by {err:.3e}");
    }

    #[test]
    fn polar_of_positive_diagonal_is_identity() {
        let p = polar_project(&DenseMatrix::from_diag(&[3.0, 5.0])).unwrap();
        assert!(p.sub(&DenseMatrix::identity(2)).frobenius_norm() < 1e-10);
    }

    #[test]
    fn polar_matches_svd_oracle() {
        // Oracle: eigendecompose the symmetric embedding [[0, B], [B^T, 0]].
        // Eigenpairs (sigma, [u; v]/sqrt(2)) with sigma > 0 recover B = U S V^T,
        // and the polar factor is U V^T. This route never forms (B^T B)^{-1/2}.
        let mut rng = SeededRng::new(25);
        let b = gaussian_matrix(&mut rng, 16, 16, 1.0);
        let n = 16;
        let mut aug = DenseMatrix::zeros(2 * n, 2 * n);
        for i in 0..n {
            for j in 0..n {
                aug.set(i, n + j, b.get(i, j));
                aug.set(n + j, i, b.get(i, j));
            }
        }
        let eig = sym_eig(&aug).unwrap();
        let mut oracle = DenseMatrix::zeros(n, n);
        for (k, &sigma) in eig.eigenvalues.iter().enumerate() {
            if sigma <= 0.0 {
                continue;
            }
            // u = sqrt(2) * top half, v = sqrt(2) * bottom half.
            for i in 0..n {
                for j in 0..n {
                    let u_i = 2.0_f64.sqrt() * eig.eigenvectors.get(i, k);
                    let v_j = 2.0_f64.sqrt() * eig.eigenvectors.get(n + j, k);
                    oracle.set(i, j, oracle.get(i, j) + u_i * v_j);
                }
            }
        }
        let p = polar_project(&b).unwrap();
        let err = p.sub(&oracle).frobenius_norm();
        assert!(err < 1e-7, "polar vs SVD oracle disagreement {err:.3e}");

        // And P must be the Frobenius-closest orthogonal matrix: nudging it by
        // any small rotation cannot get closer to B.
        let base = b.sub(&p).frobenius_norm();
        for trial in 0..10 {
            let v = gaussian_matrix(&mut SeededRng::new(100 + trial), n, 1, 1.0);
            let h = householder(v.data());
            let moved = b.sub(&p.matmul(&h)).frobenius_norm();
            assert!(
                base <= moved + 1e-9,
                "found a closer orthogonal matrix: {base:.6} vs {moved:.6}"
            );
        }
    }

    #[test]
    fn polar_rejects_rank_deficient_input() {
        let mut b = DenseMatrix::zeros(3, 3);
        b.set(0, 0, 1.0);
        b.set(1, 1, 1.0); // third row/column identically zero
        assert!(matches!(
            polar_project(&b),
            Err(LinalgError::RankDeficient { .. })
        ));
    }
}
