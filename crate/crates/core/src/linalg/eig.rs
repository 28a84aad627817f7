//! Symmetric eigendecomposition via cyclic Jacobi rotations.
//!
//! Simple and accurate at the n <= 512 scale this crate targets. Each sweep
//! visits every off-diagonal pair once and applies a plane rotation that
//! annihilates it; off-diagonal mass decays quadratically once small.
//!
//! The rotation kernel works on contiguous matrix rows (columns are mirrored
//! from the rows afterwards) and accumulates the transposed eigenvector
//! matrix so its updates are row-contiguous too. [`sym_eig_with_hint`]
//! optionally warm-starts from a previous eigenbasis: rotating the input into
//! that basis first leaves a near-diagonal matrix that converges in one or
//! two sweeps, which is what makes per-step preconditioner refreshes cheap
//! for slowly-moving covariance EMAs.

use super::matrix::DenseMatrix;
use super::LinalgError;

const MAX_SWEEPS: usize = 64;

/// Spectral factorization `S = Q diag(eigenvalues) Q^T`.
///
/// Eigenvalues are ascending; eigenvector columns are orthonormal.
#[derive(Debug, Clone)]
pub struct Eigendecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: DenseMatrix,
}

impl Eigendecomposition {
    /// Rebuilds `Q diag(lambda) Q^T`; the reconstruction oracle used by tests.
    pub fn reconstruct(&self) -> DenseMatrix {
        let q = &self.eigenvectors;
        let n = self.eigenvalues.len();
        let mut scaled = q.clone();
        for i in 0..n {
            for j in 0..n {
                scaled.set(i, j, q.get(i, j) * self.eigenvalues[j]);
            }
        }
        scaled.mul_a_bt(q)
    }

    /// Applies `f` to each eigenvalue and reassembles `Q f(diag) Q^T`.
    /// The result is symmetrized to remove last-bit rounding asymmetry.
    pub fn map_eigenvalues(&self, f: impl Fn(f64) -> f64) -> DenseMatrix {
        let q = &self.eigenvectors;
        let n = self.eigenvalues.len();
        let mut scaled = q.clone();
        for i in 0..n {
            for j in 0..n {
                scaled.set(i, j, q.get(i, j) * f(self.eigenvalues[j]));
            }
        }
        let mut out = scaled.mul_a_bt(q);
        out.symmetrize();
        out
    }
}

/// Relative symmetry tolerance for input validation.
fn symmetry_tolerance(max_abs: f64) -> f64 {
    1e-12 * (1.0 + max_abs)
}

/// Eigendecomposition of a symmetric matrix (any signature, not just SPD).
///
/// Errors on non-square, non-finite, or asymmetric input. Deterministic for
/// a fixed input: the rotation order is fixed and sorting is stable.
pub fn sym_eig(s: &DenseMatrix) -> Result<Eigendecomposition, LinalgError> {
    sym_eig_with_hint(s, None)
}

/// As [`sym_eig`], optionally warm-started from a basis whose columns already
/// nearly diagonalize `s` (for instance the eigenvectors of a nearby matrix).
/// The hint must be orthonormal to within roundoff; results are identical in
/// contract either way, the hint only changes how many sweeps are needed.
pub fn sym_eig_with_hint(
    s: &DenseMatrix,
    hint: Option<&DenseMatrix>,
) -> Result<Eigendecomposition, LinalgError> {
    if !s.is_square() {
        return Err(LinalgError::NotSquare {
            rows: s.rows(),
            cols: s.cols(),
        });
    }
    if !s.is_finite() {
        return Err(LinalgError::NonFinite);
    }
    let tolerance = symmetry_tolerance(s.max_abs());
    let deviation = s.asymmetry();
    if deviation > tolerance {
        return Err(LinalgError::NotSymmetric { deviation, tolerance });
    }

    let n = s.rows();
    let (mut a, mut q_t) = match hint {
        Some(basis) if basis.shape() == (n, n) => {
            // Rotate into the hint basis: B = Q0^T S Q0 is near-diagonal when
            // the hint is good. Accumulate Q^T = Q_B^T Q0^T from Q0^T.
            let mut b = basis.mul_at_b(&s.matmul(basis));
            b.symmetrize();
            (b, basis.transpose())
        }
        _ => (s.clone(), DenseMatrix::identity(n)),
    };
    jacobi_in_place(&mut a, &mut q_t)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a.get(i, i).partial_cmp(&a.get(j, j)).unwrap());

    let eigenvalues: Vec<f64> = order.iter().map(|&i| a.get(i, i)).collect();
    // Row `src` of the accumulated Q^T is eigenvector `src`; place it as
    // column `dst` of Q.
    let mut eigenvectors = DenseMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let row = q_t.row(src);
        for r in 0..n {
            eigenvectors.set(r, dst, row[r]);
        }
    }
    Ok(Eigendecomposition {
        eigenvalues,
        eigenvectors,
    })
}

/// Cyclic Jacobi on `a` (overwritten with a near-diagonal matrix), rotations
/// accumulated into `q_t`, which holds the TRANSPOSED eigenvector matrix
/// (row k = eigenvector k). Converges when the off-diagonal Frobenius mass
/// drops below `sqrt(n) * 1e-14 * (1 + ||S||_F)`.
pub(crate) fn jacobi_in_place(
    a: &mut DenseMatrix,
    q_t: &mut DenseMatrix,
) -> Result<(), LinalgError> {
    let n = a.rows();
    if n <= 1 {
        return Ok(());
    }
    let threshold = (n as f64).sqrt() * 1e-14 * (1.0 + a.frobenius_norm());
    // Rotations on entries this far below the local diagonal scale are
    // pure roundoff churn; their total stays well under `threshold`.
    let skip_scale = 0.5 * f64::EPSILON / n as f64;

    for _sweep in 0..MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n - 1 {
            let row = a.row(p);
            for &v in &row[p + 1..] {
                off += v * v;
            }
        }
        if (2.0 * off).sqrt() <= threshold {
            return Ok(());
        }

        for p in 0..n - 1 {
            for r in p + 1..n {
                let apr = a.get(p, r);
                let app = a.get(p, p);
                let arr = a.get(r, r);
                if apr.abs() <= skip_scale * (app.abs() + arr.abs()) {
                    continue;
                }
                // Stable rotation: t = sgn(theta) / (|theta| + sqrt(1 + theta^2)).
                let theta = 0.5 * (arr - app) / apr;
                let t = if theta.abs() > 1e153 {
                    0.5 / theta // avoid overflow in theta^2
                } else {
                    let sign = if theta >= 0.0 { 1.0 } else { -1.0 };
                    sign / (theta.abs() + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                let h = t * apr;

                rotate_rows(a.data_mut(), n, p, r, c, s);
                // Diagonal and pivot get their closed-form values.
                let data = a.data_mut();
                data[p * n + p] = app - h;
                data[r * n + r] = arr + h;
                data[p * n + r] = 0.0;
                data[r * n + p] = 0.0;
                // Mirror the rotated rows into the columns.
                for j in 0..n {
                    if j != p && j != r {
                        data[j * n + p] = data[p * n + j];
                        data[j * n + r] = data[r * n + j];
                    }
                }
                rotate_rows(q_t.data_mut(), n, p, r, c, s);
            }
        }
    }
    Err(LinalgError::EigNotConverged { sweeps: MAX_SWEEPS })
}

/// Applies the plane rotation to rows `p` and `r` of a flat row-major matrix:
/// `row_p <- c row_p - s row_r`, `row_r <- s row_p + c row_r`. Both rows are
/// contiguous, so this is the vectorizable core of the solver.
#[inline]
fn rotate_rows(data: &mut [f64], n: usize, p: usize, r: usize, c: f64, s: f64) {
    let (lo, hi) = if p < r { (p, r) } else { (r, p) };
    let (head, tail) = data.split_at_mut(hi * n);
    let row_lo = &mut head[lo * n..lo * n + n];
    let row_hi = &mut tail[..n];
    if lo == p {
        for (x, y) in row_lo.iter_mut().zip(row_hi.iter_mut()) {
            let xp = *x;
            let xr = *y;
            *x = c * xp - s * xr;
            *y = s * xp + c * xr;
        }
    } else {
        for (y, x) in row_lo.iter_mut().zip(row_hi.iter_mut()) {
            let xp = *x;
            let xr = *y;
            *x = c * xp - s * xr;
            *y = s * xp + c * xr;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::rng::{gaussian_matrix, SeededRng};

    fn orthonormality_error(q: &DenseMatrix) -> f64 {
        q.mul_at_b(q).sub(&DenseMatrix::identity(q.cols())).frobenius_norm()
    }

    #[test]
    fn identity_has_unit_eigenvalues() {
        let eig = sym_eig(&DenseMatrix::identity(2)).unwrap();
        assert_eq!(eig.eigenvalues, vec![1.0, 1.0]);
        assert!(orthonormality_error(&eig.eigenvectors) < 1e-10 * 2.0);
    }

    #[test]
    fn diagonal_matrix_is_already_solved() {
        let eig = sym_eig(&DenseMatrix::from_diag(&[4.0, 9.0])).unwrap();
        assert_eq!(eig.eigenvalues, vec![4.0, 9.0]);
    }

    #[test]
    fn eigenvalues_sorted_ascending_with_matching_vectors() {
        let s = DenseMatrix::from_diag(&[9.0, 1.0, 4.0]);
        let eig = sym_eig(&s).unwrap();
        assert_eq!(eig.eigenvalues, vec![1.0, 4.0, 9.0]);
        // Column 0 must be the eigenvector of eigenvalue 1 (axis e1).
        assert!(eig.eigenvectors.get(1, 0).abs() > 0.999);
    }

    #[test]
    fn random_spd_reconstructs_within_contract() {
        let mut rng = SeededRng::new(11);
        let b = gaussian_matrix(&mut rng, 8, 8, 1.0);
        let s = b.gram_scaled(1.0); // SPD with probability 1
        let eig = sym_eig(&s).unwrap();
        let err = eig.reconstruct().sub(&s).frobenius_norm();
        assert!(
            err <= 1e-9 * (1.0 + s.frobenius_norm()),
            "reconstruction error {err:.3e} out of contract"
        );
        assert!(orthonormality_error(&eig.eigenvectors) <= 1e-10 * 8.0);
    }

    #[test]
    fn large_matrix_reconstructs_within_contract() {
        let mut rng = SeededRng::new(12);
        let b = gaussian_matrix(&mut rng, 96, 96, 1.0);
        let mut s = b.gram_scaled(1.0 / 96.0);
        // Widen the spectrum.
        for i in 0..96 {
            s.set(i, i, s.get(i, i) + (i as f64) * 0.25);
        }
        let eig = sym_eig(&s).unwrap();
        let err = eig.reconstruct().sub(&s).frobenius_norm();
        assert!(
            err <= 1e-9 * (1.0 + s.frobenius_norm()),
            "reconstruction error {err:.3e}"
        );
        assert!(orthonormality_error(&eig.eigenvectors) <= 1e-10 * 96.0);
        for w in eig.eigenvalues.windows(2) {
            assert!(w[0] <= w[1], "eigenvalues not ascending");
        }
    }

    #[test]
    fn indefinite_symmetric_input_is_supported() {
        // [[0, 1], [1, 0]] has eigenvalues -1, 1.
        let s = DenseMatrix::from_vec(2, 2, vec![0.0, 1.0, 1.0, 0.0]);
        let eig = sym_eig(&s).unwrap();
        assert!((eig.eigenvalues[0] + 1.0).abs() < 1e-14);
        assert!((eig.eigenvalues[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn asymmetric_input_is_a_contract_error() {
        let s = DenseMatrix::from_vec(2, 2, vec![1.0, 2.0, 0.0, 1.0]);
        assert!(matches!(sym_eig(&s), Err(LinalgError::NotSymmetric { .. })));
    }

    #[test]
    fn non_square_input_is_a_contract_error() {
        let s = DenseMatrix::zeros(2, 3);
        assert!(matches!(sym_eig(&s), Err(LinalgError::NotSquare { .. })));
    }

    #[test]
    fn deterministic_for_fixed_input() {
        let mut rng = SeededRng::new(5);
        let s = gaussian_matrix(&mut rng, 12, 12, 1.0).gram_scaled(1.0);
        let a = sym_eig(&s).unwrap();
        let b = sym_eig(&s).unwrap();
        assert_eq!(a.eigenvalues, b.eigenvalues);
        assert_eq!(a.eigenvectors.data(), b.eigenvectors.data());
    }

    #[test]
    fn warm_hint_reproduces_cold_decomposition_within_contract() {
        let mut rng = SeededRng::new(13);
        let s = gaussian_matrix(&mut rng, 24, 24, 1.0).gram_scaled(1.0);
        let cold = sym_eig(&s).unwrap();

        // Perturb S slightly; the old basis nearly diagonalizes it.
        let mut bumped = s.clone();
        let noise = gaussian_matrix(&mut rng, 24, 24, 0.01).gram_scaled(1.0);
        for (d, x) in bumped.data_mut().iter_mut().zip(noise.data()) {
            *d += x;
        }
        let warm = sym_eig_with_hint(&bumped, Some(&cold.eigenvectors)).unwrap();
        let err = warm.reconstruct().sub(&bumped).frobenius_norm();
        assert!(err <= 1e-9 * (1.0 + bumped.frobenius_norm()), "warm reconstruction {err:.3e}");
        assert!(orthonormality_error(&warm.eigenvectors) <= 1e-10 * 24.0);

        let cold_bumped = sym_eig(&bumped).unwrap();
        for (a, b) in warm.eigenvalues.iter().zip(&cold_bumped.eigenvalues) {
            assert!((a - b).abs() <= 1e-10 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }
}
