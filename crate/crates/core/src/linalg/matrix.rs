//! Row-major dense matrix in double precision, the universal numeric carrier.

/// Dense real matrix stored row-major.
///
/// Values are immutable in practice once built by the library (operations
/// return fresh matrices), so instances are safe to share across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    /// Builds a matrix from row-major data. Panics if `data.len() != rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(
            data.len(),
            rows * cols,
            "data length {} does not match {}x{}",
            data.len(),
            rows,
            cols
        );
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Square matrix with the given diagonal.
    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m.data[i * diag.len() + i] = d;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.cols + col] = value;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    /// Validity check: every entry finite (a NaN/Inf entry is a contract
    /// violation upstream).
    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    /// `self * other`.
    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(
            self.cols, other.rows,
            "matmul shape mismatch: {}x{} * {}x{}",
            self.rows, self.cols, other.rows, other.cols
        );
        let mut out = Self::zeros(self.rows, other.cols);
        let oc = other.cols;
        for i in 0..self.rows {
            let arow = self.row(i);
            let orow = &mut out.data[i * oc..(i + 1) * oc];
            for (k, &aik) in arow.iter().enumerate() {
                let brow = &other.data[k * oc..(k + 1) * oc];
                for j in 0..oc {
                    orow[j] += aik * brow[j];
                }
            }
        }
        out
    }

    /// `self^T * other` without materializing the transpose.
    pub fn mul_at_b(&self, other: &Self) -> Self {
        assert_eq!(
            self.rows, other.rows,
            "mul_at_b shape mismatch: {}x{} , {}x{}",
            self.rows, self.cols, other.rows, other.cols
        );
        let (n, m) = (self.cols, other.cols);
        let mut out = Self::zeros(n, m);
        for k in 0..self.rows {
            let arow = self.row(k);
            let brow = other.row(k);
            for i in 0..n {
                let aki = arow[i];
                let orow = &mut out.data[i * m..(i + 1) * m];
                for j in 0..m {
                    orow[j] += aki * brow[j];
                }
            }
        }
        out
    }

    /// `self * other^T` without materializing the transpose.
    pub fn mul_a_bt(&self, other: &Self) -> Self {
        assert_eq!(
            self.cols, other.cols,
            "mul_a_bt shape mismatch: {}x{} , {}x{}",
            self.rows, self.cols, other.rows, other.cols
        );
        let mut out = Self::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            let arow = self.row(i);
            for j in 0..other.rows {
                let brow = other.row(j);
                let mut acc = 0.0;
                for k in 0..self.cols {
                    acc += arow[k] * brow[k];
                }
                out.data[i * other.rows + j] = acc;
            }
        }
        out
    }

    /// `scale * self^T * self`, built exactly symmetric (upper triangle
    /// computed, lower triangle mirrored bit-for-bit).
    pub fn gram_scaled(&self, scale: f64) -> Self {
        let n = self.cols;
        let mut out = Self::zeros(n, n);
        for k in 0..self.rows {
            let row = self.row(k);
            for i in 0..n {
                let v = row[i];
                let orow = &mut out.data[i * n..(i + 1) * n];
                for j in i..n {
                    orow[j] += v * row[j];
                }
            }
        }
        for i in 0..n {
            for j in i..n {
                let v = out.data[i * n + j] * scale;
                out.data[i * n + j] = v;
                out.data[j * n + i] = v;
            }
        }
        out
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for v in &mut out.data {
            *v *= factor;
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.shape(), other.shape(), "add shape mismatch");
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.shape(), other.shape(), "sub shape mismatch");
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            *a -= b;
        }
        out
    }

    /// Entrywise map.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        let mut out = self.clone();
        for v in &mut out.data {
            *v = f(*v);
        }
        out
    }

    /// Exponential moving average step `self += weight * (sample - self)`,
    /// the recurrence form `M <- M + (1-beta)(S - M)`.
    pub fn ema_update(&mut self, sample: &Self, weight: f64) {
        assert_eq!(self.shape(), sample.shape(), "ema shape mismatch");
        for (m, s) in self.data.iter_mut().zip(&sample.data) {
            *m += weight * (*s - *m);
        }
    }

    /// In-place `(self + self^T) / 2`; square only.
    pub fn symmetrize(&mut self) {
        assert!(self.is_square(), "symmetrize requires a square matrix");
        let n = self.rows;
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.5 * (self.data[i * n + j] + self.data[j * n + i]);
                self.data[i * n + j] = v;
                self.data[j * n + i] = v;
            }
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, x| acc.max(x.abs()))
    }

    /// Largest absolute deviation from symmetry; square only.
    pub fn asymmetry(&self) -> f64 {
        assert!(self.is_square());
        let n = self.rows;
        let mut worst = 0.0_f64;
        for i in 0..n {
            for j in (i + 1)..n {
                worst = worst.max((self.data[i * n + j] - self.data[j * n + i]).abs());
            }
        }
        worst
    }

    pub fn trace(&self) -> f64 {
        assert!(self.is_square(), "trace requires a square matrix");
        (0..self.rows).map(|i| self.data[i * self.rows + i]).sum()
    }

    /// `trace(self^T * other)`, the Frobenius inner product.
    pub fn dot(&self, other: &Self) -> f64 {
        assert_eq!(self.shape(), other.shape(), "dot shape mismatch");
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_hand_example() {
        let a = DenseMatrix::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = DenseMatrix::from_vec(3, 2, vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0]);
        let c = a.matmul(&b);
        assert_eq!(c.data(), &[58.0, 64.0, 139.0, 154.0]);
    }

    #[test]
    fn transposed_products_match_explicit_transpose() {
        let a = DenseMatrix::from_vec(3, 2, vec![1.0, -2.0, 0.5, 3.0, -1.0, 4.0]);
        let b = DenseMatrix::from_vec(3, 4, (0..12).map(|i| i as f64 * 0.3 - 1.0).collect());
        let atb = a.mul_at_b(&b);
        let reference = a.transpose().matmul(&b);
        assert_eq!(atb.data(), reference.data());

        let c = DenseMatrix::from_vec(5, 4, (0..20).map(|i| (i as f64).sin()).collect());
        let abt = b.mul_a_bt(&c);
        let reference = b.matmul(&c.transpose());
        for (x, y) in abt.data().iter().zip(reference.data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn gram_is_exactly_symmetric() {
        let a = DenseMatrix::from_vec(4, 3, (0..12).map(|i| (i as f64 * 0.7).cos()).collect());
        let g = a.gram_scaled(0.25);
        assert_eq!(g.asymmetry(), 0.0);
        let reference = a.transpose().matmul(&a).scaled(0.25);
        for (x, y) in g.data().iter().zip(reference.data()) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn ema_update_matches_recurrence() {
        let mut m = DenseMatrix::zeros(2, 2);
        let s = DenseMatrix::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        m.ema_update(&s, 0.1);
        assert_eq!(m.get(0, 0), 0.1);
        m.ema_update(&s, 0.1);
        assert!((m.get(1, 1) - (0.4 + 0.1 * (4.0 - 0.4))).abs() < 1e-15);
    }

    #[test]
    fn finiteness_check_flags_nan() {
        let mut m = DenseMatrix::identity(2);
        assert!(m.is_finite());
        m.set(0, 1, f64::NAN);
        assert!(!m.is_finite());
    }
}
