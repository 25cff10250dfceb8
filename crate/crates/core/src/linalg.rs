//! Dense linear-algebra kernels.
//!
//! Everything downstream stores matrices as [`DenseMatrix`] (row-major `f64`).
//! The Cholesky factorization behind [`logdet_psd`] and [`solve_psd`] is
//! implemented here; SVD and the symmetric eigensolver delegate to
//! `nalgebra`.

use std::fmt;
use std::ops::{Index, IndexMut};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Relative tolerance for the symmetry precondition of PSD kernels.
pub const SYMMETRY_TOL: f64 = 1e-10;

const SVD_MAX_ITERS: usize = 10_000;
/// Convergence threshold for the iterative decompositions. A threshold of
/// one ulp can stop the bidiagonal sweep early with wrong singular values.
const ITER_EPS: f64 = 5.0 * f64::EPSILON;

#[derive(Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            writeln!(f, "  {:?}", self.row(r))?;
        }
        write!(f, "]")
    }
}

impl DenseMatrix {
    /// Builds a matrix from row-major entries, rejecting wrong lengths and
    /// non-finite values.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(
                "DenseMatrix::new",
                format!("{} entries", rows * cols),
                format!("{} entries", data.len()),
            ));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: pos / cols.max(1),
                col: pos % cols.max(1),
            });
        }
        Ok(Self { rows, cols, data })
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
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from nested rows. Panics on ragged input.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.as_ref().len(), cols, "ragged rows");
            data.extend_from_slice(r.as_ref());
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    /// Builds a matrix whose columns are the given vectors.
    pub fn from_columns<C: AsRef<[f64]>>(columns: &[C]) -> Self {
        let rows = columns.first().map_or(0, |c| c.as_ref().len());
        Self::from_fn(rows, columns.len(), |r, c| columns[c].as_ref()[r])
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    /// Matrix product. Panics if the inner dimensions disagree.
    pub fn matmul(&self, rhs: &DenseMatrix) -> DenseMatrix {
        assert_eq!(
            self.cols, rhs.rows,
            "matmul: {}x{} * {}x{}",
            self.rows, self.cols, rhs.rows, rhs.cols
        );
        let mut out = Self::zeros(self.rows, rhs.cols);
        let n = rhs.cols;
        for i in 0..self.rows {
            let out_row = &mut out.data[i * n..(i + 1) * n];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let rhs_row = &rhs.data[k * n..(k + 1) * n];
                for (o, &b) in out_row.iter_mut().zip(rhs_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `selfᵀ · rhs` without materializing the transpose.
    pub fn tr_matmul(&self, rhs: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.rows, rhs.rows, "tr_matmul: row counts differ");
        let m = self.cols;
        let n = rhs.cols;
        let mut out = Self::zeros(m, n);
        for k in 0..self.rows {
            let lhs_row = self.row(k);
            let rhs_row = rhs.row(k);
            for (i, &a) in lhs_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let out_row = &mut out.data[i * n..(i + 1) * n];
                for (o, &b) in out_row.iter_mut().zip(rhs_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `self · rhsᵀ` without materializing the transpose.
    pub fn matmul_tr(&self, rhs: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.cols, rhs.cols, "matmul_tr: column counts differ");
        Self::from_fn(self.rows, rhs.rows, |i, j| dot(self.row(i), rhs.row(j)))
    }

    pub fn scale(&self, s: f64) -> DenseMatrix {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn add(&self, rhs: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.shape(), rhs.shape(), "add: shapes differ");
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, rhs: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.shape(), rhs.shape(), "sub: shapes differ");
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }

    /// `self += s * rhs`
    pub fn add_scaled_assign(&mut self, s: f64, rhs: &DenseMatrix) {
        assert_eq!(self.shape(), rhs.shape(), "add_scaled_assign: shapes differ");
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a += s * b;
        }
    }

    /// `I + s * self` for a square matrix.
    pub fn identity_plus_scaled(&self, s: f64) -> DenseMatrix {
        assert!(self.is_square());
        let mut out = self.scale(s);
        for i in 0..self.rows {
            out[(i, i)] += 1.0;
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn column_norms(&self) -> Vec<f64> {
        let mut sq = vec![0.0; self.cols];
        for r in 0..self.rows {
            for (s, v) in sq.iter_mut().zip(self.row(r)) {
                *s += v * v;
            }
        }
        sq.into_iter().map(f64::sqrt).collect()
    }

    /// Copies the listed columns, in order, into a new matrix.
    pub fn select_columns(&self, columns: &[usize]) -> DenseMatrix {
        Self::from_fn(self.rows, columns.len(), |r, c| self[(r, columns[c])])
    }

    /// Horizontal concatenation `(self | rhs)`.
    pub fn hstack(&self, rhs: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.rows, rhs.rows, "hstack: row counts differ");
        Self::from_fn(self.rows, self.cols + rhs.cols, |r, c| {
            if c < self.cols {
                self[(r, c)]
            } else {
                rhs[(r, c - self.cols)]
            }
        })
    }

    /// Largest `|m_ij - m_ji|` relative to `max(1, max |m|)`.
    pub fn relative_asymmetry(&self) -> f64 {
        let scale = self.max_abs().max(1.0);
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst / scale
    }

    /// `(M + Mᵀ) / 2`
    pub fn symmetrized(&self) -> DenseMatrix {
        Self::from_fn(self.rows, self.cols, |i, j| 0.5 * (self[(i, j)] + self[(j, i)]))
    }

    pub(crate) fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Compressed sparse rows, used to apply the propagation matrix without
/// touching its zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn from_dense(m: &DenseMatrix) -> Self {
        let mut row_ptr = Vec::with_capacity(m.rows() + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for r in 0..m.rows() {
            for (c, &v) in m.row(r).iter().enumerate() {
                if v != 0.0 {
                    col_idx.push(c);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            rows: m.rows(),
            cols: m.cols(),
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    fn row_entries(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    /// `m · selfᵀ`
    pub fn left_mul_transposed(&self, m: &DenseMatrix) -> DenseMatrix {
        assert_eq!(m.cols(), self.cols, "left_mul_transposed: shape mismatch");
        let mut out = DenseMatrix::zeros(m.rows(), self.rows);
        for i in 0..m.rows() {
            let src = m.row(i);
            let dst = out.row_mut(i);
            for (j, d) in dst.iter_mut().enumerate() {
                *d = self.row_entries(j).map(|(k, a)| src[k] * a).sum();
            }
        }
        out
    }

    /// `m · self`
    pub fn left_mul(&self, m: &DenseMatrix) -> DenseMatrix {
        assert_eq!(m.cols(), self.rows, "left_mul: shape mismatch");
        let mut out = DenseMatrix::zeros(m.rows(), self.cols);
        for i in 0..m.rows() {
            let src = m.row(i);
            let dst = out.row_mut(i);
            for (k, &s) in src.iter().enumerate() {
                if s == 0.0 {
                    continue;
                }
                for (j, a) in self.row_entries(k) {
                    dst[j] += s * a;
                }
            }
        }
        out
    }
}

/// Lower-triangular Cholesky factor `L` with `M = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: DenseMatrix,
}

impl Cholesky {
    /// Factors a symmetric positive definite matrix. The input is symmetrized
    /// first; pivots below `n · ε_mach · max diag` count as non-positive.
    pub fn factor(m: &DenseMatrix) -> Result<Self> {
        check_symmetric(m)?;
        let n = m.rows();
        let mut l = m.symmetrized();
        let max_diag = (0..n).fold(0.0f64, |acc, i| acc.max(l[(i, i)].abs()));
        let floor = n as f64 * f64::EPSILON * max_diag;
        for j in 0..n {
            let mut pivot = l[(j, j)];
            for k in 0..j {
                pivot -= l[(j, k)] * l[(j, k)];
            }
            if pivot.is_nan() || pivot <= floor {
                return Err(Error::NotPositiveDefinite { index: j, pivot });
            }
            let diag = pivot.sqrt();
            l[(j, j)] = diag;
            for i in (j + 1)..n {
                let mut s = l[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / diag;
            }
            for i in 0..j {
                l[(i, j)] = 0.0;
            }
        }
        Ok(Self { l })
    }

    pub fn factor_matrix(&self) -> &DenseMatrix {
        &self.l
    }

    /// `log det M = 2 Σ log L_ii`
    pub fn logdet(&self) -> f64 {
        2.0 * (0..self.l.rows()).map(|i| self.l[(i, i)].ln()).sum::<f64>()
    }

    /// Solves `M X = B` by forward then backward substitution.
    pub fn solve(&self, b: &DenseMatrix) -> Result<DenseMatrix> {
        let n = self.l.rows();
        if b.rows() != n {
            return Err(Error::shape("solve_psd", format!("{n} rows"), format!("{} rows", b.rows())));
        }
        let mut x = b.clone();
        let k = b.cols();
        // L Y = B
        for i in 0..n {
            for p in 0..i {
                let lip = self.l[(i, p)];
                if lip == 0.0 {
                    continue;
                }
                for c in 0..k {
                    let v = x[(p, c)];
                    x[(i, c)] -= lip * v;
                }
            }
            let d = self.l[(i, i)];
            for v in x.row_mut(i) {
                *v /= d;
            }
        }
        // Lᵀ X = Y
        for i in (0..n).rev() {
            for p in (i + 1)..n {
                let lpi = self.l[(p, i)];
                if lpi == 0.0 {
                    continue;
                }
                for c in 0..k {
                    let v = x[(p, c)];
                    x[(i, c)] -= lpi * v;
                }
            }
            let d = self.l[(i, i)];
            for v in x.row_mut(i) {
                *v /= d;
            }
        }
        Ok(x)
    }
}

fn check_symmetric(m: &DenseMatrix) -> Result<()> {
    if !m.is_square() {
        return Err(Error::NotSquare {
            rows: m.rows(),
            cols: m.cols(),
        });
    }
    let asymmetry = m.relative_asymmetry();
    if asymmetry > SYMMETRY_TOL {
        return Err(Error::NotSymmetric { asymmetry });
    }
    Ok(())
}

/// Natural-log determinant of a symmetric positive definite matrix.
pub fn logdet_psd(m: &DenseMatrix) -> Result<f64> {
    Ok(Cholesky::factor(m)?.logdet())
}

/// Solves `m X = b` for symmetric positive definite `m`.
pub fn solve_psd(m: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    Cholesky::factor(m)?.solve(b)
}

/// Which Gram product of a `d × N` matrix to form.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GramSide {
    /// `ZᵀZ`, `N × N`
    NodeSide,
    /// `ZZᵀ`, `d × d`
    FeatureSide,
}

impl GramSide {
    /// The side with the smaller Gram matrix for a `d × N` input.
    pub fn smaller(d: usize, n: usize) -> Self {
        if d <= n {
            GramSide::FeatureSide
        } else {
            GramSide::NodeSide
        }
    }
}

/// Gram product of `z`; the result is exactly symmetric.
pub fn gram(z: &DenseMatrix, side: GramSide) -> DenseMatrix {
    let g = match side {
        GramSide::NodeSide => z.tr_matmul(z),
        GramSide::FeatureSide => z.matmul_tr(z),
    };
    // mirror the upper triangle so the output is bitwise symmetric
    let mut g = g;
    for i in 0..g.rows() {
        for j in 0..i {
            g[(i, j)] = g[(j, i)];
        }
    }
    g
}

/// Thin singular value decomposition `M = U diag(σ) Vᵀ`.
#[derive(Debug, Clone)]
pub struct Svd {
    /// `m × k` with orthonormal columns, `k = min(m, n)`
    pub u: DenseMatrix,
    /// descending, non-negative
    pub singular_values: Vec<f64>,
    /// `n × k` with orthonormal columns
    pub v: DenseMatrix,
}

impl Svd {
    pub fn reconstruct(&self) -> DenseMatrix {
        let mut us = self.u.clone();
        for r in 0..us.rows() {
            for (c, s) in self.singular_values.iter().enumerate() {
                us[(r, c)] *= s;
            }
        }
        us.matmul_tr(&self.v)
    }

    /// Number of singular values above `rel_tol · σ_max`.
    pub fn rank(&self, rel_tol: f64) -> usize {
        let max = self.singular_values.first().copied().unwrap_or(0.0);
        if max <= 0.0 {
            return 0;
        }
        self.singular_values.iter().filter(|&&s| s > rel_tol * max).count()
    }
}

pub fn svd(m: &DenseMatrix) -> Result<Svd> {
    let (rows, cols) = m.shape();
    let k = rows.min(cols);
    if k == 0 {
        return Ok(Svd {
            u: DenseMatrix::zeros(rows, 0),
            singular_values: Vec::new(),
            v: DenseMatrix::zeros(cols, 0),
        });
    }
    if !m.is_finite() {
        return Err(Error::InvalidArgument("svd input has non-finite entries".into()));
    }
    let decomposed = m
        .to_nalgebra()
        .try_svd(true, true, ITER_EPS, SVD_MAX_ITERS)
        .ok_or(Error::ConvergenceFailure("svd"))?;
    let u = decomposed.u.as_ref().ok_or(Error::ConvergenceFailure("svd"))?;
    let v_t = decomposed.v_t.as_ref().ok_or(Error::ConvergenceFailure("svd"))?;
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| decomposed.singular_values[b].total_cmp(&decomposed.singular_values[a]));
    Ok(Svd {
        u: DenseMatrix::from_fn(rows, k, |r, c| u[(r, order[c])]),
        singular_values: order.iter().map(|&i| decomposed.singular_values[i].max(0.0)).collect(),
        v: DenseMatrix::from_fn(cols, k, |r, c| v_t[(order[c], r)]),
    })
}

/// Eigendecomposition of a symmetric matrix: eigenvalues ascending, with the
/// matching eigenvectors as columns.
pub fn symmetric_eigen(m: &DenseMatrix) -> Result<(Vec<f64>, DenseMatrix)> {
    check_symmetric(m)?;
    let n = m.rows();
    if n == 0 {
        return Ok((Vec::new(), DenseMatrix::zeros(0, 0)));
    }
    let eig = nalgebra::SymmetricEigen::try_new(m.symmetrized().to_nalgebra(), ITER_EPS, SVD_MAX_ITERS)
        .ok_or(Error::ConvergenceFailure("symmetric eigendecomposition"))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DenseMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok((values, vectors))
}

/// Unique symmetric PSD square root `S` with `S S = m`.
pub fn psd_sqrt(m: &DenseMatrix) -> Result<DenseMatrix> {
    let (values, vectors) = symmetric_eigen(m)?;
    let n = values.len();
    let mut scaled = vectors.clone();
    for r in 0..n {
        for (c, &lambda) in values.iter().enumerate() {
            scaled[(r, c)] *= lambda.max(0.0).sqrt();
        }
    }
    Ok(scaled.matmul_tr(&vectors).symmetrized())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
        DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    fn random_pd(n: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
        let a = random(n, n, rng);
        gram(&a, GramSide::FeatureSide).add(&DenseMatrix::identity(n).scale(0.1))
    }

    #[test]
    fn new_rejects_non_finite_and_bad_length() {
        assert!(matches!(
            DenseMatrix::new(1, 2, vec![1.0, f64::NAN]),
            Err(Error::NonFinite { row: 0, col: 1 })
        ));
        assert!(matches!(DenseMatrix::new(2, 2, vec![1.0]), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn logdet_examples() {
        assert_eq!(logdet_psd(&DenseMatrix::identity(3)).unwrap(), 0.0);
        let m = DenseMatrix::from_diag(&[2.0, 8.0]);
        assert_relative_eq!(logdet_psd(&m).unwrap(), (2.0f64 * 8.0).ln(), epsilon = 1e-14);
        let singular = DenseMatrix::from_rows(&[[1.0, 1.0], [1.0, 1.0]]);
        assert!(matches!(logdet_psd(&singular), Err(Error::NotPositiveDefinite { .. })));
        let rect = DenseMatrix::zeros(2, 3);
        assert!(matches!(logdet_psd(&rect), Err(Error::NotSquare { .. })));
        let asym = DenseMatrix::from_rows(&[[2.0, 1.0], [0.0, 2.0]]);
        assert!(matches!(logdet_psd(&asym), Err(Error::NotSymmetric { .. })));
    }

    #[test]
    fn logdet_matches_eigenvalue_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in [1, 2, 5, 13, 31, 50] {
            let m = random_pd(n, &mut rng);
            let (values, _) = symmetric_eigen(&m).unwrap();
            let oracle: f64 = values.iter().map(|v| v.ln()).sum();
            assert!((logdet_psd(&m).unwrap() - oracle).abs() < 1e-8, "n = {n}");
        }
    }

    #[test]
    fn gram_examples() {
        let i2 = DenseMatrix::identity(2);
        assert_eq!(gram(&i2, GramSide::FeatureSide), i2);
        let z = DenseMatrix::from_rows(&[[1.0, 1.0], [0.0, 0.0]]);
        assert_eq!(
            gram(&z, GramSide::NodeSide),
            DenseMatrix::from_rows(&[[1.0, 1.0], [1.0, 1.0]])
        );
    }

    #[test]
    fn gram_sides_share_nonzero_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let z = random(4, 9, &mut rng);
        let (small, _) = symmetric_eigen(&gram(&z, GramSide::FeatureSide)).unwrap();
        let (big, _) = symmetric_eigen(&gram(&z, GramSide::NodeSide)).unwrap();
        let big_nonzero: Vec<f64> = big.iter().copied().filter(|v| v.abs() > 1e-9).collect();
        assert_eq!(big_nonzero.len(), small.len());
        for (a, b) in small.iter().zip(&big_nonzero) {
            assert!((a - b).abs() < 1e-10);
        }
        let g = gram(&z, GramSide::NodeSide);
        assert_eq!(g, g.transpose());
    }

    #[test]
    fn commutativity_of_regularized_logdet() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let d = rng.random_range(1..8);
            let n = rng.random_range(1..12);
            let z = random(d, n, &mut rng);
            let alpha = rng.random_range(0.1..50.0);
            let a = logdet_psd(&gram(&z, GramSide::FeatureSide).identity_plus_scaled(alpha)).unwrap();
            let b = logdet_psd(&gram(&z, GramSide::NodeSide).identity_plus_scaled(alpha)).unwrap();
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn svd_examples() {
        let s = svd(&DenseMatrix::from_diag(&[1.0, 3.0])).unwrap();
        assert_relative_eq!(s.singular_values[0], 3.0, epsilon = 1e-14);
        assert_relative_eq!(s.singular_values[1], 1.0, epsilon = 1e-14);

        let u = [1.0, -2.0, 0.5];
        let v = [3.0, 1.0, -1.0, 2.0];
        let outer = DenseMatrix::from_fn(3, 4, |r, c| u[r] * v[c]);
        let s = svd(&outer).unwrap();
        let norm = |x: &[f64]| dot(x, x).sqrt();
        assert_relative_eq!(s.singular_values[0], norm(&u) * norm(&v), epsilon = 1e-12);
        assert!(s.singular_values[1..].iter().all(|&x| x < 1e-12));

        let s = svd(&DenseMatrix::zeros(3, 2)).unwrap();
        assert!(s.singular_values.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn svd_reconstructs_with_orthonormal_bases() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (r, c) in [(5, 3), (3, 5), (7, 7), (1, 4)] {
            let m = random(r, c, &mut rng);
            let s = svd(&m).unwrap();
            let err = s.reconstruct().sub(&m).frobenius_norm() / m.frobenius_norm();
            assert!(err < 1e-8);
            assert!(s.singular_values.windows(2).all(|w| w[0] >= w[1]));
            let k = r.min(c);
            let utu = s.u.tr_matmul(&s.u).sub(&DenseMatrix::identity(k)).max_abs();
            let vtv = s.v.tr_matmul(&s.v).sub(&DenseMatrix::identity(k)).max_abs();
            assert!(utu < 1e-10 && vtv < 1e-10);
        }
    }

    #[test]
    fn solve_examples() {
        let b = DenseMatrix::from_rows(&[[1.5, -2.0], [0.25, 4.0]]);
        assert_eq!(solve_psd(&DenseMatrix::identity(2), &b).unwrap(), b);
        let x = solve_psd(
            &DenseMatrix::from_diag(&[2.0, 4.0]),
            &DenseMatrix::from_rows(&[[2.0], [4.0]]),
        )
        .unwrap();
        assert!(x.sub(&DenseMatrix::from_rows(&[[1.0], [1.0]])).max_abs() < 1e-15);
        let singular = DenseMatrix::from_rows(&[[1.0, 2.0], [2.0, 4.0]]);
        assert!(matches!(
            solve_psd(&singular, &b),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn solve_then_multiply_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for n in [1, 4, 20] {
            let m = random_pd(n, &mut rng);
            let b = random(n, 3, &mut rng);
            let x = solve_psd(&m, &b).unwrap();
            let resid = m.matmul(&x).sub(&b).frobenius_norm() / b.frobenius_norm();
            assert!(resid < 1e-8);
        }
    }

    #[test]
    fn psd_sqrt_squares_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = random_pd(6, &mut rng);
        let s = psd_sqrt(&m).unwrap();
        assert!(s.matmul(&s).sub(&m).max_abs() < 1e-10);
        assert_eq!(s, s.transpose());
    }

    #[test]
    fn csr_products_match_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = DenseMatrix::from_fn(5, 5, |_, _| {
            if rng.random_bool(0.4) {
                rng.random_range(-1.0..1.0)
            } else {
                0.0
            }
        });
        let csr = CsrMatrix::from_dense(&a);
        let m = random(3, 5, &mut rng);
        assert!(csr.left_mul(&m).sub(&m.matmul(&a)).max_abs() < 1e-14);
        assert!(csr.left_mul_transposed(&m).sub(&m.matmul(&a.transpose())).max_abs() < 1e-14);
    }
}
