//! Dense real linear algebra on small row-major matrices.
//!
//! Everything here is `f64`. The SVD is a one-sided (Hestenes) Jacobi
//! iteration, which is accurate to working precision on the matrix sizes
//! used in this crate (a few hundred rows at most). Symmetric
//! eigendecompositions go through `nalgebra` so the two factorizations
//! stay independent of each other and can be used to cross-check.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cosine similarity of vectors shorter than this is defined as 0.
pub const COSINE_ZERO_NORM: f64 = 1e-12;

const JACOBI_MAX_SWEEPS: usize = 60;
const EIGEN_MAX_ITERATIONS: usize = 10_000;

/// Dense `rows × cols` matrix stored row-major.
///
/// Zero-sized dimensions are allowed; they show up as the empty halves of a
/// subspace split (`d × 0` bases).
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dims(
                "Matrix::new",
                format!("{} entries ({rows}x{cols})", rows * cols),
                format!("{} entries", data.len()),
            ));
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

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from row vectors, which must all have the same length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            let row = row.as_ref();
            if row.len() != cols {
                return Err(Error::dims("Matrix::from_rows", cols, row.len()));
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    /// Builds a `rows × columns.len()` matrix from column vectors.
    pub fn from_columns<C: AsRef<[f64]>>(rows: usize, columns: &[C]) -> Result<Self> {
        let cols = columns.len();
        let mut m = Self::zeros(rows, cols);
        for (c, col) in columns.iter().enumerate() {
            let col = col.as_ref();
            if col.len() != rows {
                return Err(Error::dims("Matrix::from_columns", rows, col.len()));
            }
            for (r, &v) in col.iter().enumerate() {
                m[(r, c)] = v;
            }
        }
        Ok(m)
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    /// `a bᵀ`
    pub fn outer(a: &[f64], b: &[f64]) -> Self {
        Self::from_fn(a.len(), b.len(), |r, c| a[r] * b[c])
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

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// Row-major entries.
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

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    /// Columns `start..end` as a new matrix.
    pub fn column_block(&self, start: usize, end: usize) -> Matrix {
        assert!(start <= end && end <= self.cols, "column block out of range");
        Self::from_fn(self.rows, end - start, |r, c| self[(r, start + c)])
    }

    /// Horizontal concatenation; all blocks must share a row count.
    pub fn hcat(blocks: &[&Matrix]) -> Result<Matrix> {
        let rows = blocks.first().map_or(0, |b| b.rows);
        if let Some(bad) = blocks.iter().find(|b| b.rows != rows) {
            return Err(Error::dims("Matrix::hcat", rows, bad.rows));
        }
        let cols = blocks.iter().map(|b| b.cols).sum();
        let mut out = Self::zeros(rows, cols);
        let mut offset = 0;
        for b in blocks {
            for r in 0..rows {
                out.data[r * cols + offset..r * cols + offset + b.cols].copy_from_slice(b.row(r));
            }
            offset += b.cols;
        }
        Ok(out)
    }

    pub fn transpose(&self) -> Matrix {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    /// Matrix product. Panics on incompatible shapes; see [`Matrix::checked_matmul`].
    pub fn matmul(&self, rhs: &Matrix) -> Matrix {
        assert_eq!(
            self.cols, rhs.rows,
            "matmul shape mismatch: {}x{} * {}x{}",
            self.rows, self.cols, rhs.rows, rhs.cols
        );
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(rhs.row(k)) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn checked_matmul(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.cols != rhs.rows {
            return Err(Error::dims(
                "matmul",
                format!("rhs with {} rows", self.cols),
                format!("{}x{}", rhs.rows, rhs.cols),
            ));
        }
        Ok(self.matmul(rhs))
    }

    /// `self · x`
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::dims("matvec", self.cols, x.len()));
        }
        Ok((0..self.rows).map(|r| dot(self.row(r), x)).collect())
    }

    /// `selfᵀ · x`
    pub fn transpose_matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.rows {
            return Err(Error::dims("transpose_matvec", self.rows, x.len()));
        }
        let mut out = vec![0.0; self.cols];
        for (r, &xr) in x.iter().enumerate() {
            for (o, &a) in out.iter_mut().zip(self.row(r)) {
                *o += a * xr;
            }
        }
        Ok(out)
    }

    pub fn scaled(&self, s: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    /// `self += s · other`
    pub fn add_scaled(&mut self, other: &Matrix, s: f64) {
        assert_eq!(self.shape(), other.shape(), "add_scaled shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        frobenius_norm(self)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Largest entrywise `|selfᵢⱼ − selfⱼᵢ|`; infinite for non-square input.
    pub fn asymmetry(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let mut worst = 0.0_f64;
        for r in 0..self.rows {
            for c in r + 1..self.cols {
                worst = worst.max((self[(r, c)] - self[(c, r)]).abs());
            }
        }
        worst
    }

    /// `(A + Aᵀ) / 2`
    pub fn symmetrized(&self) -> Matrix {
        assert!(self.is_square(), "symmetrize needs a square matrix");
        Self::from_fn(self.rows, self.cols, |r, c| 0.5 * (self[(r, c)] + self[(c, r)]))
    }

    pub(crate) fn to_nalgebra(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    pub(crate) fn from_nalgebra(m: &nalgebra::DMatrix<f64>) -> Matrix {
        Self::from_fn(m.nrows(), m.ncols(), |r, c| m[(r, c)])
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            writeln!(f, "  {:?}", self.row(r))?;
        }
        write!(f, "]")
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

impl Mul for &Matrix {
    type Output = Matrix;

    fn mul(self, rhs: &Matrix) -> Matrix {
        self.matmul(rhs)
    }
}

impl Add for &Matrix {
    type Output = Matrix;

    fn add(self, rhs: &Matrix) -> Matrix {
        assert_eq!(self.shape(), rhs.shape(), "add shape mismatch");
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &Matrix {
    type Output = Matrix;

    fn sub(self, rhs: &Matrix) -> Matrix {
        assert_eq!(self.shape(), rhs.shape(), "sub shape mismatch");
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn frobenius_norm(w: &Matrix) -> f64 {
    w.data.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `⟨A, B⟩_F = tr(AᵀB)`
pub fn frobenius_inner(a: &Matrix, b: &Matrix) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::dims(
            "frobenius_inner",
            format!("{:?}", a.shape()),
            format!("{:?}", b.shape()),
        ));
    }
    Ok(dot(&a.data, &b.data))
}

/// `aᵀb / (‖a‖‖b‖)`, or 0 when either vector is (numerically) zero.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::dims("cosine_similarity", a.len(), b.len()));
    }
    let (na, nb) = (norm(a), norm(b));
    if na < COSINE_ZERO_NORM || nb < COSINE_ZERO_NORM {
        return Ok(0.0);
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Thin singular value decomposition `W = U · diag(σ) · Vᵀ`.
///
/// With `k = min(rows, cols)`: `u` is `rows × k`, `v` is `cols × k`, both with
/// orthonormal columns, and `sigma` is non-increasing. Each column pair is
/// signed so that the largest-magnitude entry of the `u` column is positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvdFactorization {
    pub u: Matrix,
    pub sigma: Vec<f64>,
    pub v: Matrix,
}

impl SvdFactorization {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    pub fn reconstruct(&self) -> Matrix {
        self.truncated(self.sigma.len())
    }

    /// Best rank-`k` approximation `Σ_{i<k} σᵢ uᵢ vᵢᵀ`.
    pub fn truncated(&self, k: usize) -> Matrix {
        self.partial_sum(0, k)
    }

    /// `Σ_{start≤i<end} σᵢ uᵢ vᵢᵀ`
    pub fn partial_sum(&self, start: usize, end: usize) -> Matrix {
        let end = end.min(self.sigma.len());
        let mut out = Matrix::zeros(self.u.rows(), self.v.rows());
        for i in start.min(end)..end {
            let (u, v) = (self.u.column(i), self.v.column(i));
            for r in 0..out.rows() {
                let scale = self.sigma[i] * u[r];
                if scale == 0.0 {
                    continue;
                }
                for (o, vc) in out.data[r * out.cols..(r + 1) * out.cols].iter_mut().zip(&v) {
                    *o += scale * vc;
                }
            }
        }
        out
    }

    /// `sqrt(Σ_{i≥k} σᵢ²)`, the Frobenius error of the rank-`k` truncation.
    pub fn tail_energy(&self, k: usize) -> f64 {
        self.sigma.iter().skip(k).map(|s| s * s).sum::<f64>().sqrt()
    }
}

/// Computes the thin SVD by one-sided Jacobi rotations.
pub fn svd(w: &Matrix) -> Result<SvdFactorization> {
    if !w.is_finite() {
        return Err(Error::NonFinite("svd input".into()));
    }
    if w.rows >= w.cols {
        let (u, sigma, v) = jacobi_tall(w)?;
        Ok(sign_normalize(u, sigma, v))
    } else {
        let (u, sigma, v) = jacobi_tall(&w.transpose())?;
        Ok(sign_normalize(v, sigma, u))
    }
}

/// One-sided Jacobi on a matrix with `rows ≥ cols`.
fn jacobi_tall(w: &Matrix) -> Result<(Matrix, Vec<f64>, Matrix)> {
    let (m, n) = w.shape();
    let mut cols: Vec<Vec<f64>> = (0..n).map(|c| w.column(c)).collect();
    let mut vcols: Vec<Vec<f64>> = (0..n)
        .map(|c| {
            let mut e = vec![0.0; n];
            e[c] = 1.0;
            e
        })
        .collect();
    let tol = f64::EPSILON * (m.max(1) as f64);

    let mut converged = n < 2;
    for _ in 0..JACOBI_MAX_SWEEPS {
        if converged {
            break;
        }
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = dot(&cols[p], &cols[p]);
                let beta = dot(&cols[q], &cols[q]);
                let gamma = dot(&cols[p], &cols[q]);
                if gamma == 0.0 || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_pair(&mut cols, p, q, c, s);
                rotate_pair(&mut vcols, p, q, c, s);
            }
        }
        converged = !rotated;
    }
    if !converged {
        return Err(Error::NonConvergence {
            routine: "one-sided Jacobi SVD",
            iterations: JACOBI_MAX_SWEEPS,
        });
    }

    let norms: Vec<f64> = cols.iter().map(|c| norm(c)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]).then(a.cmp(&b)));

    let sigma: Vec<f64> = order.iter().map(|&i| norms[i]).collect();
    let mut ucols: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut deficient = Vec::new();
    for (slot, &i) in order.iter().enumerate() {
        if norms[i] > f64::MIN_POSITIVE {
            ucols.push(cols[i].iter().map(|v| v / norms[i]).collect());
        } else {
            ucols.push(vec![0.0; m]);
            deficient.push(slot);
        }
    }
    for slot in deficient {
        ucols[slot] = orthonormal_completion(&ucols, slot, m);
    }
    let vsorted: Vec<Vec<f64>> = order.iter().map(|&i| vcols[i].clone()).collect();
    Ok((
        Matrix::from_columns(m, &ucols)?,
        sigma,
        Matrix::from_columns(n, &vsorted)?,
    ))
}

fn rotate_pair(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (left, right) = cols.split_at_mut(q);
    let (a, b) = (&mut left[p], &mut right[0]);
    for (x, y) in a.iter_mut().zip(b.iter_mut()) {
        let (xp, yq) = (*x, *y);
        *x = c * xp - s * yq;
        *y = s * xp + c * yq;
    }
}

/// A unit vector orthogonal to every nonzero column in `cols` except `skip`.
fn orthonormal_completion(cols: &[Vec<f64>], skip: usize, m: usize) -> Vec<f64> {
    for e in 0..m {
        let mut cand = vec![0.0; m];
        cand[e] = 1.0;
        // two passes of Gram-Schmidt
        for _ in 0..2 {
            for (j, col) in cols.iter().enumerate() {
                if j == skip {
                    continue;
                }
                let proj = dot(&cand, col);
                for (c, v) in cand.iter_mut().zip(col) {
                    *c -= proj * v;
                }
            }
        }
        let n = norm(&cand);
        if n > 0.5 {
            return cand.into_iter().map(|v| v / n).collect();
        }
    }
    unreachable!("column space of dimension {m} cannot be exhausted by fewer than {m} vectors")
}

fn column_sign(col: &[f64]) -> f64 {
    let max = col.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let positive = col.iter().any(|&v| v.abs() == max && v > 0.0);
    if positive || max == 0.0 {
        1.0
    } else {
        -1.0
    }
}

fn sign_normalize(mut u: Matrix, sigma: Vec<f64>, mut v: Matrix) -> SvdFactorization {
    for c in 0..sigma.len() {
        if column_sign(&u.column(c)) < 0.0 {
            for r in 0..u.rows() {
                u[(r, c)] = -u[(r, c)];
            }
            for r in 0..v.rows() {
                v[(r, c)] = -v[(r, c)];
            }
        }
    }
    SvdFactorization { u, sigma, v }
}

/// Eigendecomposition `H = Q · diag(λ) · Qᵀ` of a symmetric matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetricEigen {
    /// Non-increasing.
    pub eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors as columns, matching `eigenvalues`.
    pub eigenvectors: Matrix,
}

impl SymmetricEigen {
    pub fn reconstruct(&self) -> Matrix {
        let q = &self.eigenvectors;
        let scaled = Matrix::from_fn(q.rows(), q.cols(), |r, c| q[(r, c)] * self.eigenvalues[c]);
        scaled.matmul(&q.transpose())
    }

    pub fn max(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(0.0)
    }

    pub fn min(&self) -> f64 {
        self.eigenvalues.last().copied().unwrap_or(0.0)
    }
}

/// Tolerance on `|hᵢⱼ − hⱼᵢ|` (relative to `max(1, max|h|)`) accepted as symmetric.
pub const SYMMETRY_TOLERANCE: f64 = 1e-8;

pub fn symmetric_eigendecomposition(h: &Matrix) -> Result<SymmetricEigen> {
    if !h.is_square() {
        return Err(Error::dims(
            "symmetric_eigendecomposition",
            "square matrix",
            format!("{}x{}", h.rows(), h.cols()),
        ));
    }
    if !h.is_finite() {
        return Err(Error::NonFinite("eigendecomposition input".into()));
    }
    let asymmetry = h.asymmetry();
    if asymmetry > SYMMETRY_TOLERANCE * h.max_abs().max(1.0) {
        return Err(Error::NotSymmetric { asymmetry });
    }
    let n = h.rows();
    if n == 0 {
        return Ok(SymmetricEigen {
            eigenvalues: vec![],
            eigenvectors: Matrix::zeros(0, 0),
        });
    }
    let eig = nalgebra::SymmetricEigen::try_new(
        h.symmetrized().to_nalgebra(),
        f64::EPSILON,
        EIGEN_MAX_ITERATIONS,
    )
    .ok_or(Error::NonConvergence {
        routine: "symmetric eigendecomposition",
        iterations: EIGEN_MAX_ITERATIONS,
    })?;
    let vectors = Matrix::from_nalgebra(&eig.eigenvectors);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let eigenvalues = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let columns: Vec<Vec<f64>> = order
        .iter()
        .map(|&i| {
            let col = vectors.column(i);
            let s = column_sign(&col);
            col.into_iter().map(|v| v * s).collect()
        })
        .collect();
    Ok(SymmetricEigen {
        eigenvalues,
        eigenvectors: Matrix::from_columns(n, &columns)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    fn orthonormality_residual(q: &Matrix) -> f64 {
        (&q.transpose().matmul(q) - &Matrix::identity(q.cols())).frobenius_norm()
    }

    #[test]
    fn identity_svd() {
        let f = svd(&Matrix::identity(2)).unwrap();
        assert_eq!(f.sigma, vec![1.0, 1.0]);
        let uvt = f.u.matmul(&f.v.transpose());
        assert!((&uvt - &Matrix::identity(2)).frobenius_norm() < 1e-15);
    }

    #[test]
    fn diagonal_svd_sorts_magnitudes() {
        let f = svd(&Matrix::diag(&[1.0, -3.0])).unwrap();
        assert!((f.sigma[0] - 3.0).abs() < 1e-15);
        assert!((f.sigma[1] - 1.0).abs() < 1e-15);
        assert!((&f.reconstruct() - &Matrix::diag(&[1.0, -3.0])).frobenius_norm() < 1e-14);
    }

    #[test]
    fn seeded_tall_and_wide_reconstruct() {
        for (rows, cols) in [(3, 2), (2, 3), (7, 7), (32, 16), (5, 40)] {
            let w = random_matrix(rows, cols, 7 + rows as u64 * 31 + cols as u64);
            let f = svd(&w).unwrap();
            assert_eq!(f.u.shape(), (rows, rows.min(cols)));
            assert_eq!(f.v.shape(), (cols, rows.min(cols)));
            assert!((&f.reconstruct() - &w).frobenius_norm() <= 1e-10);
            assert!(orthonormality_residual(&f.u) <= 1e-10);
            assert!(orthonormality_residual(&f.v) <= 1e-10);
            assert!(f.sigma.windows(2).all(|p| p[0] >= p[1]));
        }
    }

    #[test]
    fn rank_deficient_gets_completed_basis() {
        let w = Matrix::outer(&[1.0, 2.0, 3.0], &[1.0, -1.0, 0.5]);
        let f = svd(&w).unwrap();
        assert!(f.sigma[1].abs() < 1e-12 && f.sigma[2].abs() < 1e-12);
        assert!(orthonormality_residual(&f.u) <= 1e-10);
        assert!((&f.reconstruct() - &w).frobenius_norm() <= 1e-12);

        let zero = svd(&Matrix::zeros(3, 2)).unwrap();
        assert_eq!(zero.sigma, vec![0.0, 0.0]);
        assert!(orthonormality_residual(&zero.u) <= 1e-12);
    }

    #[test]
    fn sign_convention_and_determinism() {
        let w = random_matrix(6, 4, 99);
        let a = svd(&w).unwrap();
        let b = svd(&w).unwrap();
        assert_eq!(a, b);
        for c in 0..4 {
            assert_eq!(column_sign(&a.u.column(c)), 1.0);
        }
        // flipping the input flips V, never U's dominant sign
        let neg = svd(&w.scaled(-1.0)).unwrap();
        for c in 0..4 {
            assert_eq!(column_sign(&neg.u.column(c)), 1.0);
        }
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let expected = 32.0 / (14.0_f64.sqrt() * 77.0_f64.sqrt());
        let got = cosine_similarity(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert!((got - expected).abs() < 1e-15);
        assert!((got - 0.97463).abs() < 1e-5);
        assert_eq!(cosine_similarity(&[0.0, 0.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!(cosine_similarity(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn frobenius_examples() {
        assert_eq!(frobenius_norm(&Matrix::zeros(3, 4)), 0.0);
        assert_eq!(frobenius_norm(&Matrix::identity(3)), 3.0_f64.sqrt());
        let m = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        assert_eq!(frobenius_norm(&m), 30.0_f64.sqrt());
    }

    #[test]
    fn eigen_examples() {
        let e = symmetric_eigendecomposition(&Matrix::diag(&[1.0, 5.0, 2.0])).unwrap();
        assert_eq!(e.eigenvalues.len(), 3);
        for (got, want) in e.eigenvalues.iter().zip([5.0, 2.0, 1.0]) {
            assert!((got - want).abs() < 1e-14);
        }
        let z = symmetric_eigendecomposition(&Matrix::zeros(3, 3)).unwrap();
        assert!(z.eigenvalues.iter().all(|v| *v == 0.0));

        let a = random_matrix(4, 4, 3);
        let h = (&a + &a.transpose()).scaled(0.5);
        let e = symmetric_eigendecomposition(&h).unwrap();
        let scale = h.frobenius_norm().max(1.0);
        assert!((&e.reconstruct() - &h).frobenius_norm() <= 1e-8 * scale);
        assert!(orthonormality_residual(&e.eigenvectors) <= 1e-8);
    }

    #[test]
    fn eigen_rejects_asymmetric() {
        let m = Matrix::from_rows(&[[1.0, 2.0], [0.0, 1.0]]).unwrap();
        assert!(matches!(
            symmetric_eigendecomposition(&m),
            Err(Error::NotSymmetric { .. })
        ));
        assert!(symmetric_eigendecomposition(&Matrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn singular_values_match_gram_eigenvalues() {
        for seed in 0..10 {
            let w = random_matrix(9, 5, seed);
            let f = svd(&w).unwrap();
            let e = symmetric_eigendecomposition(&w.transpose().matmul(&w)).unwrap();
            for (s, l) in f.sigma.iter().zip(&e.eigenvalues) {
                assert!((s - l.max(0.0).sqrt()).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn shape_errors() {
        assert!(Matrix::new(2, 2, vec![1.0; 3]).is_err());
        assert!(Matrix::from_rows(&[vec![1.0, 2.0], vec![1.0]]).is_err());
        assert!(Matrix::zeros(2, 3).checked_matmul(&Matrix::zeros(2, 3)).is_err());
        assert!(Matrix::zeros(2, 3).matvec(&[1.0, 2.0]).is_err());
    }
}
