//! Dense linear-algebra primitives: rank-revealing SVD, Moore-Penrose
//! pseudo-inverse, orthogonal projectors, block LQ decomposition and
//! weighted quadratic forms.
//!
//! Everything works on `nalgebra` dynamic matrices in `f64`. Numerical
//! rank is decided relative to the largest singular value:
//! `sigma_i > rank_tol * sigma_1`.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{ensure_dim, Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Default relative rank tolerance, `1e-10 * max(rows, cols)`.
pub fn default_rank_tol(rows: usize, cols: usize) -> f64 {
    1e-10 * rows.max(cols).max(1) as f64
}

pub(crate) fn ensure_finite(what: &str, m: &Matrix) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{what} has non-finite entries")))
    }
}

pub(crate) fn ensure_finite_vec(what: &str, v: &Vector) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{what} has non-finite entries")))
    }
}

/// Thin singular value decomposition `A = U diag(s) V^T` with singular
/// values sorted in nonincreasing order.
#[derive(Debug, Clone)]
pub struct SvdFactors {
    /// `rows x k` with orthonormal columns, `k = min(rows, cols)`.
    pub left_vectors: Matrix,
    pub singular_values: Vector,
    /// `cols x k` with orthonormal columns.
    pub right_vectors: Matrix,
    pub numerical_rank: usize,
}

impl SvdFactors {
    pub fn largest(&self) -> f64 {
        if self.singular_values.is_empty() {
            0.0
        } else {
            self.singular_values[0]
        }
    }

    /// Count of singular values strictly above an absolute threshold.
    pub fn rank_above(&self, threshold: f64) -> usize {
        self.singular_values.iter().filter(|&&s| s > threshold).count()
    }

    /// Leading `rank` left vectors.
    pub fn left_range(&self, rank: usize) -> Matrix {
        self.left_vectors.columns(0, rank).into_owned()
    }

    /// Leading `rank` right vectors.
    pub fn right_range(&self, rank: usize) -> Matrix {
        self.right_vectors.columns(0, rank).into_owned()
    }

    /// Rebuild `U diag(s) V^T` from all stored factors.
    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.left_vectors.clone();
        for (j, s) in self.singular_values.iter().enumerate() {
            us.column_mut(j).scale_mut(*s);
        }
        us * self.right_vectors.transpose()
    }
}

fn raw_svd(a: &Matrix) -> (Matrix, Vector, Matrix) {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return (Matrix::zeros(m, 0), Vector::zeros(0), Matrix::zeros(n, 0));
    }
    if n > m {
        let (u, s, v) = raw_svd(&a.transpose());
        return (v, s, u);
    }
    // Compress to the n x n triangle, then orthogonalize its columns.
    let qr = a.clone().qr();
    let (u_r, s, v) = jacobi_svd(qr.r());
    (qr.q() * u_r, s, v)
}

/// One-sided (Hestenes) Jacobi SVD of a square matrix. Column pairs of
/// `W = A V` are rotated until mutually orthogonal; then `s_j = |w_j|`.
fn jacobi_svd(a: Matrix) -> (Matrix, Vector, Matrix) {
    let n = a.ncols();
    let m = a.nrows();
    let mut w = a;
    let mut v = Matrix::identity(n, n);
    let eps = f64::EPSILON;
    for _sweep in 0..80 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                {
                    let ws = w.as_slice();
                    let (cp, cq) = (&ws[p * m..(p + 1) * m], &ws[q * m..(q + 1) * m]);
                    for i in 0..m {
                        alpha += cp[i] * cp[i];
                        beta += cq[i] * cq[i];
                        gamma += cp[i] * cq[i];
                    }
                }
                if gamma == 0.0 || gamma.abs() <= eps * libm::sqrt(alpha * beta) {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + libm::sqrt(1.0 + zeta * zeta));
                let c = 1.0 / libm::sqrt(1.0 + t * t);
                let s = c * t;
                rotate_columns(&mut w, p, q, c, s);
                rotate_columns(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sigma = Vector::zeros(n);
    let mut u = Matrix::zeros(m, n);
    let top = (0..n).fold(0.0_f64, |acc, j| acc.max(w.column(j).norm()));
    let mut missing = Vec::new();
    for j in 0..n {
        let norm = w.column(j).norm();
        sigma[j] = norm;
        if norm > top * eps * (n as f64) && norm > 0.0 {
            u.set_column(j, &(w.column(j) / norm));
        } else {
            missing.push(j);
        }
    }
    if !missing.is_empty() {
        // Complete the left vectors of (numerically) zero singular values.
        let kept: Vec<usize> = (0..n).filter(|j| !missing.contains(j)).collect();
        let mut basis = Matrix::zeros(m, kept.len());
        for (k, &j) in kept.iter().enumerate() {
            basis.set_column(k, &u.column(j));
        }
        let comp = orthonormal_complement(&basis);
        for (k, &j) in missing.iter().enumerate() {
            u.set_column(j, &comp.column(k));
        }
    }
    (u, sigma, v)
}

fn rotate_columns(x: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    let m = x.nrows();
    let data = x.as_mut_slice();
    let (head, tail) = data.split_at_mut(q * m);
    let cp = &mut head[p * m..(p + 1) * m];
    let cq = &mut tail[..m];
    for i in 0..m {
        let (a, b) = (cp[i], cq[i]);
        cp[i] = c * a - s * b;
        cq[i] = s * a + c * b;
    }
}

/// Thin SVD with singular values sorted in nonincreasing order and the
/// numerical rank evaluated with the relative tolerance `rank_tol`.
pub fn svd(a: &Matrix, rank_tol: f64) -> Result<SvdFactors> {
    ensure_finite("matrix", a)?;
    if !(rank_tol > 0.0) {
        return Err(Error::InvalidInput(format!("rank_tol must be positive, got {rank_tol}")));
    }
    let (u, s, v) = raw_svd(a);
    let k = s.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| s[j].partial_cmp(&s[i]).unwrap_or(core::cmp::Ordering::Equal));
    let mut left = Matrix::zeros(u.nrows(), k);
    let mut right = Matrix::zeros(v.nrows(), k);
    let mut values = Vector::zeros(k);
    for (dst, &src) in order.iter().enumerate() {
        left.set_column(dst, &u.column(src));
        right.set_column(dst, &v.column(src));
        values[dst] = s[src].max(0.0);
    }
    let top = if k > 0 { values[0] } else { 0.0 };
    let numerical_rank = values.iter().filter(|&&x| x > rank_tol * top).count();
    Ok(SvdFactors {
        left_vectors: left,
        singular_values: values,
        right_vectors: right,
        numerical_rank,
    })
}

/// Moore-Penrose pseudo-inverse through the truncated SVD.
pub fn pinv(a: &Matrix, rank_tol: f64) -> Result<Matrix> {
    let f = svd(a, rank_tol)?;
    Ok(pinv_from_factors(&f, f.numerical_rank))
}

pub(crate) fn pinv_from_factors(f: &SvdFactors, rank: usize) -> Matrix {
    let mut v = f.right_range(rank);
    for j in 0..rank {
        v.column_mut(j).scale_mut(1.0 / f.singular_values[j]);
    }
    v * f.left_range(rank).transpose()
}

/// Pseudo-inverse with [`default_rank_tol`].
pub fn pinv_default(a: &Matrix) -> Result<Matrix> {
    pinv(a, default_rank_tol(a.nrows(), a.ncols()))
}

/// Returns `(A^+ A, basis)`: the orthogonal projector onto `range(A^T)`
/// and an orthonormal basis of `range(A)`.
pub fn range_projector(a: &Matrix) -> Result<(Matrix, Matrix)> {
    range_projector_with_tol(a, default_rank_tol(a.nrows(), a.ncols()))
}

pub fn range_projector_with_tol(a: &Matrix, rank_tol: f64) -> Result<(Matrix, Matrix)> {
    let f = svd(a, rank_tol)?;
    let r = f.numerical_rank;
    let v = f.right_range(r);
    Ok((&v * v.transpose(), f.left_range(r)))
}

/// Orthonormal basis of the orthogonal complement of `range(basis)`.
///
/// `basis` must have orthonormal columns (`n x r`); the result is
/// `n x (n - r)`.
pub fn orthonormal_complement(basis: &Matrix) -> Matrix {
    let (n, r) = basis.shape();
    if r == 0 {
        return Matrix::identity(n, n);
    }
    if r >= n {
        return Matrix::zeros(n, 0);
    }
    // Full Householder Q of the basis; its trailing columns span the complement.
    let qr = basis.clone().qr();
    let mut q_t = Matrix::identity(n, n);
    qr.q_tr_mul(&mut q_t);
    q_t.transpose().columns(r, n - r).into_owned()
}

/// Stack matrices with equal column counts on top of each other.
pub fn vstack(blocks: &[&Matrix]) -> Result<Matrix> {
    let cols = blocks.first().map(|b| b.ncols()).unwrap_or(0);
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = Matrix::zeros(rows, cols);
    let mut at = 0;
    for b in blocks {
        ensure_dim("vstack column count", cols, b.ncols())?;
        out.view_mut((at, 0), (b.nrows(), cols)).copy_from(*b);
        at += b.nrows();
    }
    Ok(out)
}

pub(crate) fn max_abs(m: &Matrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

pub(crate) fn inf_norm(v: &Vector) -> f64 {
    v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

pub fn is_symmetric(m: &Matrix, rel_tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = max_abs(m).max(f64::MIN_POSITIVE);
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if (m[(i, j)] - m[(j, i)]).abs() > rel_tol * scale {
                return false;
            }
        }
    }
    true
}

pub(crate) fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &Matrix) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    let eig = symmetrize(m).symmetric_eigen();
    eig.eigenvalues.iter().fold(f64::INFINITY, |acc, &v| acc.min(v))
}

/// `x^T W x` for a symmetric weight `W`.
pub fn weighted_sqnorm(x: &Vector, w: &Matrix) -> Result<f64> {
    ensure_dim("weight rows", x.len(), w.nrows())?;
    ensure_dim("weight cols", x.len(), w.ncols())?;
    ensure_finite_vec("vector", x)?;
    ensure_finite("weight", w)?;
    if !is_symmetric(w, 1e-12) {
        return Err(Error::InvalidInput("weight matrix is not symmetric".into()));
    }
    Ok(x.dot(&(w * x)).max(0.0))
}

/// Block LQ decomposition of `[Z; U; Y] = L Q`.
///
/// `L` is lower triangular with a nonnegative diagonal and `Q` has
/// orthonormal rows whenever the stack has at least as many columns as
/// rows. Blocks are addressed by the row partition `(Z, U, Y)`.
#[derive(Debug, Clone)]
pub struct LqBlocks {
    pub l: Matrix,
    pub q: Matrix,
    /// Row counts of the `Z`, `U` and `Y` blocks.
    pub sizes: [usize; 3],
    /// Set when a diagonal block is numerically singular or the stack has
    /// fewer columns than rows.
    pub degenerate: bool,
}

impl LqBlocks {
    fn offset(&self, i: usize) -> usize {
        self.sizes[..i].iter().sum()
    }

    /// Block `L_{ij}` with 1-based indices as in the block notation.
    pub fn block(&self, i: usize, j: usize) -> Matrix {
        let (r0, c0) = (self.offset(i - 1), self.offset(j - 1));
        self.l
            .view((r0, c0), (self.sizes[i - 1], self.sizes[j - 1]))
            .into_owned()
    }

    /// Row block `Q_i` (1-based).
    pub fn q_block(&self, i: usize) -> Matrix {
        self.q.rows(self.offset(i - 1), self.sizes[i - 1]).into_owned()
    }

    pub fn l11(&self) -> Matrix {
        self.block(1, 1)
    }
    pub fn l21(&self) -> Matrix {
        self.block(2, 1)
    }
    pub fn l22(&self) -> Matrix {
        self.block(2, 2)
    }
    pub fn l31(&self) -> Matrix {
        self.block(3, 1)
    }
    pub fn l32(&self) -> Matrix {
        self.block(3, 2)
    }
    pub fn l33(&self) -> Matrix {
        self.block(3, 3)
    }

    /// `M1 = [[L11, 0], [L21, L22]]`, the factor of the regressor rows.
    pub fn m1(&self) -> Matrix {
        let k = self.sizes[0] + self.sizes[1];
        self.l.view((0, 0), (k, k)).into_owned()
    }

    pub fn columns(&self) -> usize {
        self.q.ncols()
    }
}

pub fn lq_decompose(z: &Matrix, u: &Matrix, y: &Matrix) -> Result<LqBlocks> {
    let n = z.ncols();
    ensure_dim("U column count", n, u.ncols())?;
    ensure_dim("Y column count", n, y.ncols())?;
    let stack = vstack(&[z, u, y])?;
    ensure_finite("LQ input", &stack)?;
    let m = stack.nrows();

    let (mut l, mut q) = if n >= m {
        let qr = stack.transpose().qr();
        (qr.r().transpose(), qr.q().transpose())
    } else {
        let mut padded = Matrix::zeros(m, m);
        padded.view_mut((0, 0), (n, m)).copy_from(&stack.transpose());
        let qr = padded.qr();
        (qr.r().transpose(), qr.q().rows(0, n).transpose())
    };
    for i in 0..m {
        if l[(i, i)] < 0.0 {
            l.column_mut(i).neg_mut();
            q.row_mut(i).neg_mut();
        }
    }
    let top = (0..m).fold(0.0_f64, |acc, i| acc.max(l[(i, i)]));
    let tol = default_rank_tol(m, n) * top;
    let degenerate = n < m || (0..m).any(|i| l[(i, i)] <= tol);
    Ok(LqBlocks {
        l,
        q,
        sizes: [z.nrows(), u.nrows(), y.nrows()],
        degenerate,
    })
}
