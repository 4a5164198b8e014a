//! Thin Householder QR and a column-incremental QR factorization.
//!
//! Both factorizations use the convention that the triangular factor has a
//! nonnegative diagonal, so batch and incremental results are directly
//! comparable.

use super::matrix::{axpy, dot, norm2, DenseMatrix};
use super::KernelError;

/// Relative threshold below which a new diagonal entry counts as a
/// numerically dependent column.
const RANK_TOL: f64 = 1e-14;

/// Thin QR factorization `M = U * T` with `U` having orthonormal columns and
/// `T` upper triangular with nonnegative diagonal.
#[derive(Clone, Debug)]
pub struct ThinQr {
    pub u: DenseMatrix,
    pub t: DenseMatrix,
}

/// Thin Householder QR of an s-by-d matrix with s >= d.
pub fn householder_qr(m: &DenseMatrix) -> Result<ThinQr, KernelError> {
    let (s, d) = (m.nrows(), m.ncols());
    if s < d {
        return Err(KernelError::DimensionMismatch { expected: d, got: s });
    }
    if !m.is_finite() {
        return Err(KernelError::NonFinite);
    }
    let mut w = m.clone();
    // Normalized reflector vectors; reflector k acts on rows k..s as
    // I - 2 v v^T.
    let mut reflectors: Vec<Vec<f64>> = Vec::with_capacity(d);
    for k in 0..d {
        let mut v = w.col(k)[k..].to_vec();
        let alpha = norm2(&v);
        let alpha = if v[0] > 0.0 { -alpha } else { alpha };
        v[0] -= alpha;
        let vn = norm2(&v);
        if vn > 0.0 {
            for vi in &mut v {
                *vi /= vn;
            }
        }
        w.col_mut(k)[k] = alpha;
        for e in w.col_mut(k)[k + 1..].iter_mut() {
            *e = 0.0;
        }
        if vn > 0.0 {
            for j in k + 1..d {
                let cj = &mut w.col_mut(j)[k..];
                let f = 2.0 * dot(&v, cj);
                axpy(-f, &v, cj);
            }
        }
        reflectors.push(v);
    }
    // Accumulate the thin orthonormal factor by applying the reflectors, in
    // reverse, to the first d columns of the identity.
    let mut u = DenseMatrix::zeros(s, d);
    for j in 0..d {
        u.set(j, j, 1.0);
    }
    for k in (0..d).rev() {
        let v = &reflectors[k];
        if v.iter().all(|&x| x == 0.0) {
            continue;
        }
        for j in 0..d {
            let cj = &mut u.col_mut(j)[k..];
            let f = 2.0 * dot(v, cj);
            axpy(-f, v, cj);
        }
    }
    // Enforce the nonnegative-diagonal convention.
    let mut t = DenseMatrix::zeros(d, d);
    for j in 0..d {
        for i in 0..=j {
            t.set(i, j, w.get(i, j));
        }
    }
    for k in 0..d {
        if t.get(k, k) < 0.0 {
            for j in k..d {
                let v = t.get(k, j);
                t.set(k, j, -v);
            }
            for e in u.col_mut(k) {
                *e = -*e;
            }
        }
    }
    Ok(ThinQr { u, t })
}

/// Column-incremental QR factorization of a sketched basis.
///
/// Columns arrive one at a time; each append costs O(s * j) and maintains
/// `U` (orthonormal) and `T` (upper triangular, nonnegative diagonal) such
/// that the appended columns equal `U * T`. Appending a column that is
/// numerically dependent on the span so far is flagged rather than rejected:
/// the factors stay well defined with a near-zero diagonal entry.
#[derive(Clone, Debug)]
pub struct SketchedQr {
    u: DenseMatrix,
    /// Packed upper-triangular columns; entry j holds j+1 values.
    t_cols: Vec<Vec<f64>>,
    deficient: Vec<usize>,
}

impl SketchedQr {
    /// Empty factorization for vectors of length `s`.
    pub fn new(s: usize) -> Self {
        SketchedQr {
            u: DenseMatrix::zeros(s, 0),
            t_cols: Vec::new(),
            deficient: Vec::new(),
        }
    }

    pub fn nrows(&self) -> usize {
        self.u.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.u.ncols()
    }

    /// Append one column. Returns `true` when the column was flagged as
    /// numerically dependent on the columns already present.
    pub fn append_column(&mut self, c: &[f64]) -> Result<bool, KernelError> {
        let s = self.u.nrows();
        if c.len() != s {
            return Err(KernelError::DimensionMismatch {
                expected: s,
                got: c.len(),
            });
        }
        if self.u.ncols() >= s {
            return Err(KernelError::DimensionMismatch {
                expected: s,
                got: self.u.ncols() + 1,
            });
        }
        if c.iter().any(|v| !v.is_finite()) {
            return Err(KernelError::NonFinite);
        }
        let j = self.u.ncols();
        let cnorm = norm2(c);
        let mut w = c.to_vec();
        let mut h = vec![0.0; j];
        // Two rounds of classical Gram-Schmidt keep U orthonormal to
        // machine precision even for nearly dependent columns.
        for _ in 0..2 {
            for (i, hi) in h.iter_mut().enumerate() {
                let ui = self.u.col(i);
                let g = dot(ui, &w);
                axpy(-g, ui, &mut w);
                *hi += g;
            }
        }
        let rho = norm2(&w);
        let dependent = rho <= RANK_TOL * cnorm;
        if dependent {
            self.deficient.push(j);
        }
        if rho > 0.0 {
            for wi in &mut w {
                *wi /= rho;
            }
        }
        self.u.push_column(&w)?;
        h.push(rho);
        self.t_cols.push(h);
        Ok(dependent)
    }

    pub fn u(&self) -> &DenseMatrix {
        &self.u
    }

    /// Dense copy of the triangular factor.
    pub fn t_matrix(&self) -> DenseMatrix {
        let d = self.t_cols.len();
        let mut t = DenseMatrix::zeros(d, d);
        for (j, col) in self.t_cols.iter().enumerate() {
            for (i, &v) in col.iter().enumerate() {
                t.set(i, j, v);
            }
        }
        t
    }

    pub fn t_diag(&self, j: usize) -> f64 {
        self.t_cols[j][j]
    }

    pub fn is_rank_deficient(&self) -> bool {
        !self.deficient.is_empty()
    }

    pub fn deficient_columns(&self) -> &[usize] {
        &self.deficient
    }

    /// Replace the triangular factor by the identity, keeping `U`. Used when
    /// the stored basis has been whitened by `T` itself.
    pub fn reset_t_to_identity(&mut self) {
        for (j, col) in self.t_cols.iter_mut().enumerate() {
            for (i, v) in col.iter_mut().enumerate() {
                *v = if i == j { 1.0 } else { 0.0 };
            }
        }
        self.deficient.clear();
    }
}
