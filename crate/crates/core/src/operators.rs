//! Matrix-free linear operators: sparse CSR storage, structured test-problem
//! generators, preconditioner composition, and MatrixMarket coordinate I/O.
//!
//! Solvers only see the [`LinearOperator`] trait, so matrices never need to
//! be materialized unless a dense oracle wants them.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::kernels::DenseMatrix;

/// Errors from operator construction and MatrixMarket parsing.
#[derive(Debug, Error)]
pub enum OperatorError {
    #[error("entry ({row}, {col}) outside a {nrows}x{ncols} matrix")]
    IndexOutOfBounds {
        row: usize,
        col: usize,
        nrows: usize,
        ncols: usize,
    },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Abstract action `y = A x` of an n-by-n (or m-by-n) linear map.
pub trait LinearOperator: Send + Sync {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    /// Compute `y = A x`; `x` has `ncols()` entries, `y` has `nrows()`.
    fn apply(&self, x: &[f64], y: &mut [f64]);

    /// Side of a square operator.
    fn dim(&self) -> usize {
        debug_assert_eq!(self.nrows(), self.ncols());
        self.nrows()
    }

    /// Convenience wrapper around [`apply`](Self::apply) that allocates
    /// the output vector.
    fn apply_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows()];
        self.apply(x, &mut y);
        y
    }
}

/// Operators that additionally expose `y = A^T x`.
pub trait AdjointOperator: LinearOperator {
    fn apply_transpose(&self, x: &[f64], y: &mut [f64]);
}

impl<T: LinearOperator + ?Sized> LinearOperator for &T {
    fn nrows(&self) -> usize {
        (**self).nrows()
    }
    fn ncols(&self) -> usize {
        (**self).ncols()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        (**self).apply(x, y)
    }
}

/// Compressed sparse row matrix with strictly increasing column indices in
/// every row.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseCsr {
    nrows: usize,
    ncols: usize,
    row_starts: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseCsr {
    /// Build from (row, col, value) triplets; duplicates are summed.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self, OperatorError> {
        for &(i, j, _) in triplets {
            if i >= nrows || j >= ncols {
                return Err(OperatorError::IndexOutOfBounds {
                    row: i,
                    col: j,
                    nrows,
                    ncols,
                });
            }
        }
        let mut sorted = triplets.to_vec();
        sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_starts = vec![0usize; nrows + 1];
        let mut col_indices = Vec::with_capacity(sorted.len());
        let mut values = Vec::with_capacity(sorted.len());
        for &(i, j, v) in &sorted {
            if col_indices.len() > row_starts[i] && *col_indices.last().unwrap() == j {
                // Same (row, col) as the previous entry: accumulate.
                *values.last_mut().unwrap() += v;
            } else {
                col_indices.push(j);
                values.push(v);
            }
            row_starts[i + 1] = col_indices.len();
        }
        // Forward-fill rows that received no entries.
        for i in 1..=nrows {
            if row_starts[i] < row_starts[i - 1] {
                row_starts[i] = row_starts[i - 1];
            }
        }
        Ok(SparseCsr {
            nrows,
            ncols,
            row_starts,
            col_indices,
            values,
        })
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Iterate the stored entries of one row as (col, value) pairs.
    pub fn row_entries(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_starts[i]..self.row_starts[i + 1];
        self.col_indices[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            for (j, v) in self.row_entries(i) {
                m.set(i, j, m.get(i, j) + v);
            }
        }
        m
    }
}

impl LinearOperator for SparseCsr {
    fn nrows(&self) -> usize {
        self.nrows
    }
    fn ncols(&self) -> usize {
        self.ncols
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.row_starts[i]..self.row_starts[i + 1] {
                acc += self.values[k] * x[self.col_indices[k]];
            }
            *yi = acc;
        }
    }
}

impl AdjointOperator for SparseCsr {
    fn apply_transpose(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.nrows);
        debug_assert_eq!(y.len(), self.ncols);
        y.fill(0.0);
        for i in 0..self.nrows {
            let xi = x[i];
            if xi == 0.0 {
                continue;
            }
            for k in self.row_starts[i]..self.row_starts[i + 1] {
                y[self.col_indices[k]] += self.values[k] * xi;
            }
        }
    }
}

/// Dense matrix as an operator.
#[derive(Clone, Debug)]
pub struct DenseOperator(pub DenseMatrix);

impl LinearOperator for DenseOperator {
    fn nrows(&self) -> usize {
        self.0.nrows()
    }
    fn ncols(&self) -> usize {
        self.0.ncols()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let out = self.0.matvec(x).expect("dimension checked by caller");
        y.copy_from_slice(&out);
    }
}

impl AdjointOperator for DenseOperator {
    fn apply_transpose(&self, x: &[f64], y: &mut [f64]) {
        let out = self.0.matvec_transpose(x).expect("dimension checked");
        y.copy_from_slice(&out);
    }
}

/// Diagonal matrix as an operator.
#[derive(Clone, Debug)]
pub struct DiagonalOperator(pub Vec<f64>);

impl LinearOperator for DiagonalOperator {
    fn nrows(&self) -> usize {
        self.0.len()
    }
    fn ncols(&self) -> usize {
        self.0.len()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for ((yi, xi), di) in y.iter_mut().zip(x).zip(&self.0) {
            *yi = di * xi;
        }
    }
}

impl AdjointOperator for DiagonalOperator {
    fn apply_transpose(&self, x: &[f64], y: &mut [f64]) {
        self.apply(x, y);
    }
}

/// Approximate inverse used to compose preconditioned operators.
pub trait Preconditioner: Send + Sync {
    fn dim(&self) -> usize;
    /// Compute `z = P^{-1} r`.
    fn solve(&self, r: &[f64], z: &mut [f64]);
}

/// Diagonal (Jacobi) preconditioner.
#[derive(Clone, Debug)]
pub struct JacobiPreconditioner {
    inv_diag: Vec<f64>,
}

impl JacobiPreconditioner {
    /// Invert the diagonal of a sparse matrix; zero diagonal entries pass
    /// through unscaled.
    pub fn from_csr(a: &SparseCsr) -> Self {
        let n = a.nrows();
        let mut inv = vec![1.0; n];
        for i in 0..n.min(a.ncols()) {
            for (j, v) in a.row_entries(i) {
                if j == i && v != 0.0 {
                    inv[i] = 1.0 / v;
                }
            }
        }
        JacobiPreconditioner { inv_diag: inv }
    }
}

impl Preconditioner for JacobiPreconditioner {
    fn dim(&self) -> usize {
        self.inv_diag.len()
    }
    fn solve(&self, r: &[f64], z: &mut [f64]) {
        for ((zi, ri), di) in z.iter_mut().zip(r).zip(&self.inv_diag) {
            *zi = ri * di;
        }
    }
}

/// Composition `P^{-1} A` applied matrix-free.
pub struct PreconditionedOperator<A, P> {
    pub op: A,
    pub prec: P,
}

impl<A: LinearOperator, P: Preconditioner> LinearOperator for PreconditionedOperator<A, P> {
    fn nrows(&self) -> usize {
        self.op.nrows()
    }
    fn ncols(&self) -> usize {
        self.op.ncols()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let mut tmp = vec![0.0; self.op.nrows()];
        self.op.apply(x, &mut tmp);
        self.prec.solve(&tmp, y);
    }
}

/// Block operator from trust-region subproblems:
/// `(x1; x2) -> (A x1 + g (g^T x2) / delta^2; x1 + A x2)` with `A` a
/// symmetric tridiagonal inner matrix. The operator side is `2n`. With
/// this sign pattern the characteristic equation reduces to the
/// trust-region secular equation, so the extreme eigenvalues (the
/// rightmost in particular) are real; flipping the identity block's sign
/// would make every eigenvalue strictly complex.
#[derive(Clone, Debug)]
pub struct TrsOperator {
    /// Main diagonal of the inner tridiagonal block.
    pub diag: Vec<f64>,
    /// Off-diagonal (symmetric) of the inner block, length `n - 1`.
    pub off: Vec<f64>,
    pub g: Vec<f64>,
    pub delta: f64,
}

impl TrsOperator {
    fn inner_apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.diag.len();
        for i in 0..n {
            let mut acc = self.diag[i] * x[i];
            if i > 0 {
                acc += self.off[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                acc += self.off[i] * x[i + 1];
            }
            y[i] = acc;
        }
    }

    /// The initial direction `(0; g)` used to grow Krylov spaces for this
    /// operator.
    pub fn krylov_start(&self) -> Vec<f64> {
        let n = self.diag.len();
        let mut v = vec![0.0; 2 * n];
        v[n..].copy_from_slice(&self.g);
        v
    }
}

impl LinearOperator for TrsOperator {
    fn nrows(&self) -> usize {
        2 * self.diag.len()
    }
    fn ncols(&self) -> usize {
        2 * self.diag.len()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.diag.len();
        let (x1, x2) = x.split_at(n);
        let (y1, y2) = y.split_at_mut(n);
        self.inner_apply(x1, y1);
        let coupling: f64 = self.g.iter().zip(x2).map(|(gi, xi)| gi * xi).sum::<f64>()
            / (self.delta * self.delta);
        for (y1i, gi) in y1.iter_mut().zip(&self.g) {
            *y1i += coupling * gi;
        }
        self.inner_apply(x2, y2);
        for (y2i, x1i) in y2.iter_mut().zip(x1) {
            *y2i += x1i;
        }
    }
}

/// Five-point-stencil graph Laplacian of an m-by-m grid (size m^2).
/// Positive semidefinite with the constant vector in its kernel; the
/// spectrum lies in [0, 8].
pub fn laplacian_2d(m: usize) -> SparseCsr {
    let n = m * m;
    let mut triplets = Vec::with_capacity(5 * n);
    let idx = |i: usize, j: usize| i * m + j;
    for i in 0..m {
        for j in 0..m {
            let p = idx(i, j);
            let mut degree = 0.0;
            let mut push_neighbor = |q: usize| {
                triplets.push((p, q, -1.0));
                degree += 1.0;
            };
            if i > 0 {
                push_neighbor(idx(i - 1, j));
            }
            if i + 1 < m {
                push_neighbor(idx(i + 1, j));
            }
            if j > 0 {
                push_neighbor(idx(i, j - 1));
            }
            if j + 1 < m {
                push_neighbor(idx(i, j + 1));
            }
            triplets.push((p, p, degree));
        }
    }
    SparseCsr::from_triplets(n, n, &triplets).expect("indices in range by construction")
}

/// Trust-region block operator with equispaced inner diagonal on [-1, 1],
/// unit off-diagonals, and a Gaussian coupling vector rescaled to
/// `g_scale`.
pub fn trs_operator(n: usize, g_scale: f64, delta: f64, seed: u64) -> TrsOperator {
    assert!(n >= 2, "inner block needs at least two rows");
    let diag: Vec<f64> = (0..n)
        .map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64)
        .collect();
    let off = vec![1.0; n - 1];
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut g: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let norm: f64 = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        for gi in &mut g {
            *gi *= g_scale / norm;
        }
    }
    TrsOperator {
        diag,
        off,
        g,
        delta,
    }
}

/// Diagonal test matrix with ten planted eigenvalues drawn uniformly from
/// [-1, -0.1] followed by n-10 equispaced values covering [0, 1].
pub fn planted_diagonal(n: usize, seed: u64) -> DiagonalOperator {
    assert!(n > 11, "need room for the planted cluster plus [0, 1]");
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut diag = Vec::with_capacity(n);
    for _ in 0..10 {
        diag.push(rng.gen_range(-1.0..-0.1));
    }
    let rest = n - 10;
    for k in 0..rest {
        diag.push(k as f64 / (rest - 1) as f64);
    }
    DiagonalOperator(diag)
}

/// The ten planted negative eigenvalues of [`planted_diagonal`], descending.
pub fn planted_negatives(n: usize, seed: u64) -> Vec<f64> {
    let mut neg: Vec<f64> = planted_diagonal(n, seed).0[..10].to_vec();
    neg.sort_by(|a, b| b.partial_cmp(a).unwrap());
    neg
}

/// Read a MatrixMarket coordinate file (real or integer field, general or
/// symmetric). Indices are converted from 1-based to 0-based; duplicate
/// entries are summed; symmetric storage is expanded.
pub fn read_matrix_market(path: &Path) -> Result<SparseCsr, OperatorError> {
    let file = File::open(path)?;
    read_matrix_market_from(BufReader::new(file))
}

/// Parser behind [`read_matrix_market`], usable on any buffered reader.
pub fn read_matrix_market_from(reader: impl BufRead) -> Result<SparseCsr, OperatorError> {
    let parse_err = |line: usize, msg: &str| OperatorError::Parse {
        line,
        msg: msg.to_string(),
    };
    let mut lines = reader.lines().enumerate();

    let (header_no, header) = loop {
        match lines.next() {
            Some((no, line)) => {
                let line = line?;
                if !line.trim().is_empty() {
                    break (no + 1, line);
                }
            }
            None => return Err(parse_err(1, "empty file")),
        }
    };
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() < 5 || !fields[0].eq_ignore_ascii_case("%%MatrixMarket") {
        return Err(parse_err(header_no, "missing %%MatrixMarket header"));
    }
    if !fields[1].eq_ignore_ascii_case("matrix") || !fields[2].eq_ignore_ascii_case("coordinate") {
        return Err(parse_err(
            header_no,
            "only `matrix coordinate` files are supported",
        ));
    }
    let field = fields[3].to_ascii_lowercase();
    if field != "real" && field != "integer" {
        return Err(parse_err(
            header_no,
            &format!("unsupported field type `{field}` (expected real or integer)"),
        ));
    }
    let symmetric = match fields[4].to_ascii_lowercase().as_str() {
        "general" => false,
        "symmetric" => true,
        other => {
            return Err(parse_err(
                header_no,
                &format!("unsupported symmetry `{other}` (expected general or symmetric)"),
            ))
        }
    };

    // Size line: first non-comment, non-blank line after the header.
    let (size_no, size_line) = loop {
        match lines.next() {
            Some((no, line)) => {
                let line = line?;
                let t = line.trim();
                if t.is_empty() || t.starts_with('%') {
                    continue;
                }
                break (no + 1, line);
            }
            None => return Err(parse_err(header_no, "missing size line")),
        }
    };
    let dims: Vec<&str> = size_line.split_whitespace().collect();
    if dims.len() != 3 {
        return Err(parse_err(size_no, "size line must be `rows cols nnz`"));
    }
    let nrows: usize = dims[0]
        .parse()
        .map_err(|_| parse_err(size_no, "invalid row count"))?;
    let ncols: usize = dims[1]
        .parse()
        .map_err(|_| parse_err(size_no, "invalid column count"))?;
    let nnz: usize = dims[2]
        .parse()
        .map_err(|_| parse_err(size_no, "invalid entry count"))?;

    let mut triplets: Vec<(usize, usize, f64)> = Vec::with_capacity(nnz);
    let mut seen = 0usize;
    for (no, line) in lines {
        let line = line?;
        let no = no + 1;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let parts: Vec<&str> = t.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(parse_err(no, "entry must be `row col value`"));
        }
        let i: usize = parts[0]
            .parse()
            .map_err(|_| parse_err(no, "invalid row index"))?;
        let j: usize = parts[1]
            .parse()
            .map_err(|_| parse_err(no, "invalid column index"))?;
        let v: f64 = parts[2]
            .parse()
            .map_err(|_| parse_err(no, "invalid value"))?;
        if i == 0 || j == 0 || i > nrows || j > ncols {
            return Err(parse_err(
                no,
                &format!("index ({i}, {j}) outside 1..={nrows} x 1..={ncols}"),
            ));
        }
        seen += 1;
        if seen > nnz {
            return Err(parse_err(no, "more entries than declared"));
        }
        triplets.push((i - 1, j - 1, v));
        if symmetric && i != j {
            triplets.push((j - 1, i - 1, v));
        }
    }
    if seen != nnz {
        return Err(OperatorError::Parse {
            line: size_no,
            msg: format!("declared {nnz} entries but found {seen}"),
        });
    }
    SparseCsr::from_triplets(nrows, ncols, &triplets)
}

/// Write a sparse matrix as a general coordinate real MatrixMarket file.
pub fn write_matrix_market(path: &Path, a: &SparseCsr) -> Result<(), OperatorError> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(out, "{} {} {}", a.nrows(), a.ncols(), a.nnz())?;
    for i in 0..a.nrows() {
        for (j, v) in a.row_entries(i) {
            writeln!(out, "{} {} {}", i + 1, j + 1, v)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::materialize;
    use std::io::Cursor;

    #[test]
    fn csr_from_triplets_sums_duplicates_and_sorts() {
        let a = SparseCsr::from_triplets(
            2,
            3,
            &[(1, 2, 4.0), (0, 1, 1.0), (1, 2, -1.0), (0, 0, 2.0)],
        )
        .unwrap();
        assert_eq!(a.nnz(), 3);
        let rows: Vec<Vec<(usize, f64)>> = (0..2).map(|i| a.row_entries(i).collect()).collect();
        assert_eq!(rows[0], vec![(0, 2.0), (1, 1.0)]);
        assert_eq!(rows[1], vec![(2, 3.0)]);
        // Strictly increasing column indices within each row.
        for r in &rows {
            for w in r.windows(2) {
                assert!(w[0].0 < w[1].0);
            }
        }
    }

    #[test]
    fn csr_rejects_out_of_bounds() {
        assert!(SparseCsr::from_triplets(2, 2, &[(2, 0, 1.0)]).is_err());
    }

    #[test]
    fn csr_matvec_matches_dense() {
        let a = SparseCsr::from_triplets(3, 3, &[(0, 0, 2.0), (0, 2, 1.0), (1, 1, -3.0), (2, 0, 5.0)])
            .unwrap();
        let x = [1.0, 2.0, 3.0];
        let mut y = vec![0.0; 3];
        a.apply(&x, &mut y);
        assert_eq!(y, vec![5.0, -6.0, 5.0]);
        let mut yt = vec![0.0; 3];
        a.apply_transpose(&x, &mut yt);
        let dense_t = a.to_dense().transpose();
        assert_eq!(yt, dense_t.matvec(&x).unwrap());
    }

    #[test]
    fn laplacian_rows_sum_to_zero_and_spectrum_is_bounded() {
        let a = laplacian_2d(4);
        assert_eq!(a.nrows(), 16);
        let ones = vec![1.0; 16];
        let mut y = vec![0.0; 16];
        a.apply(&ones, &mut y);
        for v in y {
            assert_eq!(v, 0.0);
        }
        let dense = a.to_dense();
        // Symmetric.
        assert!(dense.sub(&dense.transpose()).unwrap().max_abs() == 0.0);
        // Eigenvalues match the separable grid formula and lie in [0, 8].
        let (vals, _) = crate::testing::symmetric_jacobi_eig(&dense);
        let m = 4;
        let mut expected = Vec::new();
        for a_idx in 0..m {
            for b_idx in 0..m {
                let mu = |k: usize| 2.0 - 2.0 * (std::f64::consts::PI * k as f64 / m as f64).cos();
                expected.push(mu(a_idx) + mu(b_idx));
            }
        }
        expected.sort_by(|x, y| y.partial_cmp(x).unwrap());
        for (got, want) in vals.iter().zip(&expected) {
            assert!((got - want).abs() < 1e-10, "{got} vs {want}");
            assert!(*got > -1e-12 && *got < 8.0 + 1e-12);
        }
    }

    #[test]
    fn trs_operator_matches_block_formula() {
        let op = trs_operator(8, 0.01, 1.0, 5);
        let gnorm: f64 = op.g.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((gnorm - 0.01).abs() < 1e-15);
        assert_eq!(op.diag[0], -1.0);
        assert_eq!(op.diag[7], 1.0);
        // Dense block assembly: [[A, g g^T / delta^2], [I, A]].
        let n = 8;
        let mut dense = DenseMatrix::zeros(2 * n, 2 * n);
        for i in 0..n {
            dense.set(i, i, op.diag[i]);
            dense.set(n + i, n + i, op.diag[i]);
            if i + 1 < n {
                dense.set(i, i + 1, 1.0);
                dense.set(i + 1, i, 1.0);
                dense.set(n + i, n + i + 1, 1.0);
                dense.set(n + i + 1, n + i, 1.0);
            }
            dense.set(n + i, i, 1.0);
            for j in 0..n {
                dense.set(i, n + j, op.g[i] * op.g[j] / (op.delta * op.delta));
            }
        }
        let diff = materialize(&op).sub(&dense).unwrap().max_abs();
        assert!(diff < 1e-14, "materialized mismatch {diff}");
    }

    #[test]
    fn trs_rightmost_eigenvalue_is_real() {
        let op = trs_operator(100, 0.01, 1.0, 3);
        let a = materialize(&op);
        let theta = crate::kernels::dense_eig_values(&a).unwrap();
        let rightmost = theta
            .iter()
            .max_by(|a, b| a.re.total_cmp(&b.re))
            .copied()
            .unwrap();
        assert!(
            rightmost.im.abs() < 1e-12,
            "rightmost {rightmost} should be real"
        );
        // The inner diagonal spans [-1, 1] with unit off-diagonals, so the
        // rightmost sits just beyond the inner block's largest eigenvalue.
        assert!(rightmost.re > 2.5 && rightmost.re < 3.1, "{rightmost}");
    }

    #[test]
    fn planted_diagonal_layout() {
        let d = planted_diagonal(100, 9);
        for &v in &d.0[..10] {
            assert!((-1.0..=-0.1).contains(&v));
        }
        assert_eq!(d.0[10], 0.0);
        assert_eq!(d.0[99], 1.0);
        let step = 1.0 / 89.0;
        for k in 0..90 {
            assert!((d.0[10 + k] - k as f64 * step).abs() < 1e-15);
        }
        // Deterministic per seed.
        assert_eq!(d.0, planted_diagonal(100, 9).0);
        assert_ne!(d.0[..10], planted_diagonal(100, 10).0[..10]);
    }

    #[test]
    fn preconditioned_operator_is_scaled_matrix() {
        let a = SparseCsr::from_triplets(2, 2, &[(0, 0, 4.0), (0, 1, 1.0), (1, 1, 2.0)]).unwrap();
        let p = JacobiPreconditioner::from_csr(&a);
        let pa = PreconditionedOperator { op: &a, prec: p };
        let mut y = vec![0.0; 2];
        pa.apply(&[1.0, 1.0], &mut y);
        // P^{-1} A = [[1, 0.25], [0, 1]].
        assert!((y[0] - 1.25).abs() < 1e-15);
        assert!((y[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn matrix_market_general_and_symmetric() {
        let general = "%%MatrixMarket matrix coordinate real general\n\
                       % comment\n\
                       2 2 3\n1 1 2.0\n1 2 1.5\n2 1 -1.0\n";
        let a = read_matrix_market_from(Cursor::new(general)).unwrap();
        assert_eq!(a.to_dense().get(0, 1), 1.5);
        assert_eq!(a.to_dense().get(1, 0), -1.0);

        let symmetric = "%%MatrixMarket matrix coordinate integer symmetric\n\
                         3 3 3\n1 1 2\n2 1 -1\n3 3 4\n";
        let s = read_matrix_market_from(Cursor::new(symmetric)).unwrap();
        let d = s.to_dense();
        assert_eq!(d.get(0, 1), -1.0);
        assert_eq!(d.get(1, 0), -1.0);
        assert_eq!(d.get(2, 2), 4.0);
    }

    #[test]
    fn matrix_market_duplicates_summed() {
        let text = "%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1.0\n1 1 2.5\n";
        let a = read_matrix_market_from(Cursor::new(text)).unwrap();
        assert_eq!(a.to_dense().get(0, 0), 3.5);
    }

    #[test]
    fn matrix_market_errors_carry_line_numbers() {
        let bad_value = "%%MatrixMarket matrix coordinate real general\n2 2 1\n1 1 abc\n";
        match read_matrix_market_from(Cursor::new(bad_value)) {
            Err(OperatorError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        let bad_index = "%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1.0\n";
        match read_matrix_market_from(Cursor::new(bad_index)) {
            Err(OperatorError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        let missing = "%%MatrixMarket matrix coordinate real general\n2 2 5\n1 1 1.0\n";
        assert!(read_matrix_market_from(Cursor::new(missing)).is_err());
    }

    #[test]
    fn matrix_market_roundtrip_is_identity() {
        let a = laplacian_2d(8);
        let dir = std::env::temp_dir().join("sketchy-mm-roundtrip");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("lap8.mtx");
        write_matrix_market(&path, &a).unwrap();
        let b = read_matrix_market(&path).unwrap();
        assert_eq!(a, b);
        std::fs::remove_file(&path).ok();
    }
}
