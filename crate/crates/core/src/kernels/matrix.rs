//! Dense real matrix type used by the factorization kernels and solvers.
//!
//! Storage is column-major so that basis columns can be appended and sliced
//! cheaply; constructors taking flat data interpret it row by row.

use super::KernelError;

/// Dense real matrix with column-major storage.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    /// Entries, column j occupying `data[j*rows .. (j+1)*rows]`.
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = DenseMatrix::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    /// Build from a flat slice listing entries row by row.
    pub fn from_row_major(rows: usize, cols: usize, entries: &[f64]) -> Result<Self, KernelError> {
        if entries.len() != rows * cols {
            return Err(KernelError::DimensionMismatch {
                expected: rows * cols,
                got: entries.len(),
            });
        }
        let mut m = DenseMatrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.set(i, j, entries[i * cols + j]);
            }
        }
        Ok(m)
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = DenseMatrix::zeros(rows, cols);
        for j in 0..cols {
            for i in 0..rows {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    /// Assemble from column vectors, all of equal length.
    pub fn from_columns(cols: &[Vec<f64>]) -> Result<Self, KernelError> {
        let rows = cols.first().map_or(0, Vec::len);
        let mut m = DenseMatrix {
            rows,
            cols: 0,
            data: Vec::with_capacity(rows * cols.len()),
        };
        for c in cols {
            m.push_column(c)?;
        }
        Ok(m)
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[j * self.rows + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[j * self.rows + i] = v;
    }

    #[inline]
    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    #[inline]
    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    /// Append a column; the matrix must be empty or have matching row count.
    pub fn push_column(&mut self, c: &[f64]) -> Result<(), KernelError> {
        if self.cols == 0 && self.rows == 0 {
            self.rows = c.len();
        }
        if c.len() != self.rows {
            return Err(KernelError::DimensionMismatch {
                expected: self.rows,
                got: c.len(),
            });
        }
        self.data.extend_from_slice(c);
        self.cols += 1;
        Ok(())
    }

    /// Copy of the leading `k` columns.
    pub fn leading_columns(&self, k: usize) -> DenseMatrix {
        assert!(k <= self.cols);
        DenseMatrix {
            rows: self.rows,
            cols: k,
            data: self.data[..k * self.rows].to_vec(),
        }
    }

    pub fn transpose(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    /// Matrix-matrix product `self * other`.
    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix, KernelError> {
        if self.cols != other.rows {
            return Err(KernelError::DimensionMismatch {
                expected: self.cols,
                got: other.rows,
            });
        }
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        for j in 0..other.cols {
            let oc = other.col(j);
            let out_col = &mut out.data[j * self.rows..(j + 1) * self.rows];
            for (k, &w) in oc.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                let sc = &self.data[k * self.rows..(k + 1) * self.rows];
                for i in 0..self.rows {
                    out_col[i] += sc[i] * w;
                }
            }
        }
        Ok(out)
    }

    /// Matrix-vector product `self * x`.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>, KernelError> {
        if x.len() != self.cols {
            return Err(KernelError::DimensionMismatch {
                expected: self.cols,
                got: x.len(),
            });
        }
        let mut y = vec![0.0; self.rows];
        for (k, &w) in x.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let sc = self.col(k);
            for i in 0..self.rows {
                y[i] += sc[i] * w;
            }
        }
        Ok(y)
    }

    /// Transposed matrix-vector product `self^T * x`.
    pub fn matvec_transpose(&self, x: &[f64]) -> Result<Vec<f64>, KernelError> {
        if x.len() != self.rows {
            return Err(KernelError::DimensionMismatch {
                expected: self.rows,
                got: x.len(),
            });
        }
        let mut y = vec![0.0; self.cols];
        for j in 0..self.cols {
            y[j] = dot(self.col(j), x);
        }
        Ok(y)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn scale(&mut self, a: f64) {
        for v in &mut self.data {
            *v *= a;
        }
    }

    /// Entry-wise difference `self - other`.
    pub fn sub(&self, other: &DenseMatrix) -> Result<DenseMatrix, KernelError> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(KernelError::DimensionMismatch {
                expected: self.rows * self.cols,
                got: other.rows * other.cols,
            });
        }
        let mut out = self.clone();
        for (o, v) in out.data.iter_mut().zip(&other.data) {
            *o -= v;
        }
        Ok(out)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Dot product of two equal-length slices.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Euclidean norm of a slice.
#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`.
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
