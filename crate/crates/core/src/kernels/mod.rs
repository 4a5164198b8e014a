//! Dense factorization kernels: thin Householder QR, incremental QR updates,
//! one-sided Jacobi SVD, a real nonsymmetric eigensolver, triangular solves,
//! and condition-number estimation. These back the sketched solvers; they are
//! written for tall-thin and small square matrices, not as a general-purpose
//! dense linear algebra library.

mod eig;
mod matrix;
mod qr;
mod svd;

pub use eig::{dense_eig, dense_eig_values, ComplexEigenDecomposition};
pub use matrix::{axpy, dot, norm2, DenseMatrix};
pub use qr::{householder_qr, SketchedQr, ThinQr};
pub use svd::{singular_values, truncated_svd, TruncatedSvd};

use thiserror::Error;

/// Errors from the dense kernels.
#[derive(Debug, Error)]
pub enum KernelError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("triangular factor is singular at column {col}")]
    SingularTriangular { col: usize },
    #[error("truncation tolerance must exceed 1, got {0}")]
    InvalidTolerance(f64),
    #[error("singular value sweeps did not converge within {sweeps} sweeps")]
    SvdConvergence { sweeps: usize },
    #[error("eigenvalue iteration failed to deflate within {sweeps} sweeps")]
    EigConvergence {
        sweeps: usize,
        /// Eigenvalues deflated before the failure; eigenvectors are not
        /// recovered on this path.
        partial: Vec<num_complex::Complex64>,
    },
}

/// Solve `T y = b` for upper-triangular `T` by back substitution.
///
/// Fails with [`KernelError::SingularTriangular`] naming the first column
/// whose diagonal entry vanishes.
pub fn solve_upper_triangular(t: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>, KernelError> {
    let n = t.ncols();
    if t.nrows() != n {
        return Err(KernelError::DimensionMismatch {
            expected: n,
            got: t.nrows(),
        });
    }
    if b.len() != n {
        return Err(KernelError::DimensionMismatch {
            expected: n,
            got: b.len(),
        });
    }
    let mut y = b.to_vec();
    for j in (0..n).rev() {
        let tjj = t.get(j, j);
        if tjj == 0.0 {
            return Err(KernelError::SingularTriangular { col: j });
        }
        y[j] /= tjj;
        let yj = y[j];
        for i in 0..j {
            y[i] -= t.get(i, j) * yj;
        }
    }
    Ok(y)
}

/// Solve `T^T y = b` (forward substitution on the transpose of an
/// upper-triangular matrix).
pub fn solve_upper_transposed(t: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>, KernelError> {
    let n = t.ncols();
    if t.nrows() != n || b.len() != n {
        return Err(KernelError::DimensionMismatch {
            expected: n,
            got: b.len(),
        });
    }
    let mut y = b.to_vec();
    for j in 0..n {
        let tjj = t.get(j, j);
        if tjj == 0.0 {
            return Err(KernelError::SingularTriangular { col: j });
        }
        y[j] /= tjj;
        let yj = y[j];
        for i in j + 1..n {
            y[i] -= t.get(j, i) * yj;
        }
    }
    Ok(y)
}

/// Two-norm condition number of a small dense matrix via its full singular
/// value spectrum. Returns `f64::INFINITY` when the smallest singular value
/// underflows (or the input is empty or non-finite).
pub fn cond_estimate(t: &DenseMatrix) -> f64 {
    if t.nrows() == 0 || t.ncols() == 0 || !t.is_finite() {
        return f64::INFINITY;
    }
    let sv = singular_values(t);
    let smax = sv.first().copied().unwrap_or(0.0);
    let smin = sv.last().copied().unwrap_or(0.0);
    if smin <= 0.0 || !smin.is_normal() {
        return f64::INFINITY;
    }
    smax / smin
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn upper_triangular_solve_roundtrip() {
        let t = DenseMatrix::from_row_major(3, 3, &[2.0, 1.0, -1.0, 0.0, 3.0, 0.5, 0.0, 0.0, 4.0])
            .unwrap();
        let y = solve_upper_triangular(&t, &[1.0, 2.0, 3.0]).unwrap();
        let b = t.matvec(&y).unwrap();
        for (bi, want) in b.iter().zip(&[1.0, 2.0, 3.0]) {
            assert!((bi - want).abs() < 1e-14);
        }
    }

    #[test]
    fn singular_triangular_names_column() {
        let t = DenseMatrix::from_row_major(2, 2, &[1.0, 5.0, 0.0, 0.0]).unwrap();
        match solve_upper_triangular(&t, &[1.0, 1.0]) {
            Err(KernelError::SingularTriangular { col }) => assert_eq!(col, 1),
            other => panic!("expected singular error, got {other:?}"),
        }
    }

    #[test]
    fn transposed_solve_matches_direct() {
        let t = DenseMatrix::from_row_major(3, 3, &[2.0, 1.0, -1.0, 0.0, 3.0, 0.5, 0.0, 0.0, 4.0])
            .unwrap();
        let y = solve_upper_transposed(&t, &[1.0, -2.0, 0.5]).unwrap();
        let tt = t.transpose();
        let b = tt.matvec(&y).unwrap();
        for (bi, want) in b.iter().zip(&[1.0, -2.0, 0.5]) {
            assert!((bi - want).abs() < 1e-14);
        }
    }

    #[test]
    fn cond_of_identity_is_one() {
        let id = DenseMatrix::identity(5);
        let c = cond_estimate(&id);
        assert!((c - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cond_singular_is_infinite() {
        let mut t = DenseMatrix::identity(3);
        t.set(2, 2, 0.0);
        assert!(cond_estimate(&t).is_infinite());
    }
}
