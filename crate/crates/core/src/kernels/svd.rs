//! Truncated singular value decomposition by one-sided Jacobi rotations.
//!
//! One-sided Jacobi resolves small singular values to high relative accuracy,
//! which is what the stabilized eigensolver path needs when it truncates a
//! sketched basis at condition numbers near 1/eps; a Gram-matrix route would
//! lose everything below sqrt(eps).

use super::matrix::{dot, norm2, DenseMatrix};
use super::qr::householder_qr;
use super::KernelError;

const MAX_SWEEPS: usize = 60;
/// Column pairs whose normalized inner product falls below this are treated
/// as already orthogonal.
const ORTH_TOL: f64 = 1e-15;

/// Rank-truncated SVD `M ~ U * diag(sigma) * V^T`.
#[derive(Clone, Debug)]
pub struct TruncatedSvd {
    /// Left singular vectors, one column per retained value.
    pub u: DenseMatrix,
    /// Retained singular values, descending and strictly positive.
    pub sigma: Vec<f64>,
    /// Right singular vectors, one column per retained value.
    pub v: DenseMatrix,
    /// Number of retained values.
    pub rank: usize,
}

/// Full singular value set of `M`, descending (zeros included).
pub fn singular_values(m: &DenseMatrix) -> Vec<f64> {
    match jacobi_svd(m) {
        Ok((_, sigma, _)) | Err((_, sigma, _)) => sigma,
    }
}

/// Truncated SVD retaining the largest rank `r` such that
/// `sigma_1 / sigma_r <= tol`. The tolerance must exceed 1. A zero matrix
/// yields an empty decomposition (`rank = 0`).
pub fn truncated_svd(m: &DenseMatrix, tol: f64) -> Result<TruncatedSvd, KernelError> {
    if !(tol > 1.0) {
        return Err(KernelError::InvalidTolerance(tol));
    }
    if !m.is_finite() {
        return Err(KernelError::NonFinite);
    }
    let (u, sigma, v) = jacobi_svd(m).map_err(|_| KernelError::SvdConvergence {
        sweeps: MAX_SWEEPS,
    })?;
    let smax = sigma.first().copied().unwrap_or(0.0);
    let mut rank = 0;
    for &s in &sigma {
        if s > 0.0 && smax / s <= tol {
            rank += 1;
        } else {
            break;
        }
    }
    Ok(TruncatedSvd {
        u: u.leading_columns(rank),
        sigma: sigma[..rank].to_vec(),
        v: v.leading_columns(rank),
        rank,
    })
}

/// One-sided Jacobi SVD. Returns (U, sigma, V) with sigma descending, U and
/// V holding min(rows, cols) columns (zero columns of U where sigma is 0).
/// The error side carries the current (still usable) estimate when the sweep
/// cap is hit.
#[allow(clippy::type_complexity)]
fn jacobi_svd(
    m: &DenseMatrix,
) -> Result<(DenseMatrix, Vec<f64>, DenseMatrix), (DenseMatrix, Vec<f64>, DenseMatrix)> {
    if m.nrows() < m.ncols() {
        return match jacobi_svd(&m.transpose()) {
            Ok((u, s, v)) => Ok((v, s, u)),
            Err((u, s, v)) => Err((v, s, u)),
        };
    }
    let d = m.ncols();
    // A QR preprocessing step shrinks the working matrix to d-by-d; the
    // singular values are unchanged and U picks up the orthonormal factor.
    let pre = if m.nrows() > d {
        Some(householder_qr(m).expect("finite tall matrix"))
    } else {
        None
    };
    let mut w = match &pre {
        Some(qr) => qr.t.clone(),
        None => m.clone(),
    };
    let mut v = DenseMatrix::identity(d);
    let mut converged = false;
    for _sweep in 0..MAX_SWEEPS {
        let mut rotated = 0usize;
        for p in 0..d {
            for q in p + 1..d {
                let (a, b, c) = {
                    let wp = w.col(p);
                    let wq = w.col(q);
                    (dot(wp, wp), dot(wq, wq), dot(wp, wq))
                };
                if a == 0.0 || b == 0.0 || c.abs() <= ORTH_TOL * (a * b).sqrt() {
                    continue;
                }
                let tau = (b - a) / (2.0 * c);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                rotate_pair(&mut w, p, q, cs, sn);
                rotate_pair(&mut v, p, q, cs, sn);
                rotated += 1;
            }
        }
        if rotated == 0 {
            converged = true;
            break;
        }
    }
    let mut order: Vec<usize> = (0..d).collect();
    let norms: Vec<f64> = (0..d).map(|j| norm2(w.col(j))).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap());
    let mut u = DenseMatrix::zeros(w.nrows(), d);
    let mut sigma = Vec::with_capacity(d);
    let mut vs = DenseMatrix::zeros(d, d);
    for (out_j, &j) in order.iter().enumerate() {
        let s = norms[j];
        sigma.push(s);
        if s > 0.0 {
            let wc = w.col(j);
            let uc = u.col_mut(out_j);
            for (ui, wi) in uc.iter_mut().zip(wc) {
                *ui = wi / s;
            }
        }
        vs.col_mut(out_j).copy_from_slice(v.col(j));
    }
    let u = match &pre {
        Some(qr) => qr.u.matmul(&u).expect("dims agree"),
        None => u,
    };
    if converged {
        Ok((u, sigma, vs))
    } else {
        Err((u, sigma, vs))
    }
}

fn rotate_pair(m: &mut DenseMatrix, p: usize, q: usize, cs: f64, sn: f64) {
    let rows = m.nrows();
    for i in 0..rows {
        let a = m.get(i, p);
        let b = m.get(i, q);
        m.set(i, p, cs * a - sn * b);
        m.set(i, q, sn * a + cs * b);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::{gram_singular_values, seeded_matrix, seeded_orthonormal};

    #[test]
    fn svd_matches_gram_oracle() {
        let m = seeded_matrix(40, 10, 5);
        let svd = truncated_svd(&m, 1e12).unwrap();
        assert_eq!(svd.rank, 10);
        let oracle = gram_singular_values(&m);
        for (a, b) in svd.sigma.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-10 * oracle[0], "{a} vs {b}");
        }
    }

    #[test]
    fn svd_reconstructs() {
        let m = seeded_matrix(25, 12, 9);
        let svd = truncated_svd(&m, 1e13).unwrap();
        let mut usv = DenseMatrix::zeros(25, 12);
        for k in 0..svd.rank {
            for j in 0..12 {
                for i in 0..25 {
                    let v = usv.get(i, j) + svd.u.get(i, k) * svd.sigma[k] * svd.v.get(j, k);
                    usv.set(i, j, v);
                }
            }
        }
        let err = usv.sub(&m).unwrap().frobenius_norm() / m.frobenius_norm();
        assert!(err < 1e-13, "reconstruction error {err}");
    }

    #[test]
    fn truncation_drops_small_values() {
        // Known spectrum: sigma = 1, 1e-4, 1e-9 planted via orthogonal factors.
        let u = seeded_orthonormal(20, 3, 1);
        let v = seeded_orthonormal(8, 3, 2);
        let sig = [1.0, 1e-4, 1e-9];
        let mut m = DenseMatrix::zeros(20, 8);
        for k in 0..3 {
            for j in 0..8 {
                for i in 0..20 {
                    m.set(i, j, m.get(i, j) + u.get(i, k) * sig[k] * v.get(j, k));
                }
            }
        }
        let svd = truncated_svd(&m, 1e6).unwrap();
        assert_eq!(svd.rank, 2);
        assert!((svd.sigma[0] - 1.0).abs() < 1e-12);
        assert!((svd.sigma[1] - 1e-4).abs() < 1e-12);
        // Spectral error after truncation is bounded by the first dropped value.
        let t = svd.leading_error(&m);
        assert!(t <= 2.0 * 1e-9, "truncation error {t}");
    }

    #[test]
    fn zero_matrix_gives_empty_decomposition() {
        let m = DenseMatrix::zeros(6, 3);
        let svd = truncated_svd(&m, 1e10).unwrap();
        assert_eq!(svd.rank, 0);
        assert!(svd.sigma.is_empty());
    }

    #[test]
    fn tolerance_must_exceed_one() {
        let m = DenseMatrix::identity(3);
        assert!(truncated_svd(&m, 1.0).is_err());
        assert!(truncated_svd(&m, 0.5).is_err());
    }

    #[test]
    fn wide_input_supported() {
        let m = seeded_matrix(6, 15, 3);
        let sv = singular_values(&m);
        let oracle = gram_singular_values(&m.transpose());
        assert_eq!(sv.len(), 6);
        for (a, b) in sv.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-10 * oracle[0]);
        }
    }

    impl TruncatedSvd {
        /// Frobenius norm of `M - U diag(sigma) V^T` (test helper).
        fn leading_error(&self, m: &DenseMatrix) -> f64 {
            let mut resid = m.clone();
            for k in 0..self.rank {
                for j in 0..m.ncols() {
                    for i in 0..m.nrows() {
                        let v =
                            resid.get(i, j) - self.u.get(i, k) * self.sigma[k] * self.v.get(j, k);
                        resid.set(i, j, v);
                    }
                }
            }
            resid.frobenius_norm()
        }
    }
}
