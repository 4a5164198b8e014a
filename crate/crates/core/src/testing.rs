//! Slow reference implementations used by the test suites as independent
//! oracles: textbook routes (Gram-Schmidt QR, LU with partial pivoting,
//! two-sided Jacobi eigensolver, naive transforms) kept deliberately separate
//! from the production kernels so the two can be cross-checked.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::kernels::DenseMatrix;
use crate::operators::LinearOperator;

/// Matrix with independent standard normal entries from a fixed seed.
pub fn seeded_matrix(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    DenseMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Vector with independent standard normal entries from a fixed seed.
pub fn seeded_vector(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Random matrix with orthonormal columns (Gram-Schmidt of a Gaussian).
pub fn seeded_orthonormal(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    let (q, _) = classical_gram_schmidt_qr(&seeded_matrix(rows, cols, seed));
    q
}

/// Classical Gram-Schmidt QR with a second orthogonalization pass.
/// Returns (Q, R) with nonnegative diagonal in R.
pub fn classical_gram_schmidt_qr(m: &DenseMatrix) -> (DenseMatrix, DenseMatrix) {
    let (rows, cols) = (m.nrows(), m.ncols());
    let mut q = DenseMatrix::zeros(rows, 0);
    let mut r = DenseMatrix::zeros(cols, cols);
    for j in 0..cols {
        let mut w = m.col(j).to_vec();
        for _ in 0..2 {
            for i in 0..j {
                let qi = q.col(i);
                let g: f64 = qi.iter().zip(&w).map(|(a, b)| a * b).sum();
                for (wk, qk) in w.iter_mut().zip(qi) {
                    *wk -= g * qk;
                }
                r.set(i, j, r.get(i, j) + g);
            }
        }
        let rho = w.iter().map(|v| v * v).sum::<f64>().sqrt();
        r.set(j, j, rho);
        if rho > 0.0 {
            for wk in &mut w {
                *wk /= rho;
            }
        }
        q.push_column(&w).unwrap();
    }
    (q, r)
}

/// Dense LU solve with partial pivoting. Returns `None` for singular systems.
pub fn lu_solve(a: &DenseMatrix, b: &[f64]) -> Option<Vec<f64>> {
    let n = a.nrows();
    assert_eq!(a.ncols(), n);
    assert_eq!(b.len(), n);
    let mut lu = a.clone();
    let mut x = b.to_vec();
    for k in 0..n {
        let mut piv = k;
        let mut best = lu.get(k, k).abs();
        for i in k + 1..n {
            let v = lu.get(i, k).abs();
            if v > best {
                best = v;
                piv = i;
            }
        }
        if best == 0.0 {
            return None;
        }
        if piv != k {
            for j in 0..n {
                let tmp = lu.get(k, j);
                lu.set(k, j, lu.get(piv, j));
                lu.set(piv, j, tmp);
            }
            x.swap(k, piv);
        }
        let pivot = lu.get(k, k);
        for i in k + 1..n {
            let f = lu.get(i, k) / pivot;
            lu.set(i, k, f);
            for j in k + 1..n {
                lu.set(i, j, lu.get(i, j) - f * lu.get(k, j));
            }
            x[i] -= f * x[k];
        }
    }
    for i in (0..n).rev() {
        for j in i + 1..n {
            x[i] -= lu.get(i, j) * x[j];
        }
        x[i] /= lu.get(i, i);
    }
    Some(x)
}

/// Two-sided Jacobi eigensolver for symmetric matrices. Returns eigenvalues
/// in descending order with the matching orthonormal eigenvectors as columns.
pub fn symmetric_jacobi_eig(a: &DenseMatrix) -> (Vec<f64>, DenseMatrix) {
    let n = a.nrows();
    assert_eq!(a.ncols(), n);
    let mut w = a.clone();
    let mut v = DenseMatrix::identity(n);
    for _sweep in 0..60 {
        let mut off = 0.0_f64;
        for p in 0..n {
            for q in p + 1..n {
                off = off.max(w.get(p, q).abs());
            }
        }
        let scale = w.max_abs();
        if off <= 1e-15 * scale.max(1e-300) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = w.get(p, q);
                if apq.abs() <= 1e-18 * scale {
                    continue;
                }
                let app = w.get(p, p);
                let aqq = w.get(q, q);
                let tau = (aqq - app) / (2.0 * apq);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..n {
                    let wip = w.get(i, p);
                    let wiq = w.get(i, q);
                    w.set(i, p, c * wip - s * wiq);
                    w.set(i, q, s * wip + c * wiq);
                }
                for j in 0..n {
                    let wpj = w.get(p, j);
                    let wqj = w.get(q, j);
                    w.set(p, j, c * wpj - s * wqj);
                    w.set(q, j, s * wpj + c * wqj);
                }
                for i in 0..n {
                    let vip = v.get(i, p);
                    let viq = v.get(i, q);
                    v.set(i, p, c * vip - s * viq);
                    v.set(i, q, s * vip + c * viq);
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| w.get(j, j).partial_cmp(&w.get(i, i)).unwrap());
    let values = order.iter().map(|&i| w.get(i, i)).collect();
    let vectors =
        DenseMatrix::from_columns(&order.iter().map(|&i| v.col(i).to_vec()).collect::<Vec<_>>())
            .unwrap();
    (values, vectors)
}

/// Singular values (descending) via the eigenvalues of the Gram matrix.
/// Adequate as an oracle down to moderate condition numbers.
pub fn gram_singular_values(m: &DenseMatrix) -> Vec<f64> {
    let gram = m.transpose().matmul(m).unwrap();
    let (vals, _) = symmetric_jacobi_eig(&gram);
    vals.into_iter().map(|v| v.max(0.0).sqrt()).collect()
}

/// Naive O(n^2) orthonormal DCT-II.
pub fn naive_dct2(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut y = vec![0.0; n];
    for (j, yj) in y.iter_mut().enumerate() {
        let w = if j == 0 {
            (1.0 / n as f64).sqrt()
        } else {
            (2.0 / n as f64).sqrt()
        };
        let mut acc = 0.0;
        for (t, &xt) in x.iter().enumerate() {
            let angle = std::f64::consts::PI * j as f64 * (2.0 * t as f64 + 1.0) / (2.0 * n as f64);
            acc += xt * angle.cos();
        }
        *yj = w * acc;
    }
    y
}

/// Sine of the largest principal angle between the column spans of `a` and
/// `b` (both orthonormalized internally).
pub fn max_principal_angle_sin(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    let (qa, _) = classical_gram_schmidt_qr(a);
    let (qb, _) = classical_gram_schmidt_qr(b);
    // residual = (I - Qa Qa^T) Qb; its largest singular value is sin(theta_max)
    let cross = qa.transpose().matmul(&qb).unwrap();
    let proj = qa.matmul(&cross).unwrap();
    let resid = qb.sub(&proj).unwrap();
    gram_singular_values(&resid).first().copied().unwrap_or(0.0)
}

/// Materialize an operator as a dense matrix by applying it to basis vectors.
pub fn materialize(op: &dyn LinearOperator) -> DenseMatrix {
    let n = op.ncols();
    let mut out = DenseMatrix::zeros(op.nrows(), n);
    let mut e = vec![0.0; n];
    let mut col = vec![0.0; op.nrows()];
    for j in 0..n {
        e[j] = 1.0;
        op.apply(&e, &mut col);
        out.col_mut(j).copy_from_slice(&col);
        e[j] = 0.0;
    }
    out
}

/// Relative eigenpair residual `||M v - lambda v|| / (||M|| ||v||)` for a
/// complex pair, with `||M||` the Frobenius norm.
pub fn eig_residual(m: &DenseMatrix, lambda: Complex64, v: &[Complex64]) -> f64 {
    let n = m.nrows();
    assert_eq!(v.len(), n);
    let mut num = 0.0;
    for i in 0..n {
        let mut acc = Complex64::new(0.0, 0.0);
        for (j, vj) in v.iter().enumerate() {
            acc += m.get(i, j) * vj;
        }
        acc -= lambda * v[i];
        num += acc.norm_sqr();
    }
    let vnorm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    num.sqrt() / (m.frobenius_norm().max(1e-300) * vnorm.max(1e-300))
}

/// Roots of a cubic `t^3 + a2 t^2 + a1 t + a0` found by sign-change bisection
/// (assumes three separated real roots within [-bound, bound]).
pub fn cubic_roots_by_bisection(a2: f64, a1: f64, a0: f64, bound: f64) -> Vec<f64> {
    let p = |t: f64| ((t + a2) * t + a1) * t + a0;
    let mut roots = Vec::new();
    let steps = 40_000;
    let mut prev_t = -bound;
    let mut prev_v = p(prev_t);
    for k in 1..=steps {
        let t = -bound + 2.0 * bound * k as f64 / steps as f64;
        let v = p(t);
        if prev_v == 0.0 {
            roots.push(prev_t);
        } else if prev_v * v < 0.0 {
            let (mut lo, mut hi) = (prev_t, t);
            let (mut flo, _fhi) = (prev_v, v);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                let fm = p(mid);
                if flo * fm <= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                    flo = fm;
                }
            }
            roots.push(0.5 * (lo + hi));
        }
        prev_t = t;
        prev_v = v;
    }
    roots
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lu_solves_small_system() {
        let a = DenseMatrix::from_row_major(2, 2, &[4.0, 1.0, 2.0, 3.0]).unwrap();
        let x = lu_solve(&a, &[9.0, 13.0]).unwrap();
        assert!((x[0] - 1.4).abs() < 1e-12);
        assert!((x[1] - 3.4).abs() < 1e-12);
    }

    #[test]
    fn jacobi_eig_diagonal() {
        let a = DenseMatrix::from_row_major(3, 3, &[3.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 2.0])
            .unwrap();
        let (vals, _) = symmetric_jacobi_eig(&a);
        assert!((vals[0] - 3.0).abs() < 1e-13);
        assert!((vals[1] - 2.0).abs() < 1e-13);
        assert!((vals[2] - 1.0).abs() < 1e-13);
    }

    #[test]
    fn jacobi_eig_reconstructs() {
        let g = seeded_matrix(6, 6, 11);
        let a = g.matmul(&g.transpose()).unwrap();
        let (vals, vecs) = symmetric_jacobi_eig(&a);
        for (k, &lam) in vals.iter().enumerate() {
            let av = a.matvec(vecs.col(k)).unwrap();
            let mut err = 0.0_f64;
            for i in 0..6 {
                err = err.max((av[i] - lam * vecs.get(i, k)).abs());
            }
            assert!(err < 1e-10 * a.max_abs().max(1.0), "pair {k} residual {err}");
        }
    }

    #[test]
    fn cubic_bisection_finds_integer_roots() {
        // t^3 - 6 t^2 + 11 t - 6 = (t-1)(t-2)(t-3)
        let roots = cubic_roots_by_bisection(-6.0, 11.0, -6.0, 10.0);
        assert_eq!(roots.len(), 3);
        assert!((roots[0] - 1.0).abs() < 1e-10);
        assert!((roots[1] - 2.0).abs() < 1e-10);
        assert!((roots[2] - 3.0).abs() < 1e-10);
    }

    #[test]
    fn principal_angle_of_identical_spans_is_zero() {
        let a = seeded_matrix(30, 4, 2);
        let mut b = a.clone();
        b.scale(2.5);
        assert!(max_principal_angle_sin(&a, &b) < 1e-13);
    }
}
