//! Real nonsymmetric dense eigensolver: Householder reduction to Hessenberg
//! form followed by the Francis double-shift QR iteration, with eigenvectors
//! recovered by back substitution on the quasi-triangular factor. This is the
//! classic EISPACK organization (orthes/hqr2), which handles complex
//! conjugate pairs entirely in real arithmetic.

use num_complex::Complex64;

use super::matrix::DenseMatrix;
use super::KernelError;

const EPS: f64 = f64::EPSILON / 2.0;

/// Eigenvalues with (optionally) matching eigenvectors of a real matrix.
#[derive(Clone, Debug)]
pub struct ComplexEigenDecomposition {
    /// Eigenvalues sorted by descending real part, ties by descending
    /// imaginary part, so conjugate pairs sit adjacent.
    pub values: Vec<Complex64>,
    /// Unit-norm eigenvectors, `vectors[k]` matching `values[k]`. Each is
    /// scaled so its largest-modulus entry is real and positive.
    pub vectors: Vec<Vec<Complex64>>,
}

/// Eigenvalues and eigenvectors of a square real matrix.
pub fn dense_eig(m: &DenseMatrix) -> Result<ComplexEigenDecomposition, KernelError> {
    eig_impl(m, true)
}

/// Eigenvalues only (skips transformation accumulation and back substitution).
pub fn dense_eig_values(m: &DenseMatrix) -> Result<Vec<Complex64>, KernelError> {
    eig_impl(m, false).map(|dec| dec.values)
}

/// Row-major square working array; the iteration is row-access heavy.
struct Square {
    n: usize,
    a: Vec<f64>,
}

impl Square {
    fn from_matrix(m: &DenseMatrix) -> Self {
        let n = m.nrows();
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                a[i * n + j] = m.get(i, j);
            }
        }
        Square { n, a }
    }

    fn identity(n: usize) -> Self {
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            a[i * n + i] = 1.0;
        }
        Square { n, a }
    }

    #[inline]
    fn get(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.n + j]
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize, v: f64) {
        self.a[i * self.n + j] = v;
    }

    #[inline]
    fn add(&mut self, i: usize, j: usize, v: f64) {
        self.a[i * self.n + j] += v;
    }
}

fn eig_impl(m: &DenseMatrix, want_vectors: bool) -> Result<ComplexEigenDecomposition, KernelError> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(KernelError::DimensionMismatch {
            expected: n,
            got: m.ncols(),
        });
    }
    if !m.is_finite() {
        return Err(KernelError::NonFinite);
    }
    if n == 0 {
        return Ok(ComplexEigenDecomposition {
            values: Vec::new(),
            vectors: Vec::new(),
        });
    }
    let mut h = Square::from_matrix(m);
    let mut v = want_vectors.then(|| Square::identity(n));
    orthes(&mut h, v.as_mut());
    let (d, e) = hqr2(&mut h, v.as_mut())?;
    Ok(assemble(&d, &e, v.as_ref()))
}

/// Householder similarity reduction to upper Hessenberg form, accumulating
/// the transformation when eigenvectors are wanted.
fn orthes(h: &mut Square, v: Option<&mut Square>) {
    let n = h.n;
    if n < 3 {
        return;
    }
    let (low, high) = (0, n - 1);
    let mut ort = vec![0.0; n];
    for m in low + 1..high {
        let mut scale = 0.0;
        for i in m..=high {
            scale += h.get(i, m - 1).abs();
        }
        if scale == 0.0 {
            continue;
        }
        let mut hsum = 0.0;
        for i in (m..=high).rev() {
            ort[i] = h.get(i, m - 1) / scale;
            hsum += ort[i] * ort[i];
        }
        let mut g = hsum.sqrt();
        if ort[m] > 0.0 {
            g = -g;
        }
        hsum -= ort[m] * g;
        ort[m] -= g;
        // Apply the reflector from both sides.
        for j in m..n {
            let mut f = 0.0;
            for i in (m..=high).rev() {
                f += ort[i] * h.get(i, j);
            }
            f /= hsum;
            for i in m..=high {
                h.add(i, j, -f * ort[i]);
            }
        }
        for i in 0..=high {
            let mut f = 0.0;
            for j in (m..=high).rev() {
                f += ort[j] * h.get(i, j);
            }
            f /= hsum;
            for j in m..=high {
                h.add(i, j, -f * ort[j]);
            }
        }
        ort[m] *= scale;
        h.set(m, m - 1, scale * g);
    }
    if let Some(v) = v {
        for m in (low + 1..high).rev() {
            if h.get(m, m - 1) == 0.0 {
                continue;
            }
            for i in m + 1..=high {
                ort[i] = h.get(i, m - 1);
            }
            for j in m..=high {
                let mut g = 0.0;
                for i in m..=high {
                    g += ort[i] * v.get(i, j);
                }
                // Double division avoids possible underflow.
                g = (g / ort[m]) / h.get(m, m - 1);
                for i in m..=high {
                    v.add(i, j, g * ort[i]);
                }
            }
        }
    }
    // Clear the stored reflector parts below the subdiagonal.
    for j in 0..n {
        for i in j + 2..n {
            h.set(i, j, 0.0);
        }
    }
}

/// Robust complex division (a + ib) / (c + id).
fn cdiv(a: f64, b: f64, c: f64, d: f64) -> (f64, f64) {
    if c.abs() > d.abs() {
        let r = d / c;
        let den = c + d * r;
        ((a + b * r) / den, (b - a * r) / den)
    } else {
        let r = c / d;
        let den = c * r + d;
        ((a * r + b) / den, (b * r - a) / den)
    }
}

/// Francis double-shift QR on an upper Hessenberg matrix, returning the real
/// and imaginary eigenvalue parts. When `v` is present, the Schur vectors are
/// accumulated and eigenvectors are recovered into `v` by back substitution.
#[allow(clippy::needless_range_loop)]
fn hqr2(hm: &mut Square, mut vm: Option<&mut Square>) -> Result<(Vec<f64>, Vec<f64>), KernelError> {
    let nn = hm.n;
    let low = 0usize;
    let high = nn - 1;
    let mut d = vec![0.0; nn];
    let mut e = vec![0.0; nn];
    let mut exshift = 0.0;
    let (mut p, mut q, mut r, mut s, mut z): (f64, f64, f64, f64, f64) =
        (0.0, 0.0, 0.0, 0.0, 0.0);
    let (mut w, mut x, mut y): (f64, f64, f64);

    let mut norm = 0.0;
    for i in 0..nn {
        for j in i.saturating_sub(1)..nn {
            norm += hm.get(i, j).abs();
        }
    }
    if norm == 0.0 {
        // Zero (or fully reduced) matrix: eigenvalues are all zero and any
        // orthonormal set serves as eigenvectors.
        return Ok((d, e));
    }

    let sweep_cap = 60 * nn;
    let mut sweeps = 0usize;
    let mut na: isize = high as isize;
    let mut iter = 0usize;
    while na >= low as isize {
        let n = na as usize;
        // Look for a single small subdiagonal element.
        let mut l = n;
        while l > low {
            s = hm.get(l - 1, l - 1).abs() + hm.get(l, l).abs();
            if s == 0.0 {
                s = norm;
            }
            if hm.get(l, l - 1).abs() < EPS * s {
                break;
            }
            l -= 1;
        }

        if l == n {
            // One root found.
            hm.add(n, n, exshift);
            d[n] = hm.get(n, n);
            e[n] = 0.0;
            na -= 1;
            iter = 0;
        } else if l == n - 1 {
            // Two roots found.
            w = hm.get(n, n - 1) * hm.get(n - 1, n);
            p = (hm.get(n - 1, n - 1) - hm.get(n, n)) / 2.0;
            q = p * p + w;
            z = q.abs().sqrt();
            hm.add(n, n, exshift);
            hm.add(n - 1, n - 1, exshift);
            x = hm.get(n, n);
            if q >= 0.0 {
                // Real pair.
                z = if p >= 0.0 { p + z } else { p - z };
                d[n - 1] = x + z;
                d[n] = d[n - 1];
                if z != 0.0 {
                    d[n] = x - w / z;
                }
                e[n - 1] = 0.0;
                e[n] = 0.0;
                x = hm.get(n, n - 1);
                s = x.abs() + z.abs();
                p = x / s;
                q = z / s;
                r = (p * p + q * q).sqrt();
                p /= r;
                q /= r;
                for j in n - 1..nn {
                    z = hm.get(n - 1, j);
                    hm.set(n - 1, j, q * z + p * hm.get(n, j));
                    hm.set(n, j, q * hm.get(n, j) - p * z);
                }
                for i in 0..=n {
                    z = hm.get(i, n - 1);
                    hm.set(i, n - 1, q * z + p * hm.get(i, n));
                    hm.set(i, n, q * hm.get(i, n) - p * z);
                }
                if let Some(v) = vm.as_deref_mut() {
                    for i in low..=high {
                        z = v.get(i, n - 1);
                        v.set(i, n - 1, q * z + p * v.get(i, n));
                        v.set(i, n, q * v.get(i, n) - p * z);
                    }
                }
            } else {
                // Complex pair.
                d[n - 1] = x + p;
                d[n] = x + p;
                e[n - 1] = z;
                e[n] = -z;
            }
            na -= 2;
            iter = 0;
        } else {
            // No convergence yet: form a shift.
            x = hm.get(n, n);
            y = hm.get(n - 1, n - 1);
            w = hm.get(n, n - 1) * hm.get(n - 1, n);
            if iter > 0 && iter % 10 == 0 {
                // Exceptional shift after every ten stalled iterations.
                exshift += x;
                for i in low..=n {
                    hm.add(i, i, -x);
                }
                s = hm.get(n, n - 1).abs() + hm.get(n - 1, n - 2).abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            iter += 1;
            sweeps += 1;
            if sweeps > sweep_cap {
                let mut partial = Vec::new();
                for k in (n + 1)..nn {
                    partial.push(Complex64::new(d[k], e[k]));
                }
                sort_values(&mut partial);
                return Err(KernelError::EigConvergence {
                    sweeps: sweep_cap,
                    partial,
                });
            }

            // Look for two consecutive small sub-diagonal elements.
            let mut m = (n - 2) as isize;
            while m >= l as isize {
                let mu = m as usize;
                z = hm.get(mu, mu);
                r = x - z;
                s = y - z;
                p = (r * s - w) / hm.get(mu + 1, mu) + hm.get(mu, mu + 1);
                q = hm.get(mu + 1, mu + 1) - z - r - s;
                r = hm.get(mu + 2, mu + 1);
                s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if mu == l {
                    break;
                }
                if hm.get(mu, mu - 1).abs() * (q.abs() + r.abs())
                    < EPS
                        * (p.abs()
                            * (hm.get(mu - 1, mu - 1).abs()
                                + z.abs()
                                + hm.get(mu + 1, mu + 1).abs()))
                {
                    break;
                }
                m -= 1;
            }
            let m = m as usize;
            for i in m + 2..=n {
                hm.set(i, i - 2, 0.0);
                if i > m + 2 {
                    hm.set(i, i - 3, 0.0);
                }
            }

            // Double QR step on rows l..=n and columns m..=n.
            for k in m..n {
                let notlast = k != n - 1;
                if k != m {
                    p = hm.get(k, k - 1);
                    q = hm.get(k + 1, k - 1);
                    r = if notlast { hm.get(k + 2, k - 1) } else { 0.0 };
                    x = p.abs() + q.abs() + r.abs();
                    if x == 0.0 {
                        continue;
                    }
                    p /= x;
                    q /= x;
                    r /= x;
                }
                s = (p * p + q * q + r * r).sqrt();
                if p < 0.0 {
                    s = -s;
                }
                if s == 0.0 {
                    continue;
                }
                if k != m {
                    hm.set(k, k - 1, -s * x);
                } else if l != m {
                    hm.set(k, k - 1, -hm.get(k, k - 1));
                }
                p += s;
                x = p / s;
                y = q / s;
                z = r / s;
                q /= p;
                r /= p;

                // Row modification.
                for j in k..nn {
                    let mut pp = hm.get(k, j) + q * hm.get(k + 1, j);
                    if notlast {
                        pp += r * hm.get(k + 2, j);
                        hm.add(k + 2, j, -pp * z);
                    }
                    hm.add(k, j, -pp * x);
                    hm.add(k + 1, j, -pp * y);
                }
                // Column modification.
                for i in 0..=n.min(k + 3) {
                    let mut pp = x * hm.get(i, k) + y * hm.get(i, k + 1);
                    if notlast {
                        pp += z * hm.get(i, k + 2);
                        hm.add(i, k + 2, -pp * r);
                    }
                    hm.add(i, k, -pp);
                    hm.add(i, k + 1, -pp * q);
                }
                // Accumulate transformations.
                if let Some(v) = vm.as_deref_mut() {
                    for i in low..=high {
                        let mut pp = x * v.get(i, k) + y * v.get(i, k + 1);
                        if notlast {
                            pp += z * v.get(i, k + 2);
                            v.add(i, k + 2, -pp * r);
                        }
                        v.add(i, k, -pp);
                        v.add(i, k + 1, -pp * q);
                    }
                }
            }
        }
    }

    let Some(v) = vm else {
        return Ok((d, e));
    };

    // Back substitution to find vectors of the upper quasi-triangular form.
    for nh in (0..nn).rev() {
        p = d[nh];
        q = e[nh];
        if q == 0.0 {
            // Real eigenvector.
            let mut l = nh;
            hm.set(nh, nh, 1.0);
            for i in (0..nh).rev() {
                w = hm.get(i, i) - p;
                r = 0.0;
                for j in l..=nh {
                    r += hm.get(i, j) * hm.get(j, nh);
                }
                if e[i] < 0.0 {
                    z = w;
                    s = r;
                } else {
                    l = i;
                    if e[i] == 0.0 {
                        if w != 0.0 {
                            hm.set(i, nh, -r / w);
                        } else {
                            hm.set(i, nh, -r / (EPS * norm));
                        }
                    } else {
                        // Solve the real 2x2 block.
                        x = hm.get(i, i + 1);
                        y = hm.get(i + 1, i);
                        let qq = (d[i] - p) * (d[i] - p) + e[i] * e[i];
                        let t = (x * s - z * r) / qq;
                        hm.set(i, nh, t);
                        if x.abs() > z.abs() {
                            hm.set(i + 1, nh, (-r - w * t) / x);
                        } else {
                            hm.set(i + 1, nh, (-s - y * t) / z);
                        }
                    }
                    // Overflow control.
                    let t = hm.get(i, nh).abs();
                    if (EPS * t) * t > 1.0 {
                        for j in i..=nh {
                            let vv = hm.get(j, nh) / t;
                            hm.set(j, nh, vv);
                        }
                    }
                }
            }
        } else if q < 0.0 {
            // Complex eigenvector, stored as (real, imag) column pair.
            let mut l = nh - 1;
            if hm.get(nh, nh - 1).abs() > hm.get(nh - 1, nh).abs() {
                hm.set(nh - 1, nh - 1, q / hm.get(nh, nh - 1));
                hm.set(nh - 1, nh, -(hm.get(nh, nh) - p) / hm.get(nh, nh - 1));
            } else {
                let (cr, ci) = cdiv(0.0, -hm.get(nh - 1, nh), hm.get(nh - 1, nh - 1) - p, q);
                hm.set(nh - 1, nh - 1, cr);
                hm.set(nh - 1, nh, ci);
            }
            hm.set(nh, nh - 1, 0.0);
            hm.set(nh, nh, 1.0);
            if nh >= 2 {
                for i in (0..=nh - 2).rev() {
                    let mut ra = 0.0;
                    let mut sa = 0.0;
                    for j in l..=nh {
                        ra += hm.get(i, j) * hm.get(j, nh - 1);
                        sa += hm.get(i, j) * hm.get(j, nh);
                    }
                    w = hm.get(i, i) - p;
                    if e[i] < 0.0 {
                        z = w;
                        r = ra;
                        s = sa;
                    } else {
                        l = i;
                        if e[i] == 0.0 {
                            let (cr, ci) = cdiv(-ra, -sa, w, q);
                            hm.set(i, nh - 1, cr);
                            hm.set(i, nh, ci);
                        } else {
                            // Solve the complex 2x2 block.
                            x = hm.get(i, i + 1);
                            y = hm.get(i + 1, i);
                            let mut vr = (d[i] - p) * (d[i] - p) + e[i] * e[i] - q * q;
                            let vi = (d[i] - p) * 2.0 * q;
                            if vr == 0.0 && vi == 0.0 {
                                vr = EPS
                                    * norm
                                    * (w.abs() + q.abs() + x.abs() + y.abs() + z.abs());
                            }
                            let (cr, ci) =
                                cdiv(x * r - z * ra + q * sa, x * s - z * sa - q * ra, vr, vi);
                            hm.set(i, nh - 1, cr);
                            hm.set(i, nh, ci);
                            if x.abs() > z.abs() + q.abs() {
                                hm.set(
                                    i + 1,
                                    nh - 1,
                                    (-ra - w * hm.get(i, nh - 1) + q * hm.get(i, nh)) / x,
                                );
                                hm.set(
                                    i + 1,
                                    nh,
                                    (-sa - w * hm.get(i, nh) - q * hm.get(i, nh - 1)) / x,
                                );
                            } else {
                                let (cr, ci) = cdiv(
                                    -r - y * hm.get(i, nh - 1),
                                    -s - y * hm.get(i, nh),
                                    z,
                                    q,
                                );
                                hm.set(i + 1, nh - 1, cr);
                                hm.set(i + 1, nh, ci);
                            }
                        }
                        // Overflow control.
                        let t = hm.get(i, nh - 1).abs().max(hm.get(i, nh).abs());
                        if (EPS * t) * t > 1.0 {
                            for j in i..=nh {
                                let vr = hm.get(j, nh - 1) / t;
                                let vi = hm.get(j, nh) / t;
                                hm.set(j, nh - 1, vr);
                                hm.set(j, nh, vi);
                            }
                        }
                    }
                }
            }
        }
    }

    // Back transformation to the original coordinates.
    for j in (low..nn).rev() {
        for i in low..=high {
            let mut zz = 0.0;
            for k in low..=j.min(high) {
                zz += v.get(i, k) * hm.get(k, j);
            }
            v.set(i, j, zz);
        }
    }

    Ok((d, e))
}

fn sort_values(values: &mut [Complex64]) {
    values.sort_by(|a, b| {
        b.re.partial_cmp(&a.re)
            .unwrap()
            .then(b.im.partial_cmp(&a.im).unwrap())
    });
}

/// Build the sorted, normalized decomposition from the raw (d, e) parts and
/// the back-transformed vector columns.
fn assemble(d: &[f64], e: &[f64], v: Option<&Square>) -> ComplexEigenDecomposition {
    let nn = d.len();
    let mut entries: Vec<(Complex64, Vec<Complex64>)> = Vec::with_capacity(nn);
    let mut k = 0;
    while k < nn {
        if e[k] == 0.0 {
            let vec = v.map_or_else(Vec::new, |v| {
                (0..nn).map(|i| Complex64::new(v.get(i, k), 0.0)).collect()
            });
            entries.push((Complex64::new(d[k], 0.0), vec));
            k += 1;
        } else {
            let (vre, vim): (Vec<f64>, Vec<f64>) = match v {
                Some(v) => (
                    (0..nn).map(|i| v.get(i, k)).collect(),
                    (0..nn).map(|i| v.get(i, k + 1)).collect(),
                ),
                None => (Vec::new(), Vec::new()),
            };
            let plus: Vec<Complex64> = vre
                .iter()
                .zip(&vim)
                .map(|(&a, &b)| Complex64::new(a, b))
                .collect();
            let minus: Vec<Complex64> = vre
                .iter()
                .zip(&vim)
                .map(|(&a, &b)| Complex64::new(a, -b))
                .collect();
            entries.push((Complex64::new(d[k], e[k]), plus));
            entries.push((Complex64::new(d[k + 1], e[k + 1]), minus));
            k += 2;
        }
    }
    entries.sort_by(|a, b| {
        b.0.re
            .partial_cmp(&a.0.re)
            .unwrap()
            .then(b.0.im.partial_cmp(&a.0.im).unwrap())
    });
    let mut values = Vec::with_capacity(nn);
    let mut vectors = Vec::with_capacity(nn);
    for (val, mut vec) in entries {
        if !vec.is_empty() {
            // Deterministic scaling: unit norm, largest entry real positive.
            let (mut best, mut best_mod) = (0usize, 0.0f64);
            for (i, z) in vec.iter().enumerate() {
                let m = z.norm();
                if m > best_mod {
                    best_mod = m;
                    best = i;
                }
            }
            if best_mod > 0.0 {
                let phase = vec[best].conj() / best_mod;
                let norm: f64 = vec.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                for z in &mut vec {
                    *z = *z * phase / norm;
                }
            }
        }
        values.push(val);
        vectors.push(vec);
    }
    ComplexEigenDecomposition { values, vectors }
}
