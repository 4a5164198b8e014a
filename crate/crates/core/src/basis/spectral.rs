//! Spectral estimation for recurrence parameters.
//!
//! The Chebyshev and Newton recurrences need rough spectral information: a
//! bounding box for Chebyshev scaling and a set of shift values for
//! Newton.  Both come from a short fully-orthogonalised Arnoldi run whose
//! projected matrix is solved with the dense eigensolver.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{BasisError, SpectralBox};
use crate::kernels::{axpy, dense_eig_values, dot, norm2, DenseMatrix};
use crate::operators::LinearOperator;

/// Arnoldi steps used when a solver has to estimate spectral parameters
/// itself.
pub(crate) const DEFAULT_ESTIMATION_STEPS: usize = 20;

/// Fraction added to each side of the Ritz-value bounding rectangle to
/// hedge against under-estimation of the true spectrum.
const BOX_INFLATION: f64 = 0.10;

/// Run `steps` fully-orthogonalised Arnoldi steps from a seeded random
/// start and return the Ritz values (eigenvalues of the projected matrix).
/// The run stops early at an invariant subspace, in which case the Ritz
/// values of the smaller projection are exact eigenvalues.
pub fn ritz_values<A: LinearOperator + ?Sized>(
    op: &A,
    steps: usize,
    seed: u64,
) -> Result<Vec<Complex64>, BasisError> {
    let h = projected_matrix(op, steps, seed)?;
    Ok(dense_eig_values(&h)?)
}

/// Estimate an axis-aligned bounding box for the spectrum of `op` from
/// `steps` Arnoldi steps, inflating the Ritz-value rectangle by 10% per
/// side.  Fails when the estimate is degenerate (the operator acts as a
/// scalar on the probe subspace, leaving a box of zero extent).
pub fn estimate_spectral_box<A: LinearOperator + ?Sized>(
    op: &A,
    steps: usize,
    seed: u64,
) -> Result<SpectralBox, BasisError> {
    let ritz = ritz_values(op, steps, seed)?;
    if ritz.len() < 2 {
        return Err(BasisError::DegenerateBox(format!(
            "only {} ritz value(s) available",
            ritz.len()
        )));
    }
    let mut re_lo = f64::INFINITY;
    let mut re_hi = f64::NEG_INFINITY;
    let mut im_lo = f64::INFINITY;
    let mut im_hi = f64::NEG_INFINITY;
    for v in &ritz {
        re_lo = re_lo.min(v.re);
        re_hi = re_hi.max(v.re);
        im_lo = im_lo.min(v.im);
        im_hi = im_hi.max(v.im);
    }
    let width = re_hi - re_lo;
    let height = im_hi - im_lo;
    let spectral_box = SpectralBox {
        center: 0.5 * (re_lo + re_hi),
        half_width: 0.5 * width * (1.0 + 2.0 * BOX_INFLATION),
        half_height: 0.5 * height * (1.0 + 2.0 * BOX_INFLATION),
    };
    if spectral_box.rho() <= 0.0 {
        return Err(BasisError::DegenerateBox(
            "all ritz values coincide".into(),
        ));
    }
    Ok(spectral_box)
}

/// Order candidate Newton shifts so that early shifts are well spread:
/// start from the largest modulus and greedily append the value that
/// maximises the product of distances to those already chosen (computed in
/// log space).  Complex-conjugate pairs move as a unit and stay adjacent,
/// with the positive-imaginary member first.
pub fn leja_order(values: &[Complex64]) -> Vec<Complex64> {
    // Group values into units: a real singleton or a conjugate pair.
    let mut units: Vec<Vec<Complex64>> = Vec::new();
    let mut leftover_im: Vec<Complex64> = Vec::new();
    let mut positives: Vec<Complex64> = values.iter().copied().filter(|v| v.im > 0.0).collect();
    positives.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    let mut negatives: Vec<Complex64> = values.iter().copied().filter(|v| v.im < 0.0).collect();
    negatives.sort_by(|a, b| a.re.total_cmp(&b.re).then(b.im.total_cmp(&a.im)));
    let mut ni = 0;
    for p in positives {
        if ni < negatives.len() {
            units.push(vec![p, negatives[ni]]);
            ni += 1;
        } else {
            leftover_im.push(p);
        }
    }
    for v in values.iter().filter(|v| v.im == 0.0) {
        units.push(vec![*v]);
    }
    // Unmatched complex values are realified rather than dropped so the
    // shift count is preserved.
    for v in leftover_im.into_iter().chain(negatives.into_iter().skip(ni)) {
        units.push(vec![Complex64::new(v.re, 0.0)]);
    }
    if units.is_empty() {
        return Vec::new();
    }

    let mut chosen: Vec<Complex64> = Vec::with_capacity(values.len());
    let mut remaining = units;
    // Seed with the unit of largest modulus.
    let first = remaining
        .iter()
        .enumerate()
        .max_by(|(_, a), (_, b)| a[0].norm().total_cmp(&b[0].norm()))
        .map(|(i, _)| i)
        .unwrap();
    for v in remaining.swap_remove(first) {
        chosen.push(v);
    }
    while !remaining.is_empty() {
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for (i, unit) in remaining.iter().enumerate() {
            let mut score = 0.0;
            for c in &chosen {
                let d = (unit[0] - c).norm();
                score += d.max(f64::MIN_POSITIVE).ln();
            }
            if score > best_score {
                best_score = score;
                best = i;
            }
        }
        for v in remaining.swap_remove(best) {
            chosen.push(v);
        }
    }
    chosen
}

/// Fully-orthogonalised Arnoldi projection `Q^T A Q` of dimension at most
/// `steps`, started from a seeded unit random vector.
fn projected_matrix<A: LinearOperator + ?Sized>(
    op: &A,
    steps: usize,
    seed: u64,
) -> Result<DenseMatrix, BasisError> {
    if op.nrows() != op.ncols() {
        return Err(BasisError::DimensionMismatch {
            expected: op.nrows(),
            got: op.ncols(),
        });
    }
    let n = op.nrows();
    if n == 0 {
        return Err(BasisError::DimensionMismatch {
            expected: 1,
            got: 0,
        });
    }
    let steps = steps.min(n).max(1);
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut start: Vec<f64> = (0..n)
        .map(|_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
        .collect();
    let nrm = norm2(&start);
    for v in start.iter_mut() {
        *v /= nrm;
    }

    let mut q: Vec<Vec<f64>> = vec![start];
    // Column-major growth of H; trimmed to the realised dimension below.
    let mut h = DenseMatrix::zeros(steps, steps);
    let mut realised = steps;
    for j in 0..steps {
        let mut w = op.apply_vec(&q[j]);
        let scale = norm2(&w);
        // Double classical Gram-Schmidt, accumulating coefficients from
        // both passes.
        for _ in 0..2 {
            for (i, qi) in q.iter().enumerate() {
                let c = dot(qi, &w);
                axpy(-c, qi, &mut w);
                h.set(i, j, h.get(i, j) + c);
            }
        }
        let beta = norm2(&w);
        if j + 1 == steps {
            break;
        }
        if beta <= super::BREAKDOWN_TOL * scale.max(f64::MIN_POSITIVE) {
            // Invariant subspace found: the projection is exact at size
            // j + 1.
            realised = j + 1;
            break;
        }
        for v in w.iter_mut() {
            *v /= beta;
        }
        h.set(j + 1, j, beta);
        q.push(w);
    }
    if realised == steps {
        Ok(h)
    } else {
        Ok(DenseMatrix::from_fn(realised, realised, |i, j| h.get(i, j)))
    }
}
