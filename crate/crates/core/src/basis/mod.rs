//! Krylov basis construction.
//!
//! Builds the tall matrix `B` whose columns span a Krylov subspace of a
//! linear operator, together with the product `A * B` that downstream
//! least-squares and Rayleigh-Ritz steps consume.  Because those steps
//! stabilise the basis through a sketch-and-whiten pass, the bases built
//! here do not have to be orthonormal: cheap short recurrences are offered
//! alongside the classical fully orthogonalised one.
//!
//! Single-vector constructions are driven by [`BasisStepper`], which yields
//! one `(b_j, A b_j)` column pair at a time so iterative solvers can grow
//! the basis lazily.  Batch wrappers ([`partial_arnoldi`],
//! [`chebyshev_basis`], [`newton_basis`], [`monomial_basis`]) collect a
//! requested number of columns.  Block constructions for eigenvalue work
//! live in [`block_basis`].  Chebyshev and Newton recurrences need spectral
//! information, supplied either explicitly or by [`estimate_spectral_box`]
//! and [`ritz_values`].

mod block;
mod single;
mod spectral;

pub use block::{block_basis, BlockVariant};
pub use single::BasisStepper;
pub use spectral::{estimate_spectral_box, leja_order, ritz_values};

use crate::kernels::{DenseMatrix, KernelError};
use crate::operators::LinearOperator;
use num_complex::Complex64;
use thiserror::Error;

/// Relative threshold below which a new basis column counts as a breakdown.
pub const BREAKDOWN_TOL: f64 = 1e-14;

/// Errors produced while constructing a Krylov basis.
#[derive(Debug, Error)]
pub enum BasisError {
    /// Operator or starting-vector dimensions are inconsistent.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    /// The starting vector is zero (or numerically zero), so no subspace
    /// can be generated.
    #[error("starting vector has zero norm")]
    ZeroStart,
    /// A requested parameter is out of range.
    #[error("invalid basis parameter: {0}")]
    InvalidParameter(String),
    /// Newton shifts must keep complex-conjugate pairs adjacent so the
    /// recurrence can fuse them into real arithmetic.
    #[error("complex Newton shift at position {0} is not followed by its conjugate")]
    UnpairedComplexShift(usize),
    /// The Chebyshev recurrence amplified the iterate past the floating
    /// point range; the supplied spectral box is too small for the
    /// operator.  Retry with a larger box.
    #[error("chebyshev recurrence overflowed at column {col}; enlarge the spectral box")]
    BoxTooSmall { col: usize },
    /// Spectral estimation could not produce a usable box (operator acts
    /// as a scalar on the probe subspace).
    #[error("spectral box is degenerate: {0}")]
    DegenerateBox(String),
    /// A dense kernel failed.
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

/// Axis-aligned box in the complex plane enclosing (an estimate of) the
/// operator spectrum, used to scale the Chebyshev recurrence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralBox {
    /// Real coordinate of the box centre.
    pub center: f64,
    /// Half-width along the real axis.
    pub half_width: f64,
    /// Half-height along the imaginary axis.
    pub half_height: f64,
}

impl SpectralBox {
    /// Box `[lo, hi]` on the real axis with zero imaginary extent.
    pub fn real_interval(lo: f64, hi: f64) -> Self {
        SpectralBox {
            center: 0.5 * (lo + hi),
            half_width: 0.5 * (hi - lo),
            half_height: 0.0,
        }
    }

    /// Scaling radius of the recurrence: the larger half-extent.
    pub fn rho(&self) -> f64 {
        self.half_width.max(self.half_height)
    }

    fn validate(&self) -> Result<(), BasisError> {
        let finite = self.center.is_finite()
            && self.half_width.is_finite()
            && self.half_height.is_finite();
        if !finite || self.half_width < 0.0 || self.half_height < 0.0 {
            return Err(BasisError::InvalidParameter(format!(
                "spectral box (center {}, half-width {}, half-height {}) is not usable",
                self.center, self.half_width, self.half_height
            )));
        }
        if self.rho() == 0.0 {
            return Err(BasisError::DegenerateBox(
                "box has zero extent in both axes".into(),
            ));
        }
        Ok(())
    }
}

/// Recurrence used to extend the basis by one column.
#[derive(Debug, Clone, PartialEq)]
pub enum BasisMethod {
    /// Orthogonalise each new column against the previous `k` columns.
    Arnoldi { k: usize },
    /// Three-term recurrence for symmetric operators (Arnoldi with `k = 2`).
    Lanczos,
    /// Chebyshev recurrence scaled to a spectral box.
    Chebyshev { spectral_box: SpectralBox },
    /// Shifted power recurrence `b_{j+1} = (A - theta_j) b_j` with
    /// conjugate shift pairs fused into real arithmetic.
    Newton { shifts: Vec<Complex64> },
    /// Plain normalised power iteration.
    Monomial,
    /// Block construction; see [`BlockVariant`].
    Block(BlockVariant),
}

/// How a solver should build its basis.  `Chebyshev` and `Newton` carry
/// optional parameters; `None` asks the solver to run a short spectral
/// estimation pass first.
#[derive(Debug, Clone, PartialEq)]
pub enum BasisSelection {
    Arnoldi { k: usize },
    Lanczos,
    Chebyshev { spectral_box: Option<SpectralBox> },
    Newton { shifts: Option<Vec<Complex64>> },
    Monomial,
}

impl Default for BasisSelection {
    fn default() -> Self {
        BasisSelection::Arnoldi { k: 2 }
    }
}

/// A [`BasisSelection`] with all spectral parameters filled in, ready to
/// drive a [`BasisStepper`].
#[derive(Debug, Clone, PartialEq)]
pub enum ResolvedBasis {
    Arnoldi { k: usize },
    Chebyshev { spectral_box: SpectralBox },
    Newton { shifts: Vec<Complex64> },
    Monomial,
}

impl ResolvedBasis {
    pub(crate) fn method(&self) -> BasisMethod {
        match self {
            ResolvedBasis::Arnoldi { k: 2 } => BasisMethod::Lanczos,
            ResolvedBasis::Arnoldi { k } => BasisMethod::Arnoldi { k: *k },
            ResolvedBasis::Chebyshev { spectral_box } => BasisMethod::Chebyshev {
                spectral_box: *spectral_box,
            },
            ResolvedBasis::Newton { shifts } => BasisMethod::Newton {
                shifts: shifts.clone(),
            },
            ResolvedBasis::Monomial => BasisMethod::Monomial,
        }
    }
}

/// Fill in any missing spectral parameters of `selection`, running a
/// 20-step estimation pass on `op` when required.  `d` is the number of
/// columns the caller intends to build (Newton needs `d - 1` shifts).
pub fn resolve_basis<A: LinearOperator + ?Sized>(
    op: &A,
    selection: &BasisSelection,
    d: usize,
    seed: u64,
) -> Result<ResolvedBasis, BasisError> {
    match selection {
        BasisSelection::Arnoldi { k } => {
            if *k == 0 {
                return Err(BasisError::InvalidParameter(
                    "arnoldi depth k must be at least 1".into(),
                ));
            }
            Ok(ResolvedBasis::Arnoldi { k: *k })
        }
        BasisSelection::Lanczos => Ok(ResolvedBasis::Arnoldi { k: 2 }),
        BasisSelection::Chebyshev { spectral_box } => {
            let b = match spectral_box {
                Some(b) => *b,
                None => estimate_spectral_box(op, spectral::DEFAULT_ESTIMATION_STEPS, seed)?,
            };
            b.validate()?;
            Ok(ResolvedBasis::Chebyshev { spectral_box: b })
        }
        BasisSelection::Newton { shifts } => {
            let shifts = match shifts {
                Some(s) => s.clone(),
                None => {
                    if d < 2 {
                        return Err(BasisError::InvalidParameter(
                            "newton basis needs at least 2 columns".into(),
                        ));
                    }
                    let steps = spectral::DEFAULT_ESTIMATION_STEPS.max(d - 1);
                    let ritz = ritz_values(op, steps, seed)?;
                    let ordered = leja_order(&ritz);
                    take_shifts(&ordered, d - 1)
                }
            };
            validate_shifts(&shifts)?;
            Ok(ResolvedBasis::Newton { shifts })
        }
        BasisSelection::Monomial => Ok(ResolvedBasis::Monomial),
    }
}

/// Take the first `count` shifts from a conjugate-paired list without
/// splitting a pair; if a pair straddles the cut, repeat earlier shifts
/// (cyclically) instead.
fn take_shifts(ordered: &[Complex64], count: usize) -> Vec<Complex64> {
    let mut out: Vec<Complex64> = Vec::with_capacity(count);
    let mut i = 0;
    while out.len() < count && i < ordered.len() {
        let v = ordered[i];
        if v.im != 0.0 {
            if out.len() + 2 > count || i + 1 >= ordered.len() {
                break;
            }
            out.push(v);
            out.push(ordered[i + 1]);
            i += 2;
        } else {
            out.push(v);
            i += 1;
        }
    }
    // Pad by cycling through the real shifts already chosen (or zero if
    // none fit, which degrades to a monomial step).
    let reals: Vec<Complex64> = out.iter().copied().filter(|v| v.im == 0.0).collect();
    let mut j = 0;
    while out.len() < count {
        let v = if reals.is_empty() {
            Complex64::new(0.0, 0.0)
        } else {
            reals[j % reals.len()]
        };
        out.push(v);
        j += 1;
    }
    out
}

pub(crate) fn validate_shifts(shifts: &[Complex64]) -> Result<(), BasisError> {
    let mut i = 0;
    while i < shifts.len() {
        let v = shifts[i];
        if !v.re.is_finite() || !v.im.is_finite() {
            return Err(BasisError::InvalidParameter(format!(
                "newton shift at position {i} is not finite"
            )));
        }
        if v.im != 0.0 {
            let ok = i + 1 < shifts.len()
                && shifts[i + 1].re == v.re
                && shifts[i + 1].im == -v.im;
            if !ok {
                return Err(BasisError::UnpairedComplexShift(i));
            }
            i += 2;
        } else {
            i += 1;
        }
    }
    Ok(())
}

/// A Krylov basis `B` and the matched product `A * B`.
///
/// The invariant `ab.col(j) == A * b.col(j)` holds exactly for every
/// construction in this module: each `A`-application is stored at the
/// moment it is computed rather than reconstituted from the recurrence.
#[derive(Debug, Clone)]
pub struct KrylovBasis {
    /// Basis columns, `n x d_eff`.
    pub b: DenseMatrix,
    /// Operator applied to the basis columns, `n x d_eff`.
    pub ab: DenseMatrix,
    /// Recurrence that produced the columns.
    pub method: BasisMethod,
    /// Number of starting vectors (1 for single-vector constructions).
    pub block_size: usize,
    /// True when the construction stopped early because a new column
    /// vanished (or a block lost rank); `b` holds the columns built before
    /// the breakdown.
    pub breakdown: bool,
}

impl KrylovBasis {
    /// Assemble a basis from parts, checking that `b` and `ab` agree in
    /// shape.
    pub fn from_parts(
        b: DenseMatrix,
        ab: DenseMatrix,
        method: BasisMethod,
        block_size: usize,
        breakdown: bool,
    ) -> Result<Self, BasisError> {
        if b.nrows() != ab.nrows() || b.ncols() != ab.ncols() {
            return Err(BasisError::DimensionMismatch {
                expected: b.nrows() * b.ncols(),
                got: ab.nrows() * ab.ncols(),
            });
        }
        Ok(KrylovBasis {
            b,
            ab,
            method,
            block_size,
            breakdown,
        })
    }

    /// Number of columns actually built.
    pub fn dim(&self) -> usize {
        self.b.ncols()
    }

    /// Length of each basis vector.
    pub fn n(&self) -> usize {
        self.b.nrows()
    }
}

fn collect_columns<A: LinearOperator + ?Sized>(
    op: &A,
    start: &[f64],
    d: usize,
    resolved: ResolvedBasis,
) -> Result<KrylovBasis, BasisError> {
    if d == 0 {
        return Err(BasisError::InvalidParameter(
            "basis must have at least one column".into(),
        ));
    }
    let method = resolved.method();
    let mut stepper = BasisStepper::new(op, start, resolved, d)?;
    let n = start.len();
    let mut b = DenseMatrix::zeros(n, 0);
    let mut ab = DenseMatrix::zeros(n, 0);
    while let Some((col, acol)) = stepper.next_column()? {
        b.push_column(&col)?;
        ab.push_column(&acol)?;
    }
    let breakdown = stepper.breakdown();
    KrylovBasis::from_parts(b, ab, method, 1, breakdown)
}

/// Krylov basis with each new column orthogonalised (twice) against the
/// previous `k` columns and normalised.  `k >= d` gives the fully
/// orthogonalised Arnoldi basis.
pub fn partial_arnoldi<A: LinearOperator + ?Sized>(
    op: &A,
    start: &[f64],
    d: usize,
    k: usize,
) -> Result<KrylovBasis, BasisError> {
    if k == 0 {
        return Err(BasisError::InvalidParameter(
            "arnoldi depth k must be at least 1".into(),
        ));
    }
    collect_columns(op, start, d, ResolvedBasis::Arnoldi { k })
}

/// Three-term recurrence basis (partial Arnoldi with `k = 2`), the natural
/// choice for symmetric operators.
pub fn lanczos<A: LinearOperator + ?Sized>(
    op: &A,
    start: &[f64],
    d: usize,
) -> Result<KrylovBasis, BasisError> {
    collect_columns(op, start, d, ResolvedBasis::Arnoldi { k: 2 })
}

/// Chebyshev-recurrence basis scaled to `spectral_box`.  Columns are
/// normalised individually with the scale factors folded into the
/// recurrence, so the stored columns never overflow.
pub fn chebyshev_basis<A: LinearOperator + ?Sized>(
    op: &A,
    start: &[f64],
    d: usize,
    spectral_box: SpectralBox,
) -> Result<KrylovBasis, BasisError> {
    spectral_box.validate()?;
    collect_columns(op, start, d, ResolvedBasis::Chebyshev { spectral_box })
}

/// Newton-polynomial basis with the given shifts (conjugate pairs must be
/// adjacent).  Produces `shifts.len() + 1` columns.
pub fn newton_basis<A: LinearOperator + ?Sized>(
    op: &A,
    start: &[f64],
    shifts: &[Complex64],
) -> Result<KrylovBasis, BasisError> {
    validate_shifts(shifts)?;
    collect_columns(
        op,
        start,
        shifts.len() + 1,
        ResolvedBasis::Newton {
            shifts: shifts.to_vec(),
        },
    )
}

/// Normalised power-iteration basis.  Ill-conditioned beyond a handful of
/// columns; useful as a stress case and for very small `d`.
pub fn monomial_basis<A: LinearOperator + ?Sized>(
    op: &A,
    start: &[f64],
    d: usize,
) -> Result<KrylovBasis, BasisError> {
    collect_columns(op, start, d, ResolvedBasis::Monomial)
}

/// Build a basis from a [`BasisSelection`], resolving spectral parameters
/// with `seed` when the selection leaves them implicit.
pub fn build_basis<A: LinearOperator + ?Sized>(
    op: &A,
    start: &[f64],
    d: usize,
    selection: &BasisSelection,
    seed: u64,
) -> Result<KrylovBasis, BasisError> {
    let resolved = resolve_basis(op, selection, d, seed)?;
    collect_columns(op, start, d, resolved)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{laplacian_2d, DenseOperator};
    use crate::testing;

    fn tridiag_op(n: usize, sub: f64, diag: f64, sup: f64) -> DenseOperator {
        let m = DenseMatrix::from_fn(n, n, |i, j| {
            if i == j {
                diag
            } else if i == j + 1 {
                sub
            } else if j == i + 1 {
                sup
            } else {
                0.0
            }
        });
        DenseOperator(m)
    }

    fn orthonormal_span(basis: &DenseMatrix) -> DenseMatrix {
        let (q, _r) = testing::classical_gram_schmidt_qr(basis);
        q
    }

    #[test]
    fn short_recurrences_span_the_full_arnoldi_space() {
        let op = tridiag_op(400, -1.0, 2.0, -0.5);
        let r = testing::seeded_vector(400, 42);
        let d = 20;
        let full = partial_arnoldi(&op, &r, d, d).unwrap();
        let reference = orthonormal_span(&full.b);

        let spectral_box = estimate_spectral_box(&op, 20, 7).unwrap();
        let cheb = chebyshev_basis(&op, &r, d, spectral_box).unwrap();
        let ritz = ritz_values(&op, d + 5, 7).unwrap();
        let shifts = take_shifts(&leja_order(&ritz), d - 1);
        let newt = newton_basis(&op, &r, &shifts).unwrap();
        let arn3 = partial_arnoldi(&op, &r, d, 3).unwrap();

        for (name, basis) in [("chebyshev", &cheb), ("newton", &newt), ("arnoldi-3", &arn3)] {
            assert_eq!(basis.dim(), d, "{name} stopped early");
            let q = orthonormal_span(&basis.b);
            let angle = testing::max_principal_angle_sin(&reference, &q);
            assert!(angle < 1e-8, "{name} span deviates: sin(angle) = {angle:e}");
        }
    }

    #[test]
    fn stored_products_match_fresh_operator_applications() {
        let op = tridiag_op(150, -1.0, 2.4, -0.7);
        let r = testing::seeded_vector(150, 3);
        let spectral_box = SpectralBox::real_interval(0.5, 4.5);
        let bases = [
            partial_arnoldi(&op, &r, 12, 4).unwrap(),
            chebyshev_basis(&op, &r, 12, spectral_box).unwrap(),
            monomial_basis(&op, &r, 8).unwrap(),
        ];
        for basis in &bases {
            for j in 0..basis.dim() {
                let fresh = op.apply_vec(basis.b.col(j));
                let stored = basis.ab.col(j);
                let diff: f64 = fresh
                    .iter()
                    .zip(stored)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                assert!(diff <= 1e-13 * crate::kernels::norm2(&fresh).max(1.0));
            }
        }
    }

    #[test]
    fn lanczos_matches_full_orthogonalisation_on_symmetric_operators() {
        let op = laplacian_2d(16);
        let n = op.nrows();
        let r = testing::seeded_vector(n, 11);
        let d = 25;
        let three_term = lanczos(&op, &r, d).unwrap();
        let full = partial_arnoldi(&op, &r, d, d).unwrap();
        assert_eq!(three_term.dim(), d);
        assert_eq!(three_term.method, BasisMethod::Lanczos);
        let angle = testing::max_principal_angle_sin(
            &orthonormal_span(&full.b),
            &orthonormal_span(&three_term.b),
        );
        assert!(angle < 1e-10, "lanczos span deviates: {angle:e}");
        // The three-term basis should itself stay near-orthonormal here.
        let gram = three_term.b.transpose().matmul(&three_term.b).unwrap();
        for i in 0..d {
            for j in 0..d {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((gram.get(i, j) - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn chebyshev_conditioning_beats_monomial() {
        let op = laplacian_2d(32);
        let n = op.nrows();
        let r = testing::seeded_vector(n, 5);
        let d = 60;
        let spectral_box = SpectralBox::real_interval(0.0, 8.0);
        let cheb = chebyshev_basis(&op, &r, d, spectral_box).unwrap();
        let mono = monomial_basis(&op, &r, d).unwrap();
        let kappa_cheb = crate::kernels::cond_estimate(&cheb.b);
        let kappa_mono = crate::kernels::cond_estimate(&mono.b);
        assert!(
            kappa_cheb < 1e8,
            "chebyshev basis should stay usable: {kappa_cheb:e}"
        );
        assert!(
            kappa_mono > 1e12,
            "monomial basis should be numerically degenerate: {kappa_mono:e}"
        );
    }

    #[test]
    fn newton_shifts_tame_the_monomial_growth() {
        let op = laplacian_2d(16);
        let n = op.nrows();
        let r = testing::seeded_vector(n, 9);
        let d = 40;
        let ritz = ritz_values(&op, d - 1, 21).unwrap();
        let shifts = take_shifts(&leja_order(&ritz), d - 1);
        let newt = newton_basis(&op, &r, &shifts).unwrap();
        let mono = monomial_basis(&op, &r, d).unwrap();
        let kappa_newton = crate::kernels::cond_estimate(&newt.b);
        let kappa_mono = crate::kernels::cond_estimate(&mono.b);
        assert!(
            kappa_newton < kappa_mono / 1e4,
            "newton {kappa_newton:e} vs monomial {kappa_mono:e}"
        );
    }

    #[test]
    fn newton_with_exact_eigenvalue_shifts_breaks_down() {
        // Shifting by every eigenvalue annihilates the start vector: the
        // column after the last shift vanishes.
        let diag = [1.0, 2.0, 3.0, 4.0, 5.0];
        let m = DenseMatrix::from_fn(5, 5, |i, j| if i == j { diag[i] } else { 0.0 });
        let op = DenseOperator(m);
        let r = vec![1.0, 1.0, 1.0, 1.0, 1.0];
        let shifts: Vec<Complex64> = diag.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        let basis = newton_basis(&op, &r, &shifts).unwrap();
        assert!(basis.breakdown);
        assert_eq!(basis.dim(), 5);
    }

    #[test]
    fn conjugate_shift_pairs_stay_in_real_arithmetic() {
        // Rotation-like operator with complex spectrum.
        let m = DenseMatrix::from_row_major(
            4,
            4,
            &[
                0.0, -1.0, 0.0, 0.0, //
                1.0, 0.0, 0.0, 0.0, //
                0.0, 0.0, 0.5, -2.0, //
                0.0, 0.0, 2.0, 0.5,
            ],
        )
        .unwrap();
        let op = DenseOperator(m);
        let r = vec![1.0, 0.3, -0.2, 0.9];
        let shifts = vec![Complex64::new(0.5, 2.0), Complex64::new(0.5, -2.0)];
        let basis = newton_basis(&op, &r, &shifts).unwrap();
        assert_eq!(basis.dim(), 3);
        assert!(basis.b.is_finite());
        // Reordering that splits the pair is rejected.
        let bad = vec![Complex64::new(0.5, 2.0), Complex64::new(0.0, 0.0)];
        assert!(matches!(
            newton_basis(&op, &r, &bad),
            Err(BasisError::UnpairedComplexShift(0))
        ));
    }

    #[test]
    fn tiny_spectral_box_reports_overflow() {
        let op = laplacian_2d(8);
        let n = op.nrows();
        let r = testing::seeded_vector(n, 2);
        let tiny = SpectralBox::real_interval(-1e-300, 1e-300);
        let err = chebyshev_basis(&op, &r, 10, tiny).unwrap_err();
        assert!(matches!(err, BasisError::BoxTooSmall { .. }), "{err}");
    }

    #[test]
    fn zero_start_vector_is_rejected() {
        let op = laplacian_2d(4);
        let r = vec![0.0; op.nrows()];
        assert!(matches!(
            monomial_basis(&op, &r, 3),
            Err(BasisError::ZeroStart)
        ));
    }

    #[test]
    fn arnoldi_breakdown_truncates_and_flags() {
        // Start vector inside a 3-dimensional invariant subspace.
        let m = DenseMatrix::from_fn(6, 6, |i, j| {
            if i == j {
                (i + 1) as f64
            } else if i < 3 && j < 3 && i == j + 1 {
                1.0
            } else {
                0.0
            }
        });
        let op = DenseOperator(m);
        let mut r = vec![0.0; 6];
        r[0] = 1.0;
        r[1] = 0.5;
        r[2] = -0.25;
        let basis = partial_arnoldi(&op, &r, 6, 6).unwrap();
        assert!(basis.breakdown);
        assert_eq!(basis.dim(), 3);
    }
}
