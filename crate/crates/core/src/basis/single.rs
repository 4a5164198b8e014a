//! Streaming single-vector basis construction.
//!
//! [`BasisStepper`] grows a Krylov basis one column at a time, returning
//! each new column together with the operator applied to it.  All
//! recurrences normalise every emitted column; the Chebyshev and Newton
//! recurrences carry the discarded scale factors as running ratios so the
//! recurrence coefficients stay consistent without ever storing a vector
//! of extreme norm.

use std::collections::VecDeque;

use num_complex::Complex64;

use super::{BasisError, ResolvedBasis, SpectralBox, BREAKDOWN_TOL};
use crate::kernels::{axpy, dot, norm2};
use crate::operators::LinearOperator;

enum StepperState {
    Arnoldi {
        k: usize,
        // Most recent min(k, j) columns, oldest first.
        recent: VecDeque<Vec<f64>>,
    },
    Chebyshev {
        spectral_box: SpectralBox,
        // Column before the current one (b_{j-1}), present from the third
        // column onwards.
        prev: Option<Vec<f64>>,
        // Scale ratio gamma_{j-1} / gamma_j of the un-normalised
        // recurrence iterates.
        scale_ratio: f64,
        // log10 of the cumulative scale factor gamma_j; tracks the norm
        // the un-normalised iterate would have reached.
        log10_scale: f64,
    },
    Newton {
        shifts: Vec<Complex64>,
        next_shift: usize,
        // Set while between the two steps of a conjugate pair:
        // (im^2 * gamma_j / gamma_{j+1}, saved column b_j).
        pending_pair: Option<(f64, Vec<f64>)>,
    },
    Monomial,
}

/// Incremental builder for single-vector Krylov bases.
///
/// `next_column` returns `Some((b_j, A b_j))` until either `d_cap` columns
/// have been produced or the recurrence breaks down (new column
/// numerically zero), after which it returns `None` and [`breakdown`]
/// reports which of the two happened.
///
/// [`breakdown`]: BasisStepper::breakdown
pub struct BasisStepper<'a, A: LinearOperator + ?Sized> {
    op: &'a A,
    state: StepperState,
    d_cap: usize,
    produced: usize,
    breakdown: bool,
    // Current column and its image under the operator; the pair emitted by
    // the most recent `next_column` call.
    current: Option<(Vec<f64>, Vec<f64>)>,
}

impl<'a, A: LinearOperator + ?Sized> BasisStepper<'a, A> {
    /// Start a basis from `start` (normalised internally).  Fails on a
    /// zero start vector or mismatched dimensions.
    pub fn new(
        op: &'a A,
        start: &[f64],
        resolved: ResolvedBasis,
        d_cap: usize,
    ) -> Result<Self, BasisError> {
        if op.nrows() != op.ncols() {
            return Err(BasisError::DimensionMismatch {
                expected: op.nrows(),
                got: op.ncols(),
            });
        }
        if start.len() != op.ncols() {
            return Err(BasisError::DimensionMismatch {
                expected: op.ncols(),
                got: start.len(),
            });
        }
        let nrm = norm2(start);
        if !(nrm > 0.0) || !nrm.is_finite() {
            return Err(BasisError::ZeroStart);
        }
        let d_cap = match &resolved {
            ResolvedBasis::Newton { shifts } => d_cap.min(shifts.len() + 1),
            _ => d_cap,
        };
        let state = match resolved {
            ResolvedBasis::Arnoldi { k } => StepperState::Arnoldi {
                k,
                recent: VecDeque::new(),
            },
            ResolvedBasis::Chebyshev { spectral_box } => {
                spectral_box.validate()?;
                StepperState::Chebyshev {
                    spectral_box,
                    prev: None,
                    scale_ratio: 1.0,
                    log10_scale: 0.0,
                }
            }
            ResolvedBasis::Newton { shifts } => {
                super::validate_shifts(&shifts)?;
                StepperState::Newton {
                    shifts,
                    next_shift: 0,
                    pending_pair: None,
                }
            }
            ResolvedBasis::Monomial => StepperState::Monomial,
        };
        let first: Vec<f64> = start.iter().map(|v| v / nrm).collect();
        let a_first = op.apply_vec(&first);
        Ok(BasisStepper {
            op,
            state,
            d_cap,
            produced: 0,
            breakdown: false,
            current: Some((first, a_first)),
        })
    }

    /// Number of columns emitted so far.
    pub fn columns_produced(&self) -> usize {
        self.produced
    }

    /// True once the recurrence has produced a numerically zero column
    /// (the exhausted stepper keeps returning `None`).
    pub fn breakdown(&self) -> bool {
        self.breakdown
    }

    /// Emit the next `(b_j, A b_j)` pair.
    pub fn next_column(&mut self) -> Result<Option<(Vec<f64>, Vec<f64>)>, BasisError> {
        if self.produced >= self.d_cap || self.breakdown {
            return Ok(None);
        }
        let (col, acol) = match self.current.take() {
            Some(pair) => pair,
            None => return Ok(None),
        };
        self.produced += 1;
        if self.produced < self.d_cap {
            self.prepare_next(&col, &acol)?;
        }
        Ok(Some((col, acol)))
    }

    /// Compute the successor of `(col, acol)` and stash it in `current`,
    /// or record a breakdown.
    fn prepare_next(&mut self, col: &[f64], acol: &[f64]) -> Result<(), BasisError> {
        let candidate = match &mut self.state {
            StepperState::Arnoldi { k, recent } => {
                recent.push_back(col.to_vec());
                while recent.len() > *k {
                    recent.pop_front();
                }
                let mut w = acol.to_vec();
                // Two classical Gram-Schmidt passes against the window.
                for _ in 0..2 {
                    for q in recent.iter() {
                        let c = dot(q, &w);
                        axpy(-c, q, &mut w);
                    }
                }
                let scale = norm2(acol);
                finish_column(w, scale)
            }
            StepperState::Chebyshev {
                spectral_box,
                prev,
                scale_ratio,
                log10_scale,
            } => {
                let rho = spectral_box.rho();
                let c = spectral_box.center;
                let dx = spectral_box.half_width;
                let dy = spectral_box.half_height;
                let mut t: Vec<f64> = acol.iter().zip(col).map(|(a, b)| a - c * b).collect();
                let mut reference = norm2(&t);
                if let Some(prev_col) = prev.as_ref() {
                    // Middle of the recurrence: subtract the two-back term.
                    let beta = (dx * dx - dy * dy) / (4.0 * rho);
                    let coeff = beta * *scale_ratio;
                    axpy(-coeff, prev_col, &mut t);
                    reference = (reference + coeff.abs()) / rho;
                    for v in t.iter_mut() {
                        *v /= rho;
                    }
                } else {
                    // Second column uses the halved leading coefficient.
                    reference /= 2.0 * rho;
                    for v in t.iter_mut() {
                        *v /= 2.0 * rho;
                    }
                }
                let nrm = norm2(&t);
                if !nrm.is_finite() {
                    return Err(BasisError::BoxTooSmall {
                        col: self.produced + 1,
                    });
                }
                *log10_scale += if nrm > 0.0 { nrm.log10() } else { 0.0 };
                if *log10_scale > 300.0 {
                    // The un-normalised iterate would have left the
                    // floating-point range; the box badly under-covers
                    // the spectrum.
                    return Err(BasisError::BoxTooSmall {
                        col: self.produced + 1,
                    });
                }
                if *log10_scale < -300.0 {
                    return Err(BasisError::DegenerateBox(
                        "recurrence iterates vanished; the box far exceeds the spectrum"
                            .into(),
                    ));
                }
                *prev = Some(col.to_vec());
                match finish_column(t, reference) {
                    Some((b_next, nrm)) => {
                        *scale_ratio = 1.0 / nrm;
                        Some((b_next, nrm))
                    }
                    None => None,
                }
            }
            StepperState::Newton {
                shifts,
                next_shift,
                pending_pair,
            } => {
                if let Some((coeff, b_old)) = pending_pair.take() {
                    // Second half of a conjugate pair: include the fused
                    // +im^2 term from two columns back.
                    let re = shifts[*next_shift - 1].re;
                    let mut t: Vec<f64> =
                        acol.iter().zip(col).map(|(a, b)| a - re * b).collect();
                    axpy(coeff, &b_old, &mut t);
                    *next_shift += 1;
                    finish_column(t, norm2(acol) + re.abs() + coeff.abs())
                } else {
                    let theta = shifts[*next_shift];
                    let t: Vec<f64> = acol
                        .iter()
                        .zip(col)
                        .map(|(a, b)| a - theta.re * b)
                        .collect();
                    *next_shift += 1;
                    let result = finish_column(t, norm2(acol) + theta.re.abs());
                    if theta.im != 0.0 {
                        if let Some((_, nrm)) = &result {
                            *pending_pair = Some((theta.im * theta.im / nrm, col.to_vec()));
                        }
                    }
                    result
                }
            }
            StepperState::Monomial => finish_column(acol.to_vec(), norm2(acol)),
        };
        match candidate {
            Some((b_next, _)) => {
                let ab_next = self.op.apply_vec(&b_next);
                self.current = Some((b_next, ab_next));
                Ok(())
            }
            None => {
                self.breakdown = true;
                Ok(())
            }
        }
    }
}

/// Normalise a candidate column, treating it as a breakdown when its norm
/// is negligible relative to `reference` (the magnitude of the vectors it
/// was formed from).  Returns the normalised column and its pre-normalised
/// norm.
fn finish_column(mut t: Vec<f64>, reference: f64) -> Option<(Vec<f64>, f64)> {
    let nrm = norm2(&t);
    if !nrm.is_finite() || nrm <= BREAKDOWN_TOL * reference.max(f64::MIN_POSITIVE) {
        return None;
    }
    for v in t.iter_mut() {
        *v /= nrm;
    }
    Some((t, nrm))
}
