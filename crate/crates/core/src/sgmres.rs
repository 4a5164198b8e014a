//! Sketched GMRES for square linear systems.
//!
//! Classical GMRES spends most of its time keeping the Krylov basis
//! orthonormal.  The solvers here instead grow a cheap non-orthogonal
//! basis `B` (see [`crate::basis`]) and solve the small least-squares
//! problem through a randomized subspace embedding `S`: minimise
//! `|| S (A B y - r0) ||` via a QR factorisation of the sketched columns.
//! The embedding distorts norms by a bounded factor, so the computed
//! residual tracks the true one and the attainable residual is within a
//! modest constant of the classical method on the same subspace.
//!
//! Two drivers are provided.  [`sgmres_solve`] builds the whole basis up
//! front and solves once.  [`sgmres_iterative`] grows the basis column by
//! column with an incremental QR of the sketched columns, monitors the
//! conditioning of the triangular factor, and can react to
//! ill-conditioning by restarting or by whitening the stored basis
//! ([`RestartPolicy`]).  [`gmres_baseline`] is a conventional GMRES used
//! for comparisons.

use crate::basis::{resolve_basis, BasisError, BasisSelection, BasisStepper, KrylovBasis};
use crate::kernels::{
    axpy, cond_estimate, dot, householder_qr, norm2, solve_upper_transposed,
    solve_upper_triangular, DenseMatrix, KernelError, SketchedQr,
};
use crate::operators::LinearOperator;
use crate::sketch::{whiten, Embedding, EmbeddingKind, SketchError};
use thiserror::Error;

/// Errors produced by the sketched and baseline solvers.
#[derive(Debug, Error)]
pub enum SgmresError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Basis(#[from] BasisError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Sketch(#[from] SketchError),
}

/// Reaction to an ill-conditioned sketched triangular factor during the
/// iterative solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RestartPolicy {
    /// Keep going; emit a warning and mark the result unreliable.
    #[default]
    None,
    /// Commit the current correction, recompute the residual and restart
    /// the basis from it.  Stops after two consecutive restarts that fail
    /// to shrink the residual by at least 1%.
    Adaptive,
    /// Replace the stored basis by its whitened version `B T^-1` (making
    /// the triangular factor the identity) and continue growing.
    Whiten,
}

/// Configuration for the sketched solvers.
#[derive(Debug, Clone)]
pub struct SgmresConfig {
    /// Maximum basis dimension (per restart cycle for the iterative
    /// solver).
    pub d_max: usize,
    /// Embedding rows; `None` picks `2 * d_max + 1`, clamped to `n`.
    pub sketch_dim: Option<usize>,
    /// Basis recurrence.
    pub basis: BasisSelection,
    /// Embedding family.
    pub embedding: EmbeddingKind,
    /// Seed for the embedding and any spectral estimation.
    pub seed: u64,
    /// Reaction to conditioning trouble (iterative solver only).
    pub restart: RestartPolicy,
    /// Conditioning threshold on the sketched triangular factor.
    pub cond_tol: f64,
    /// Relative residual target, measured in the sketched norm against
    /// the initial sketched residual.
    pub target: f64,
    /// Polish the final solution with LSQR on the whitened basis.
    pub refine: bool,
    /// Record the true residual every this many iterations (0 = only at
    /// the end).
    pub true_residual_every: usize,
    /// Safety cap on adaptive restarts.
    pub max_restarts: usize,
}

impl Default for SgmresConfig {
    fn default() -> Self {
        SgmresConfig {
            d_max: 50,
            sketch_dim: None,
            basis: BasisSelection::default(),
            embedding: EmbeddingKind::Trig,
            seed: 0,
            restart: RestartPolicy::None,
            cond_tol: 1e14,
            target: 1e-8,
            refine: false,
            true_residual_every: 25,
            max_restarts: 16,
        }
    }
}

/// Per-iteration progress record.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    /// Global iteration count (across restarts), starting at 1.
    pub iter: usize,
    /// Sketched residual estimate (absolute).
    pub r_est: f64,
    /// True residual, when it was computed at this iteration.
    pub true_residual: Option<f64>,
    /// Condition estimate of the sketched triangular factor, when it was
    /// checked at this iteration.
    pub cond: Option<f64>,
}

/// Solution and diagnostics of a sketched solve.
#[derive(Debug, Clone)]
pub struct SgmresResult {
    /// Computed solution.
    pub x: Vec<f64>,
    /// Final sketched residual estimate (absolute).
    pub r_est: f64,
    /// Final true residual `|| rhs - A x ||`.
    pub true_residual: f64,
    /// Whether the sketched residual reached the configured target.
    pub converged: bool,
    /// Per-iteration history (a single record for the batch solver).
    pub history: Vec<IterationRecord>,
    /// Number of adaptive restarts performed.
    pub restarts: usize,
    /// Basis columns used in the final correction.
    pub basis_dim: usize,
    /// Embedding rows actually used.
    pub sketch_dim: usize,
    /// Set when conditioning exceeded `cond_tol` and was left untreated.
    pub unreliable: bool,
    /// Whether the basis recurrence stopped early.
    pub breakdown: bool,
    /// Human-readable notes about conditioning, restarts and truncation.
    pub warnings: Vec<String>,
}

/// Solve the sketched least-squares problem `min || U T y - g ||` given
/// the incremental QR of the sketched basis columns.  Returns the
/// coefficient vector and the residual norm in the sketched space.
pub fn sketched_lsq(qr: &SketchedQr, g: &[f64]) -> Result<(Vec<f64>, f64), KernelError> {
    if g.len() != qr.nrows() {
        return Err(KernelError::DimensionMismatch {
            expected: qr.nrows(),
            got: g.len(),
        });
    }
    let d = qr.ncols();
    let u = qr.u();
    let mut utg = Vec::with_capacity(d);
    for j in 0..d {
        utg.push(dot(u.col(j), g));
    }
    let y = solve_upper_triangular(&qr.t_matrix(), &utg)?;
    let r_est = coefficient_residual(u, &utg, g);
    Ok((y, r_est))
}

/// `|| g - U c ||` for an orthonormal-column `U`.
fn coefficient_residual(u: &DenseMatrix, c: &[f64], g: &[f64]) -> f64 {
    let mut res = g.to_vec();
    for (j, &cj) in c.iter().enumerate() {
        axpy(-cj, u.col(j), &mut res);
    }
    norm2(&res)
}

/// Largest leading dimension `k <= limit` whose triangular block is
/// nonsingular, so a rank-deficient tail can be dropped instead of
/// aborting the solve.
fn solvable_leading_block(t: &DenseMatrix, limit: usize) -> usize {
    let mut k = 0;
    while k < limit {
        if t.get(k, k) == 0.0 || !t.get(k, k).is_finite() {
            break;
        }
        k += 1;
    }
    k
}

fn leading_square(t: &DenseMatrix, k: usize) -> DenseMatrix {
    DenseMatrix::from_fn(k, k, |i, j| t.get(i, j))
}

fn check_square_system<A: LinearOperator + ?Sized>(
    op: &A,
    rhs: &[f64],
    x0: Option<&[f64]>,
) -> Result<usize, SgmresError> {
    if op.nrows() != op.ncols() {
        return Err(SgmresError::DimensionMismatch {
            expected: op.nrows(),
            got: op.ncols(),
        });
    }
    let n = op.nrows();
    if rhs.len() != n {
        return Err(SgmresError::DimensionMismatch {
            expected: n,
            got: rhs.len(),
        });
    }
    if let Some(x0) = x0 {
        if x0.len() != n {
            return Err(SgmresError::DimensionMismatch {
                expected: n,
                got: x0.len(),
            });
        }
    }
    Ok(n)
}

fn initial_state<A: LinearOperator + ?Sized>(
    op: &A,
    rhs: &[f64],
    x0: Option<&[f64]>,
) -> (Vec<f64>, Vec<f64>) {
    match x0 {
        Some(x0) => {
            let ax = op.apply_vec(x0);
            let r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
            (x0.to_vec(), r)
        }
        None => (vec![0.0; rhs.len()], rhs.to_vec()),
    }
}

fn true_residual_norm<A: LinearOperator + ?Sized>(op: &A, rhs: &[f64], x: &[f64]) -> f64 {
    let ax = op.apply_vec(x);
    let r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
    norm2(&r)
}

fn sketch_rows(config: &SgmresConfig, n: usize) -> usize {
    config
        .sketch_dim
        .unwrap_or(2 * config.d_max + 1)
        .min(n)
        .max(1)
}

fn trivial_result(x: Vec<f64>, s: usize, warnings: Vec<String>) -> SgmresResult {
    SgmresResult {
        x,
        r_est: 0.0,
        true_residual: 0.0,
        converged: true,
        history: Vec::new(),
        restarts: 0,
        basis_dim: 0,
        sketch_dim: s,
        unreliable: false,
        breakdown: false,
        warnings,
    }
}

/// Solve `A x = rhs` by building the whole basis up front and solving the
/// sketched least-squares problem once.
pub fn sgmres_solve<A: LinearOperator + ?Sized>(
    op: &A,
    rhs: &[f64],
    x0: Option<&[f64]>,
    config: &SgmresConfig,
) -> Result<SgmresResult, SgmresError> {
    let n = check_square_system(op, rhs, x0)?;
    let (x_base, r0) = initial_state(op, rhs, x0);
    let s = sketch_rows(config, n);
    let mut warnings = Vec::new();

    if norm2(&r0) == 0.0 {
        return Ok(trivial_result(x_base, s, warnings));
    }

    let mut basis = crate::basis::build_basis(op, &r0, config.d_max, &config.basis, config.seed)?;
    if basis.dim() > s {
        warnings.push(format!(
            "basis truncated from {} to {} columns to fit the embedding",
            basis.dim(),
            s
        ));
        basis = KrylovBasis::from_parts(
            basis.b.leading_columns(s),
            basis.ab.leading_columns(s),
            basis.method.clone(),
            basis.block_size,
            basis.breakdown,
        )?;
    }
    let breakdown = basis.breakdown;
    if breakdown {
        warnings.push(format!(
            "basis recurrence stopped early at {} columns",
            basis.dim()
        ));
    }

    let embedding = Embedding::new(config.embedding, n, s, config.seed)?;
    let sketched = embedding.apply_mat(&basis.ab)?;
    let qr = householder_qr(&sketched)?;
    let g = embedding.apply_vec(&r0)?;
    let g_norm = norm2(&g);

    let mut utg = Vec::with_capacity(basis.dim());
    for j in 0..basis.dim() {
        utg.push(dot(qr.u.col(j), &g));
    }
    let k = solvable_leading_block(&qr.t, basis.dim());
    if k < basis.dim() {
        warnings.push(format!(
            "sketched basis is rank deficient; using the leading {k} columns"
        ));
    }
    let tk = leading_square(&qr.t, k);
    let y = solve_upper_triangular(&tk, &utg[..k])?;
    let r_est = coefficient_residual(&qr.u, &utg[..k], &g);

    let kappa = cond_estimate(&tk);
    let mut unreliable = false;
    if kappa > config.cond_tol {
        warnings.push(format!(
            "sketched factor condition estimate {kappa:.3e} exceeds {:.1e}; result may be inaccurate",
            config.cond_tol
        ));
        unreliable = true;
    }

    let mut x = x_base.clone();
    let bk = basis.b.leading_columns(k);
    let dx = bk.matvec(&y)?;
    for (xi, di) in x.iter_mut().zip(&dx) {
        *xi += di;
    }

    let mut true_res = true_residual_norm(op, rhs, &x);
    let mut final_r_est = r_est;
    if config.refine && k > 0 {
        let abk = basis.ab.leading_columns(k);
        match lsqr_refine(op, rhs, &x_base, &bk, &abk, &tk, &r0) {
            Ok((x_ref, res_ref)) => {
                if res_ref < true_res {
                    x = x_ref;
                    true_res = res_ref;
                    let ax = op.apply_vec(&x);
                    let rx: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
                    final_r_est = norm2(&embedding.apply_vec(&rx)?);
                }
            }
            Err(e) => warnings.push(format!("refinement skipped: {e}")),
        }
    }

    let converged = final_r_est <= config.target * g_norm;
    let history = vec![IterationRecord {
        iter: k,
        r_est: final_r_est,
        true_residual: Some(true_res),
        cond: Some(kappa),
    }];
    Ok(SgmresResult {
        x,
        r_est: final_r_est,
        true_residual: true_res,
        converged,
        history,
        restarts: 0,
        basis_dim: k,
        sketch_dim: s,
        unreliable,
        breakdown,
        warnings,
    })
}

/// How often the iterative solver re-estimates the conditioning of the
/// sketched triangular factor.
const COND_CHECK_STRIDE: usize = 32;

#[derive(PartialEq, Clone, Copy)]
enum CycleEnd {
    Converged,
    Exhausted,
    RestartRequested,
}

/// Solve `A x = rhs`, growing the basis one column at a time with an
/// incremental QR of the sketched columns.  Stops when the sketched
/// residual estimate drops below `target` relative to the initial
/// sketched residual, the basis is exhausted, or the restart policy ends
/// the run.
pub fn sgmres_iterative<A: LinearOperator + ?Sized>(
    op: &A,
    rhs: &[f64],
    x0: Option<&[f64]>,
    config: &SgmresConfig,
) -> Result<SgmresResult, SgmresError> {
    let n = check_square_system(op, rhs, x0)?;
    let (mut x, mut r) = initial_state(op, rhs, x0);
    let s = sketch_rows(config, n);
    let d_max = config.d_max.max(1);
    let mut warnings = Vec::new();

    if norm2(&r) == 0.0 {
        return Ok(trivial_result(x, s, warnings));
    }

    let embedding = Embedding::new(config.embedding, n, s, config.seed)?;
    let resolved = resolve_basis(op, &config.basis, d_max, config.seed)?;
    let target_abs = {
        let g0 = embedding.apply_vec(&r)?;
        config.target * norm2(&g0)
    };

    let mut history: Vec<IterationRecord> = Vec::new();
    let mut unreliable = false;
    let mut breakdown = false;
    let mut restarts = 0usize;
    let mut global_iter = 0usize;
    let mut stagnant_restarts = 0usize;
    let mut warned_cond = false;

    let result = 'cycles: loop {
        let cycle_start_res = norm2(&r);
        let mut stepper = BasisStepper::new(op, &r, resolved.clone(), d_max)?;
        let mut b_cols = DenseMatrix::zeros(n, 0);
        let mut ab_cols = DenseMatrix::zeros(n, 0);
        let mut qr = SketchedQr::new(s);
        let g = embedding.apply_vec(&r)?;
        let mut utg: Vec<f64> = Vec::new();
        let mut active_cols = 0usize;

        let end = loop {
            let (bj, abj) = match stepper.next_column()? {
                Some(pair) => pair,
                None => {
                    if stepper.breakdown() {
                        breakdown = true;
                        warnings.push(format!(
                            "basis recurrence stopped early at {} columns",
                            b_cols.ncols()
                        ));
                    }
                    break CycleEnd::Exhausted;
                }
            };
            let sab = embedding.apply_vec(&abj)?;
            b_cols.push_column(&bj)?;
            ab_cols.push_column(&abj)?;
            let dependent = qr.append_column(&sab)?;
            if dependent {
                warnings.push(format!(
                    "sketched basis column {} is numerically dependent; basis growth stopped",
                    b_cols.ncols()
                ));
                breakdown = true;
                break CycleEnd::Exhausted;
            }
            active_cols = qr.ncols();
            global_iter += 1;
            utg.push(dot(qr.u().col(active_cols - 1), &g));
            let r_est = coefficient_residual(qr.u(), &utg, &g);

            let mut fresh_cond = None;
            if active_cols % COND_CHECK_STRIDE == 0 {
                let kappa = cond_estimate(&qr.t_matrix());
                fresh_cond = Some(kappa);
            }
            let mut true_res_here = None;
            if config.true_residual_every > 0 && global_iter % config.true_residual_every == 0 {
                if let Ok(candidate) = candidate_solution(&x, &b_cols, &qr, &utg, active_cols) {
                    true_res_here = Some(true_residual_norm(op, rhs, &candidate));
                }
            }
            history.push(IterationRecord {
                iter: global_iter,
                r_est,
                true_residual: true_res_here,
                cond: fresh_cond,
            });

            // A non-finite target disables early stopping so the run
            // exhausts the basis exactly like the batch solver.
            if config.target.is_finite() && r_est <= target_abs {
                break CycleEnd::Converged;
            }

            if let Some(kappa) = fresh_cond {
                if kappa > config.cond_tol {
                    match config.restart {
                        RestartPolicy::None => {
                            if !warned_cond {
                                warnings.push(format!(
                                    "sketched factor condition estimate {kappa:.3e} exceeds {:.1e}; result may be inaccurate",
                                    config.cond_tol
                                ));
                                warned_cond = true;
                            }
                            unreliable = true;
                        }
                        RestartPolicy::Adaptive => {
                            break CycleEnd::RestartRequested;
                        }
                        RestartPolicy::Whiten => {
                            let t = qr.t_matrix();
                            match (whiten(&b_cols, &t), whiten(&ab_cols, &t)) {
                                (Ok(bw), Ok(abw)) => {
                                    b_cols = bw;
                                    ab_cols = abw;
                                    qr.reset_t_to_identity();
                                    warnings.push(format!(
                                        "whitened the stored basis at column {active_cols} (condition estimate {kappa:.3e})"
                                    ));
                                }
                                _ => {
                                    warnings.push(format!(
                                        "whitening failed at column {active_cols}; stopping basis growth"
                                    ));
                                    break CycleEnd::Exhausted;
                                }
                            }
                        }
                    }
                }
            }
        };

        // Conditioning treatment at the end of the cycle: the factor is
        // checked once more before the correction is committed.  (A check
        // already happened this column when the count is on the stride.)
        if active_cols > 0 && active_cols % COND_CHECK_STRIDE != 0 {
            let kappa = cond_estimate(&qr.t_matrix());
            if kappa > config.cond_tol {
                match config.restart {
                    RestartPolicy::Whiten => {
                        let t = qr.t_matrix();
                        if let (Ok(bw), Ok(abw)) = (whiten(&b_cols, &t), whiten(&ab_cols, &t)) {
                            b_cols = bw;
                            ab_cols = abw;
                            qr.reset_t_to_identity();
                            warnings.push(format!(
                                "whitened the stored basis at column {active_cols} (condition estimate {kappa:.3e})"
                            ));
                        }
                    }
                    // An adaptive follow-up restart below recovers the
                    // accuracy lost to the ill-conditioned factor.
                    RestartPolicy::Adaptive => {}
                    RestartPolicy::None => {
                        if !warned_cond {
                            warnings.push(format!(
                                "sketched factor condition estimate {kappa:.3e} exceeds {:.1e}; result may be inaccurate",
                                config.cond_tol
                            ));
                            warned_cond = true;
                        }
                        unreliable = true;
                    }
                }
            }
        }

        // Commit the correction from this cycle.
        let t = qr.t_matrix();
        let k = solvable_leading_block(&t, active_cols);
        if k < active_cols {
            warnings.push(format!(
                "sketched factor is singular past column {k}; truncating the correction"
            ));
        }
        let (y, r_est_cycle) = if k > 0 {
            let tk = leading_square(&t, k);
            let y = solve_upper_triangular(&tk, &utg[..k])?;
            let r_est = coefficient_residual(qr.u(), &utg[..k], &g);
            (y, r_est)
        } else {
            (Vec::new(), norm2(&g))
        };
        if k > 0 {
            let dx = b_cols.leading_columns(k).matvec(&y)?;
            for (xi, di) in x.iter_mut().zip(&dx) {
                *xi += di;
            }
            // Residual update by the stored products: r <- r - (A B) y.
            let ab_y = ab_cols.leading_columns(k).matvec(&y)?;
            for (ri, ai) in r.iter_mut().zip(&ab_y) {
                *ri -= ai;
            }
        }

        let wants_restart = end == CycleEnd::RestartRequested
            || (end == CycleEnd::Exhausted
                && config.restart == RestartPolicy::Adaptive
                && r_est_cycle > target_abs
                && k > 0);
        if wants_restart {
            restarts += 1;
            let new_res = norm2(&r);
            if new_res > 0.99 * cycle_start_res {
                stagnant_restarts += 1;
            } else {
                stagnant_restarts = 0;
            }
            if stagnant_restarts >= 2 {
                warnings.push(
                    "two consecutive restarts without 1% residual reduction; stopping".into(),
                );
            } else if restarts >= config.max_restarts {
                warnings.push(format!(
                    "restart limit ({}) reached; stopping",
                    config.max_restarts
                ));
            } else {
                continue 'cycles;
            }
        }

        let mut result = SgmresResult {
            converged: r_est_cycle <= target_abs,
            true_residual: true_residual_norm(op, rhs, &x),
            x,
            r_est: r_est_cycle,
            history: Vec::new(),
            restarts,
            basis_dim: k,
            sketch_dim: s,
            unreliable,
            breakdown,
            warnings,
        };
        if config.refine && k > 0 && !wants_restart {
            let tk = leading_square(&t, k);
            let bk = b_cols.leading_columns(k);
            let abk = ab_cols.leading_columns(k);
            // Refinement re-solves the final cycle, whose base point is
            // the committed solution minus this cycle's correction.
            let mut x_base = result.x.clone();
            let dx = bk.matvec(&y)?;
            for (xi, di) in x_base.iter_mut().zip(&dx) {
                *xi -= di;
            }
            let ax = op.apply_vec(&x_base);
            let r0_cycle: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
            match lsqr_refine(op, rhs, &x_base, &bk, &abk, &tk, &r0_cycle) {
                Ok((x_ref, res_ref)) => {
                    if res_ref < result.true_residual {
                        result.x = x_ref;
                        result.true_residual = res_ref;
                        let ax = op.apply_vec(&result.x);
                        let rx: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
                        result.r_est = norm2(&embedding.apply_vec(&rx)?);
                        result.converged = result.r_est <= target_abs;
                    }
                }
                Err(e) => result.warnings.push(format!("refinement skipped: {e}")),
            }
        }
        break 'cycles result;
    };

    let mut result = result;
    result.history = history;
    Ok(result)
}

/// Solution candidate from the current incremental factorisation (used
/// for mid-run true-residual reporting).
fn candidate_solution(
    x: &[f64],
    b_cols: &DenseMatrix,
    qr: &SketchedQr,
    utg: &[f64],
    active: usize,
) -> Result<Vec<f64>, KernelError> {
    let t = qr.t_matrix();
    let k = solvable_leading_block(&t, active);
    if k == 0 {
        return Ok(x.to_vec());
    }
    let tk = leading_square(&t, k);
    let y = solve_upper_triangular(&tk, &utg[..k])?;
    let dx = b_cols.leading_columns(k).matvec(&y)?;
    let mut out = x.to_vec();
    for (xi, di) in out.iter_mut().zip(&dx) {
        *xi += di;
    }
    Ok(out)
}

/// Polish a sketched solution by running LSQR on the whitened system
/// `(A B T^-1) w = r0` and returning the candidate together with its true
/// residual.
fn lsqr_refine<A: LinearOperator + ?Sized>(
    op: &A,
    rhs: &[f64],
    x_base: &[f64],
    b_cols: &DenseMatrix,
    ab_cols: &DenseMatrix,
    t: &DenseMatrix,
    r0: &[f64],
) -> Result<(Vec<f64>, f64), KernelError> {
    let k = t.ncols();
    let apply = |w: &[f64]| -> Result<Vec<f64>, KernelError> {
        let y = solve_upper_triangular(t, w)?;
        ab_cols.matvec(&y)
    };
    let apply_t = |u: &[f64]| -> Result<Vec<f64>, KernelError> {
        let v = ab_cols.matvec_transpose(u)?;
        solve_upper_transposed(t, &v)
    };
    let w = lsqr(apply, apply_t, r0, k, LSQR_MAX_ITERS)?;
    let y = solve_upper_triangular(t, &w)?;
    let dx = b_cols.matvec(&y)?;
    let mut x_ref = x_base.to_vec();
    for (xi, di) in x_ref.iter_mut().zip(&dx) {
        *xi += di;
    }
    let res = true_residual_norm(op, rhs, &x_ref);
    Ok((x_ref, res))
}

const LSQR_MAX_ITERS: usize = 50;

/// Conjugate-gradient-type least-squares iteration on the normal
/// equations in factored form (Paige-Saunders recurrences).
fn lsqr<F, G>(
    apply: F,
    apply_t: G,
    b: &[f64],
    k: usize,
    max_iter: usize,
) -> Result<Vec<f64>, KernelError>
where
    F: Fn(&[f64]) -> Result<Vec<f64>, KernelError>,
    G: Fn(&[f64]) -> Result<Vec<f64>, KernelError>,
{
    let mut x = vec![0.0; k];
    let mut u = b.to_vec();
    let mut beta = norm2(&u);
    if beta == 0.0 {
        return Ok(x);
    }
    for v in u.iter_mut() {
        *v /= beta;
    }
    let mut v = apply_t(&u)?;
    let mut alpha = norm2(&v);
    if alpha == 0.0 {
        return Ok(x);
    }
    for w in v.iter_mut() {
        *w /= alpha;
    }
    let mut w = v.clone();
    let mut phibar = beta;
    let mut rhobar = alpha;
    let tol = f64::EPSILON * beta;
    for _ in 0..max_iter {
        // Bidiagonalisation step.
        let av = apply(&v)?;
        for (ui, ai) in u.iter_mut().zip(&av) {
            *ui = ai - alpha * *ui;
        }
        beta = norm2(&u);
        if beta > 0.0 {
            for val in u.iter_mut() {
                *val /= beta;
            }
        }
        let atu = apply_t(&u)?;
        for (vi, ai) in v.iter_mut().zip(&atu) {
            *vi = ai - beta * *vi;
        }
        alpha = norm2(&v);
        if alpha > 0.0 {
            for val in v.iter_mut() {
                *val /= alpha;
            }
        }
        // Givens rotation eliminating the new subdiagonal entry.
        let rho = rhobar.hypot(beta);
        if rho == 0.0 {
            break;
        }
        let c = rhobar / rho;
        let s = beta / rho;
        let theta = s * alpha;
        rhobar = -c * alpha;
        let phi = c * phibar;
        phibar *= s;
        let step = phi / rho;
        let back = theta / rho;
        for ((xi, wi), vi) in x.iter_mut().zip(w.iter_mut()).zip(&v) {
            *xi += step * *wi;
            *wi = vi - back * *wi;
        }
        if phibar <= tol || alpha == 0.0 || beta == 0.0 {
            break;
        }
    }
    Ok(x)
}

/// Result of the classical GMRES baseline.
#[derive(Debug, Clone)]
pub struct GmresResult {
    /// Computed solution.
    pub x: Vec<f64>,
    /// Residual norms, starting with the initial residual; entry `j` is
    /// the (exact, monotone) residual after `j` iterations.
    pub residual_history: Vec<f64>,
    /// Whether the relative target was reached.
    pub converged: bool,
    /// Iterations performed.
    pub iterations: usize,
    /// True when an invariant subspace made the solution exact.
    pub breakdown: bool,
}

/// Classical GMRES with full (twice-repeated) orthogonalisation and
/// Givens-rotation residual updates.  Used as the reference point for the
/// sketched solvers.
pub fn gmres_baseline<A: LinearOperator + ?Sized>(
    op: &A,
    rhs: &[f64],
    x0: Option<&[f64]>,
    d_max: usize,
    target: f64,
) -> Result<GmresResult, SgmresError> {
    let n = check_square_system(op, rhs, x0)?;
    let (x_base, r0) = initial_state(op, rhs, x0);
    let beta = norm2(&r0);
    let mut history = vec![beta];
    if beta == 0.0 {
        return Ok(GmresResult {
            x: x_base,
            residual_history: history,
            converged: true,
            iterations: 0,
            breakdown: false,
        });
    }
    let d_max = d_max.min(n).max(1);
    let mut q: Vec<Vec<f64>> = vec![r0.iter().map(|v| v / beta).collect()];
    // Columns of the rotated Hessenberg matrix (upper triangular part).
    let mut r_cols: Vec<Vec<f64>> = Vec::new();
    let mut rotations: Vec<(f64, f64)> = Vec::new();
    let mut gvec = vec![beta];
    let mut breakdown = false;
    let mut converged = false;
    let mut m = 0usize;

    for j in 0..d_max {
        let mut w = op.apply_vec(&q[j]);
        let scale = norm2(&w);
        let mut hcol = vec![0.0; j + 2];
        for _ in 0..2 {
            for (i, qi) in q.iter().enumerate() {
                let c = dot(qi, &w);
                axpy(-c, qi, &mut w);
                hcol[i] += c;
            }
        }
        let hnext = norm2(&w);
        let lucky = hnext <= 1e-14 * scale.max(f64::MIN_POSITIVE);
        hcol[j + 1] = if lucky { 0.0 } else { hnext };
        if !lucky {
            for v in w.iter_mut() {
                *v /= hnext;
            }
            q.push(w);
        }
        // Apply the accumulated rotations, then a new one to annihilate
        // the subdiagonal entry.
        for (i, &(c, s)) in rotations.iter().enumerate() {
            let a = hcol[i];
            let b = hcol[i + 1];
            hcol[i] = c * a + s * b;
            hcol[i + 1] = -s * a + c * b;
        }
        let (c, s) = {
            let a = hcol[j];
            let b = hcol[j + 1];
            let r = a.hypot(b);
            if r == 0.0 {
                (1.0, 0.0)
            } else {
                (a / r, b / r)
            }
        };
        hcol[j] = c * hcol[j] + s * hcol[j + 1];
        hcol[j + 1] = 0.0;
        rotations.push((c, s));
        let gj = gvec[j];
        gvec[j] = c * gj;
        gvec.push(-s * gj);
        let residual = gvec[j + 1].abs();
        history.push(residual);
        r_cols.push(hcol[..=j].to_vec());
        m = j + 1;
        if lucky {
            breakdown = true;
            converged = true;
            break;
        }
        if residual <= target * beta {
            converged = true;
            break;
        }
    }

    // Back substitution on the triangular system.
    let mut y = vec![0.0; m];
    for i in (0..m).rev() {
        let mut v = gvec[i];
        for (jj, yj) in y.iter().enumerate().take(m).skip(i + 1) {
            v -= r_cols[jj][i] * yj;
        }
        let diag = r_cols[i][i];
        if diag == 0.0 {
            y[i] = 0.0;
        } else {
            y[i] = v / diag;
        }
    }
    let mut x = x_base;
    for (i, yi) in y.iter().enumerate() {
        axpy(*yi, &q[i], &mut x);
    }
    Ok(GmresResult {
        x,
        residual_history: history,
        converged,
        iterations: m,
        breakdown,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::singular_values;
    use crate::operators::{laplacian_2d, DenseOperator};
    use crate::testing;

    fn random_well_conditioned(n: usize, seed: u64) -> DenseOperator {
        let mut m = testing::seeded_matrix(n, n, seed);
        m.scale(0.2 / (n as f64).sqrt());
        for i in 0..n {
            m.set(i, i, m.get(i, i) + 1.0);
        }
        DenseOperator(m)
    }

    #[test]
    fn sketched_lsq_matches_normal_equations() {
        let g_mat = testing::seeded_matrix(40, 8, 12);
        let rhs = testing::seeded_vector(40, 13);
        let mut qr = SketchedQr::new(40);
        for j in 0..8 {
            assert!(!qr.append_column(g_mat.col(j)).unwrap());
        }
        let (y, r_est) = sketched_lsq(&qr, &rhs).unwrap();
        // Oracle: normal equations.
        let gt = g_mat.transpose();
        let gtg = gt.matmul(&g_mat).unwrap();
        let gtb = gt.matvec(&rhs).unwrap();
        let y_ref = testing::lu_solve(&gtg, &gtb).unwrap();
        for (a, b) in y.iter().zip(&y_ref) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
        let fit = g_mat.matvec(&y).unwrap();
        let resid: Vec<f64> = rhs.iter().zip(&fit).map(|(b, a)| b - a).collect();
        assert!((r_est - norm2(&resid)).abs() < 1e-12);
    }

    #[test]
    fn batch_solver_matches_a_direct_solve() {
        let n = 300;
        let op = random_well_conditioned(n, 3);
        let rhs = testing::seeded_vector(n, 4);
        let config = SgmresConfig {
            d_max: 60,
            target: 1e-12,
            ..SgmresConfig::default()
        };
        let result = sgmres_solve(&op, &rhs, None, &config).unwrap();
        let x_ref = testing::lu_solve(&op.0, &rhs).unwrap();
        let err: f64 = result
            .x
            .iter()
            .zip(&x_ref)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let scale = norm2(&x_ref);
        assert!(err <= 1e-8 * scale, "relative error {:e}", err / scale);
        assert!(result.true_residual <= 1e-8 * norm2(&rhs));
    }

    /// Exact distortion of the embedding on the subspace spanned by the
    /// columns of `m`.
    fn subspace_distortion(embedding: &Embedding, m: &DenseMatrix) -> f64 {
        let (q, _) = testing::classical_gram_schmidt_qr(m);
        let sq = embedding.apply_mat(&q).unwrap();
        let sv = singular_values(&sq);
        let smax = sv[0];
        let smin = *sv.last().unwrap();
        (smax - 1.0).max(1.0 - smin).max(0.0)
    }

    #[test]
    fn residual_stays_within_the_distortion_sandwich_of_gmres() {
        let op = laplacian_2d(10);
        let n = op.nrows();
        let rhs = testing::seeded_vector(n, 7);
        let d = 30;
        let config = SgmresConfig {
            d_max: d,
            target: 0.0,
            basis: BasisSelection::Arnoldi { k: 2 },
            ..SgmresConfig::default()
        };
        let sg = sgmres_solve(&op, &rhs, None, &config).unwrap();
        let gm = gmres_baseline(&op, &rhs, None, d, 0.0).unwrap();
        let gm_res = *gm.residual_history.last().unwrap();

        // Exact distortion on span([A B, r0]).
        let basis = crate::basis::build_basis(&op, &rhs, d, &config.basis, config.seed).unwrap();
        let embedding = Embedding::new(config.embedding, n, sg.sketch_dim, config.seed).unwrap();
        let mut span = basis.ab.clone();
        span.push_column(&rhs).unwrap();
        let eps = subspace_distortion(&embedding, &span);
        assert!(eps < 1.0, "distortion too large for the bound: {eps}");
        let factor = (1.0 + eps) / (1.0 - eps);

        assert!(
            gm_res <= sg.true_residual * (1.0 + 1e-10) + 1e-14 * norm2(&rhs),
            "baseline {gm_res:e} should not exceed the sketched residual {:e}",
            sg.true_residual
        );
        assert!(
            sg.true_residual <= factor * gm_res * (1.0 + 1e-10) + 1e-14 * norm2(&rhs),
            "sketched residual {:e} exceeds {factor:.3} x baseline {gm_res:e}",
            sg.true_residual
        );
        // Estimator fidelity on the same run.
        assert!(sg.r_est >= (1.0 - eps) * sg.true_residual - 1e-14);
        assert!(sg.r_est <= (1.0 + eps) * sg.true_residual + 1e-14);
    }

    #[test]
    fn batch_and_iterative_agree_without_restarts() {
        let op = laplacian_2d(8);
        let rhs = testing::seeded_vector(op.nrows(), 9);
        let config = SgmresConfig {
            d_max: 20,
            target: 0.0,
            true_residual_every: 0,
            ..SgmresConfig::default()
        };
        let batch = sgmres_solve(&op, &rhs, None, &config).unwrap();
        let iter = sgmres_iterative(&op, &rhs, None, &config).unwrap();
        assert_eq!(iter.restarts, 0);
        let scale = norm2(&batch.x);
        let diff: f64 = batch
            .x
            .iter()
            .zip(&iter.x)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        assert!(
            diff <= 1e-10 * scale,
            "batch/iterative gap {:e}",
            diff / scale
        );
        assert_eq!(iter.history.len(), 20);
    }

    #[test]
    fn adaptive_restart_rescues_a_degenerating_basis() {
        let op = laplacian_2d(32);
        let n = op.nrows();
        let rhs = testing::seeded_vector(n, 21);
        // The monomial recurrence degrades by roughly a factor of thirty
        // per column on this operator, so a 16-column cycle already ends
        // around condition 1e11; left untreated the single-cycle solve
        // stalls far from the target.  The oversized sketch keeps the
        // per-cycle distortion small enough for steady progress.
        let base = SgmresConfig {
            d_max: 16,
            sketch_dim: Some(101),
            basis: BasisSelection::Monomial,
            target: 1e-8,
            cond_tol: 1e6,
            max_restarts: 40,
            true_residual_every: 0,
            ..SgmresConfig::default()
        };
        let plain = sgmres_iterative(&op, &rhs, None, &base).unwrap();
        let restarted = sgmres_iterative(
            &op,
            &rhs,
            None,
            &SgmresConfig {
                restart: RestartPolicy::Adaptive,
                ..base.clone()
            },
        )
        .unwrap();
        assert!(
            plain.unreliable,
            "monomial growth should trip the condition check"
        );
        assert!(restarted.restarts >= 3, "too few restarts: {}", restarted.restarts);
        let rhs_norm = norm2(&rhs);
        assert!(
            restarted.true_residual < plain.true_residual,
            "restarted {:e} vs plain {:e}",
            restarted.true_residual / rhs_norm,
            plain.true_residual / rhs_norm
        );
        // Restarted cycles plateau eventually (the stagnation rule stops
        // them), but only well below the untreated single-cycle residual.
        assert!(
            restarted.true_residual <= 0.3 * plain.true_residual,
            "restart gained too little: {:e} vs {:e}",
            restarted.true_residual / rhs_norm,
            plain.true_residual / rhs_norm
        );
    }

    #[test]
    fn whiten_policy_restores_conditioning_and_continues() {
        // A healthy short-recurrence basis with a deliberately strict
        // threshold: the embedding alone pushes the factor's condition
        // past 2, so the stride check at column 32 must whiten, and the
        // run must keep growing to the full basis with an (almost)
        // unchanged solution.
        let op = laplacian_2d(16);
        let n = op.nrows();
        let rhs = testing::seeded_vector(n, 22);
        let config = SgmresConfig {
            d_max: 40,
            basis: BasisSelection::Arnoldi { k: 2 },
            target: 0.0,
            cond_tol: 2.0,
            restart: RestartPolicy::Whiten,
            true_residual_every: 0,
            ..SgmresConfig::default()
        };
        let result = sgmres_iterative(&op, &rhs, None, &config).unwrap();
        assert!(
            result.warnings.iter().any(|w| w.contains("whitened")),
            "whitening should have triggered: {:?}",
            result.warnings
        );
        assert!(!result.unreliable);
        assert_eq!(result.basis_dim, 40);
        assert_eq!(result.restarts, 0);
        // Whitening changes coordinates, not the subspace: the solution
        // matches the untreated run almost exactly.
        let none_policy = sgmres_iterative(
            &op,
            &rhs,
            None,
            &SgmresConfig {
                restart: RestartPolicy::None,
                ..config.clone()
            },
        )
        .unwrap();
        let scale = norm2(&none_policy.x);
        let diff: f64 = result
            .x
            .iter()
            .zip(&none_policy.x)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        assert!(diff <= 1e-8 * scale, "whiten drift {:e}", diff / scale);
    }

    #[test]
    fn refinement_never_hurts_and_approaches_the_baseline_optimum() {
        let op = laplacian_2d(12);
        let n = op.nrows();
        let rhs = testing::seeded_vector(n, 31);
        let d = 40;
        let config = SgmresConfig {
            d_max: d,
            target: 0.0,
            refine: false,
            ..SgmresConfig::default()
        };
        let plain = sgmres_solve(&op, &rhs, None, &config).unwrap();
        let refined = sgmres_solve(
            &op,
            &rhs,
            None,
            &SgmresConfig {
                refine: true,
                ..config.clone()
            },
        )
        .unwrap();
        let gm = gmres_baseline(&op, &rhs, None, d, 0.0).unwrap();
        let gm_res = *gm.residual_history.last().unwrap();
        assert!(refined.true_residual <= plain.true_residual * (1.0 + 1e-12));
        assert!(
            refined.true_residual <= 2.0 * gm_res + 1e-13 * norm2(&rhs),
            "refined {:e} vs baseline {gm_res:e}",
            refined.true_residual
        );
    }

    #[test]
    fn results_are_bitwise_deterministic() {
        let op = laplacian_2d(10);
        let rhs = testing::seeded_vector(op.nrows(), 5);
        let config = SgmresConfig {
            d_max: 25,
            seed: 99,
            ..SgmresConfig::default()
        };
        let a = sgmres_iterative(&op, &rhs, None, &config).unwrap();
        let b = sgmres_iterative(&op, &rhs, None, &config).unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.r_est, b.r_est);
        let c = sgmres_solve(&op, &rhs, None, &config).unwrap();
        let d = sgmres_solve(&op, &rhs, None, &config).unwrap();
        assert_eq!(c.x, d.x);
    }

    #[test]
    fn true_residual_cadence_is_respected() {
        let op = laplacian_2d(8);
        let rhs = testing::seeded_vector(op.nrows(), 14);
        let config = SgmresConfig {
            d_max: 20,
            target: 0.0,
            true_residual_every: 5,
            ..SgmresConfig::default()
        };
        let result = sgmres_iterative(&op, &rhs, None, &config).unwrap();
        assert_eq!(result.history.len(), 20);
        for record in &result.history {
            if record.iter % 5 == 0 {
                assert!(record.true_residual.is_some(), "iter {}", record.iter);
            } else {
                assert!(record.true_residual.is_none(), "iter {}", record.iter);
            }
        }
    }

    #[test]
    fn zero_rhs_returns_immediately() {
        let op = laplacian_2d(5);
        let rhs = vec![0.0; op.nrows()];
        let result = sgmres_iterative(&op, &rhs, None, &SgmresConfig::default()).unwrap();
        assert!(result.converged);
        assert_eq!(result.true_residual, 0.0);
        assert!(result.x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gmres_baseline_matches_a_direct_solve() {
        let n = 40;
        let op = random_well_conditioned(n, 17);
        let rhs = testing::seeded_vector(n, 18);
        let result = gmres_baseline(&op, &rhs, None, n, 0.0).unwrap();
        let x_ref = testing::lu_solve(&op.0, &rhs).unwrap();
        let err: f64 = result
            .x
            .iter()
            .zip(&x_ref)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        assert!(err <= 1e-10 * norm2(&x_ref));
        // The recorded history is monotone non-increasing.
        for pair in result.residual_history.windows(2) {
            assert!(pair[1] <= pair[0] * (1.0 + 1e-12));
        }
    }

    #[test]
    fn gmres_stops_exactly_on_an_invariant_subspace() {
        // Krylov space of dimension 3: a Jordan-like shift on the first
        // three coordinates.
        let mut m = DenseMatrix::identity(8);
        m.set(0, 1, 1.0);
        m.set(1, 2, 1.0);
        let op = DenseOperator(m);
        let mut rhs = vec![0.0; 8];
        rhs[0] = 1.0;
        let result = gmres_baseline(&op, &rhs, None, 8, 0.0).unwrap();
        assert!(result.breakdown);
        assert!(result.iterations <= 3);
        let res = true_residual_norm(&op, &rhs, &result.x);
        assert!(res <= 1e-12);
    }

    #[test]
    fn initial_guess_is_honoured() {
        let n = 60;
        let op = random_well_conditioned(n, 41);
        let x_star = testing::seeded_vector(n, 1);
        let rhs = op.apply_vec(&x_star);
        // Starting at the exact solution leaves nothing to do: the
        // residual recomputation reproduces `rhs` bit for bit.
        let at_solution =
            sgmres_iterative(&op, &rhs, Some(&x_star), &SgmresConfig::default()).unwrap();
        assert_eq!(at_solution.true_residual, 0.0);
        assert_eq!(at_solution.x, x_star);
        // A random start still converges to the same solution.
        let x0 = testing::seeded_vector(n, 3);
        let config = SgmresConfig {
            d_max: 40,
            target: 1e-12,
            ..SgmresConfig::default()
        };
        let with_guess = sgmres_iterative(&op, &rhs, Some(&x0), &config).unwrap();
        assert!(with_guess.true_residual <= 1e-8 * norm2(&rhs));
    }
}
