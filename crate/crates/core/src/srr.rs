//! Sketched Rayleigh-Ritz eigenpair extraction.
//!
//! Given a basis `B` for a search subspace and the matching product
//! `A * B`, classical Rayleigh-Ritz orthonormalizes `B` and solves a small
//! dense eigenproblem.  The sketched variant ([`srr`]) replaces the
//! orthonormalization by a randomized subspace embedding `S`: a thin QR of
//! `S B = U T` whitens the basis implicitly, the small matrix
//! `T^-1 (U^T (S A B))` is handed to the dense eigensolver, and the
//! residual of every candidate pair is estimated in the sketched norm at
//! negligible cost.  Eigenvectors are assembled as `B y` only for pairs
//! whose residual estimate clears the acceptance tolerance.
//!
//! For bases so ill-conditioned that the whitening itself breaks down,
//! [`srr_stabilized`] truncates a singular value decomposition of `S B`
//! and solves the eigenproblem on the retained subspace.  A classical
//! dense baseline ([`rr_baseline`]), a generalized (pencil) front end
//! ([`sketch_gep`]), and a sketched low-rank approximation builder
//! ([`lowrank_approx`]) round out the module.

use crate::basis::KrylovBasis;
use crate::kernels::{
    cond_estimate, dense_eig, householder_qr, solve_upper_triangular, truncated_svd, DenseMatrix,
    KernelError, ThinQr,
};
use crate::operators::AdjointOperator;
use crate::sketch::{whiten, Embedding, EmbeddingKind, SketchError};
use num_complex::Complex64;
use thiserror::Error;

/// Errors produced by the eigenpair extraction routines.
#[derive(Debug, Error)]
pub enum SrrError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(
        "sketched basis condition estimate {kappa:.3e} exceeds the tolerance; \
         use the stabilized variant or automatic stabilization"
    )]
    IllConditioned { kappa: f64 },
    #[error("basis is numerically rank zero")]
    DegenerateBasis,
    #[error("basis is rank deficient")]
    RankDeficientBasis,
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Sketch(#[from] SketchError),
}

/// Reaction to an ill-conditioned sketched basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StabilizeMode {
    /// Fail with [`SrrError::IllConditioned`] when the condition estimate
    /// of the sketched basis exceeds `cond_tol`.
    Off,
    /// Switch to the truncated path automatically on the same trigger,
    /// recording a warning.
    #[default]
    Auto,
    /// Always use the truncated path.
    On,
}

/// Configuration shared by the extraction routines.
#[derive(Debug, Clone, Copy)]
pub struct SrrConfig {
    /// Embedding rows.  `None` selects `4 d` for a `d`-column basis
    /// (clamped to the vector length `n`).  The resolved value must be at
    /// least `2 d` — the embedding has to preserve the ranges of both `B`
    /// and `A B` — unless it equals `n`, in which case the sketch is exact.
    pub sketch_dim: Option<usize>,
    /// Embedding family.
    pub embedding: EmbeddingKind,
    /// Seed for the embedding draw.
    pub seed: u64,
    /// Acceptance threshold on the relative residual estimate.
    pub tau: f64,
    /// Condition threshold separating the plain and stabilized paths.
    pub cond_tol: f64,
    /// What to do when the threshold is exceeded.
    pub stabilize: StabilizeMode,
    /// Post-process for a symmetric operator: drop imaginary parts,
    /// collapse conjugate twins, recompute residuals and re-filter.
    pub symmetric: bool,
}

impl Default for SrrConfig {
    fn default() -> Self {
        SrrConfig {
            sketch_dim: None,
            embedding: EmbeddingKind::Trig,
            seed: 0,
            tau: 1e-6,
            cond_tol: 1e14,
            stabilize: StabilizeMode::default(),
            symmetric: false,
        }
    }
}

/// One candidate eigenpair.
#[derive(Debug, Clone)]
pub struct EigenPairEstimate {
    /// Eigenvalue estimate.
    pub theta: Complex64,
    /// Coefficient vector in the columns of the supplied basis (for the
    /// stabilized path, already mapped back from the truncated coordinates).
    pub y: Vec<Complex64>,
    /// Relative residual estimate in the sketched norm; exact for the
    /// classical baseline.
    pub r_est: f64,
    /// Assembled eigenvector `B y`, present only for accepted pairs.
    pub x: Option<Vec<Complex64>>,
}

/// Output of [`srr`], [`srr_stabilized`], [`sketch_gep`] and
/// [`rr_baseline`].
#[derive(Debug, Clone)]
pub struct SrrResult {
    /// Candidate pairs sorted by descending real part of the eigenvalue
    /// estimate (conjugate pairs adjacent, positive imaginary part first).
    pub pairs: Vec<EigenPairEstimate>,
    /// Indices (ascending) of pairs whose residual estimate is below the
    /// acceptance threshold.
    pub accepted: Vec<usize>,
    /// Condition estimate of the sketched basis (of the orthonormalized
    /// basis for the classical baseline, where it measures `B` itself).
    pub kappa_sb: f64,
    /// Whether the truncated path produced this result.
    pub stabilized: bool,
    /// Retained rank after truncation (only on the stabilized path).
    pub retained_rank: Option<usize>,
    /// Embedding rows used (`n` for the classical baseline, whose
    /// "sketch" is exact).
    pub sketch_dim: usize,
    /// Acceptance threshold the result was filtered with.
    pub tau: f64,
    /// Non-fatal notes, e.g. an automatic switch to the truncated path.
    pub warnings: Vec<String>,
    /// Sketched basis `S B` (`Q` for the baseline), kept so residuals can
    /// be recomputed by [`symmetric_postprocess`].
    pub sketched_b: DenseMatrix,
    /// Sketched product `S A B` (`A Q` for the baseline).
    pub sketched_ab: DenseMatrix,
}

/// Rank-`r` factorization `F G ~ A` produced by [`lowrank_approx`].
#[derive(Debug, Clone)]
pub struct LowRankFactors {
    /// Left factor, `m x r`.
    pub f: DenseMatrix,
    /// Right factor, `r x n`.
    pub g: DenseMatrix,
    /// Numerical rank actually retained.
    pub rank: usize,
    /// Embedding rows used.
    pub sketch_dim: usize,
    /// Non-fatal notes, e.g. truncation of a rank-deficient product.
    pub warnings: Vec<String>,
}

/// Extract eigenpair estimates from a basis by sketched Rayleigh-Ritz.
///
/// Sketches `B` and `A B` with one shared embedding, whitens through a QR
/// of the sketched basis and solves the small dense eigenproblem.  When
/// the condition estimate of `S B` exceeds `config.cond_tol` the call
/// fails, switches to the truncated path, or always takes it, per
/// `config.stabilize`.
pub fn srr(basis: &KrylovBasis, config: &SrrConfig) -> Result<SrrResult, SrrError> {
    let (c, d_sk, s) = sketch_pair(&basis.b, &basis.ab, config)?;
    extract(Some(&basis.b), c, d_sk, s, config, false)
}

/// Eigenpair extraction through a truncated singular value decomposition
/// of the sketched basis.
///
/// Use for bases too ill-conditioned for [`srr`]: directions of `S B`
/// below `sigma_max / cond_tol` are discarded and the eigenproblem is
/// solved on the retained subspace, so a numerically rank-deficient basis
/// still yields meaningful pairs (at reduced rank).
pub fn srr_stabilized(basis: &KrylovBasis, config: &SrrConfig) -> Result<SrrResult, SrrError> {
    let (c, d_sk, s) = sketch_pair(&basis.b, &basis.ab, config)?;
    extract(Some(&basis.b), c, d_sk, s, config, true)
}

/// Whitened projection of the operator onto the basis: the matrix
/// `M = T^-1 (U^T (S A B))` where `S B = U T`, together with the condition
/// estimate of `T`.
///
/// This is the matrix [`srr`] hands to the dense eigensolver.  For a
/// Krylov basis its leading `d - 1` columns reproduce the exact Galerkin
/// projection of the operator independent of the embedding, because those
/// products `A b_j` already lie in the span of the basis.  Fails with
/// [`SrrError::IllConditioned`] when the condition estimate exceeds
/// `config.cond_tol` (this helper has no stabilized fallback).
pub fn sketched_projection(
    b: &DenseMatrix,
    ab: &DenseMatrix,
    config: &SrrConfig,
) -> Result<(DenseMatrix, f64), SrrError> {
    let (c, d_sk, _s) = sketch_pair(b, ab, config)?;
    let qr = householder_qr(&c)?;
    let kappa = cond_estimate(&qr.t);
    if kappa > config.cond_tol {
        return Err(SrrError::IllConditioned { kappa });
    }
    Ok((whitened_projection(&qr, &d_sk)?, kappa))
}

/// Eigenpair estimates for the pencil `(H, J)` restricted to a subspace:
/// given `H B` and `J B`, solves the sketched problem
/// `(S J B)^+ (S H B) y = theta y`.
///
/// Both blocks are sketched with one shared embedding.  Conditioning of
/// `S J B` is handled exactly as in [`srr`] (error when `stabilize` is
/// off, truncated path otherwise).  The returned pairs carry coefficient
/// vectors only; map them through `B` to obtain eigenvector estimates.
pub fn sketch_gep(
    hb: &DenseMatrix,
    jb: &DenseMatrix,
    config: &SrrConfig,
) -> Result<SrrResult, SrrError> {
    let (c, d_sk, s) = sketch_pair(jb, hb, config)?;
    extract(None, c, d_sk, s, config, false)
}

/// Classical Rayleigh-Ritz baseline.
///
/// Orthonormalizes the basis by a full Householder QR, forms
/// `Q^T (A Q)` densely (reusing the stored product `A B`, so no fresh
/// operator applications are needed) and solves the dense eigenproblem.
/// Residuals are exact: the stored matrices are `Q` and `A Q` rather than
/// sketches, so the same estimate formula evaluates the true residual.
pub fn rr_baseline(basis: &KrylovBasis, config: &SrrConfig) -> Result<SrrResult, SrrError> {
    let d = basis.dim();
    if d == 0 {
        return Err(SrrError::InvalidParameter("basis has no columns".into()));
    }
    if !(config.tau > 0.0) {
        return Err(SrrError::InvalidParameter(
            "acceptance tolerance must be positive".into(),
        ));
    }
    let qr = householder_qr(&basis.b)?;
    let mut max_diag = 0.0f64;
    for j in 0..d {
        max_diag = max_diag.max(qr.t.get(j, j).abs());
    }
    if max_diag == 0.0 {
        return Err(SrrError::DegenerateBasis);
    }
    for j in 0..d {
        if qr.t.get(j, j).abs() <= 1e-14 * max_diag {
            return Err(SrrError::RankDeficientBasis);
        }
    }
    let kappa = cond_estimate(&qr.t);
    let q = qr.u;
    let aq = whiten(&basis.ab, &qr.t)?;
    let m = q.transpose().matmul(&aq)?;
    let eig = dense_eig(&m)?;
    let raw: Vec<(Complex64, Vec<Complex64>)> =
        eig.values.into_iter().zip(eig.vectors).collect();
    Ok(finish(
        raw,
        q.clone(),
        aq,
        kappa,
        basis.n(),
        false,
        None,
        Vec::new(),
        config,
        Some(&q),
    ))
}

/// Realify a result computed for a symmetric operator.
///
/// Drops imaginary parts of eigenvalue estimates, coefficient vectors and
/// assembled eigenvectors; a complex conjugate twin collapses into the
/// single estimate it realifies to.  Residual estimates are then
/// recomputed from the stored (sketched) matrices, pairs are re-sorted by
/// descending eigenvalue estimate, and the accepted set is re-filtered
/// against the stored threshold.  Pairs that become accepted only after
/// realification keep `x = None`; the solver entry points assemble
/// eigenvectors after this step, so their results are unaffected.
pub fn symmetric_postprocess(mut result: SrrResult) -> SrrResult {
    let mut pairs: Vec<EigenPairEstimate> = Vec::with_capacity(result.pairs.len());
    let mut i = 0;
    while i < result.pairs.len() {
        let p = &result.pairs[i];
        let mut x = p.x.clone();
        let mut step = 1;
        if p.theta.im != 0.0 && i + 1 < result.pairs.len() {
            let twin = &result.pairs[i + 1];
            if twin.theta.re == p.theta.re && twin.theta.im == -p.theta.im {
                if x.is_none() {
                    x = twin.x.clone();
                }
                step = 2;
            }
        }
        pairs.push(EigenPairEstimate {
            theta: Complex64::new(p.theta.re, 0.0),
            y: p.y.iter().map(|z| Complex64::new(z.re, 0.0)).collect(),
            r_est: 0.0,
            x: x.map(|v| v.iter().map(|z| Complex64::new(z.re, 0.0)).collect()),
        });
        i += step;
    }
    for p in &mut pairs {
        p.r_est = pair_residual(&result.sketched_b, &result.sketched_ab, p.theta, &p.y);
    }
    pairs.sort_by(|a, b| b.theta.re.total_cmp(&a.theta.re));
    result.accepted = accepted_indices(&pairs, result.tau);
    result.pairs = pairs;
    result
}

/// Sketched low-rank approximation `A ~ F G` from a right test basis `B`.
///
/// Forms `A B`, sketches it over the row space of `A` with an embedding of
/// `2 d` rows (clamped to `m`), takes a thin QR `S (A B) = U T` and
/// evaluates the projection stably as `F = (A B) T^-1`,
/// `G = U^T (S A)` — never forming the pseudoinverse of an
/// ill-conditioned matrix.  The rows of `S A` are obtained through `s`
/// transpose applications of the operator to materialized embedding rows.
/// A numerically singular `T` is truncated to its leading nonsingular
/// block with a warning.
pub fn lowrank_approx<A: AdjointOperator + ?Sized>(
    a: &A,
    b: &DenseMatrix,
    config: &SrrConfig,
) -> Result<LowRankFactors, SrrError> {
    let (m, n) = (a.nrows(), a.ncols());
    if b.nrows() != n {
        return Err(SrrError::DimensionMismatch {
            expected: n,
            got: b.nrows(),
        });
    }
    let d = b.ncols();
    if d == 0 {
        return Err(SrrError::InvalidParameter(
            "test basis has no columns".into(),
        ));
    }
    let s = config.sketch_dim.unwrap_or(2 * d).min(m);
    if s < d {
        return Err(SrrError::InvalidParameter(format!(
            "sketch dimension {s} is smaller than the basis dimension {d}"
        )));
    }
    let mut ab_cols = Vec::with_capacity(d);
    for j in 0..d {
        ab_cols.push(a.apply_vec(b.col(j)));
    }
    let ab = DenseMatrix::from_columns(&ab_cols)?;
    let embedding = Embedding::new(config.embedding, m, s, config.seed)?;
    let c = embedding.apply_mat(&ab)?;
    let qr = householder_qr(&c)?;
    let mut max_diag = 0.0f64;
    for j in 0..d {
        max_diag = max_diag.max(qr.t.get(j, j).abs());
    }
    if max_diag == 0.0 {
        return Err(SrrError::DegenerateBasis);
    }
    let mut rank = d;
    for j in 0..d {
        if qr.t.get(j, j).abs() <= 1e-12 * max_diag {
            rank = j;
            break;
        }
    }
    let mut warnings = Vec::new();
    if rank < d {
        warnings.push(format!(
            "sketched product is numerically rank {rank} of {d}; trailing columns dropped"
        ));
    }
    let t_lead = DenseMatrix::from_fn(rank, rank, |i, j| qr.t.get(i, j));
    let f = whiten(&ab.leading_columns(rank), &t_lead)?;
    let mut g = DenseMatrix::zeros(rank, n);
    let mut at_row = vec![0.0; n];
    for i in 0..s {
        let row = embedding.row(i);
        a.apply_transpose(&row, &mut at_row);
        let u_row: Vec<f64> = (0..rank).map(|r| qr.u.get(i, r)).collect();
        for (j, &v) in at_row.iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            let gj = g.col_mut(j);
            for (gr, ur) in gj.iter_mut().zip(&u_row) {
                *gr += ur * v;
            }
        }
    }
    Ok(LowRankFactors {
        f,
        g,
        rank,
        sketch_dim: s,
        warnings,
    })
}

/// Resolve the embedding row count for an `n x d` basis.
fn resolve_sketch_dim(n: usize, d: usize, config: &SrrConfig) -> Result<usize, SrrError> {
    if d == 0 {
        return Err(SrrError::InvalidParameter("basis has no columns".into()));
    }
    if !(config.tau > 0.0) {
        return Err(SrrError::InvalidParameter(
            "acceptance tolerance must be positive".into(),
        ));
    }
    let s = config.sketch_dim.unwrap_or(4 * d).min(n);
    if s < 2 * d && s < n {
        return Err(SrrError::InvalidParameter(format!(
            "sketch dimension {s} must be at least twice the basis dimension {d} \
             (or the full dimension {n})"
        )));
    }
    Ok(s)
}

/// Sketch two equal-shape blocks with one shared embedding.
fn sketch_pair(
    b: &DenseMatrix,
    ab: &DenseMatrix,
    config: &SrrConfig,
) -> Result<(DenseMatrix, DenseMatrix, usize), SrrError> {
    if b.nrows() != ab.nrows() || b.ncols() != ab.ncols() {
        return Err(SrrError::DimensionMismatch {
            expected: b.nrows() * b.ncols(),
            got: ab.nrows() * ab.ncols(),
        });
    }
    let s = resolve_sketch_dim(b.nrows(), b.ncols(), config)?;
    let embedding = Embedding::new(config.embedding, b.nrows(), s, config.seed)?;
    let c = embedding.apply_mat(b)?;
    let d_sk = embedding.apply_mat(ab)?;
    Ok((c, d_sk, s))
}

/// `M = T^-1 (U^T D)` for a thin QR `(U, T)` of the sketched basis.
fn whitened_projection(qr: &ThinQr, d_sk: &DenseMatrix) -> Result<DenseMatrix, SrrError> {
    let utd = qr.u.transpose().matmul(d_sk)?;
    let mut cols = Vec::with_capacity(utd.ncols());
    for j in 0..utd.ncols() {
        cols.push(solve_upper_triangular(&qr.t, utd.col(j))?);
    }
    Ok(DenseMatrix::from_columns(&cols)?)
}

/// Shared extraction path behind [`srr`], [`srr_stabilized`] and
/// [`sketch_gep`]: route on conditioning, solve the small eigenproblem,
/// estimate residuals, post-process and assemble.
fn extract(
    assembly: Option<&DenseMatrix>,
    c: DenseMatrix,
    d_sk: DenseMatrix,
    sketch_dim: usize,
    config: &SrrConfig,
    force_stabilized: bool,
) -> Result<SrrResult, SrrError> {
    let qr = householder_qr(&c)?;
    let kappa = cond_estimate(&qr.t);
    let mut warnings = Vec::new();
    let use_stabilized = if force_stabilized || config.stabilize == StabilizeMode::On {
        true
    } else if kappa > config.cond_tol {
        match config.stabilize {
            StabilizeMode::Off => return Err(SrrError::IllConditioned { kappa }),
            _ => {
                warnings.push(format!(
                    "sketched basis condition estimate {kappa:.3e} exceeds {:.1e}; \
                     switching to the truncated path",
                    config.cond_tol
                ));
                true
            }
        }
    } else {
        false
    };
    let (raw, retained_rank) = if use_stabilized {
        let svd = truncated_svd(&c, config.cond_tol)?;
        if svd.rank == 0 {
            return Err(SrrError::DegenerateBasis);
        }
        let utd = svd.u.transpose().matmul(&d_sk)?;
        let mut small = utd.matmul(&svd.v)?;
        for j in 0..small.ncols() {
            let col = small.col_mut(j);
            for (i, entry) in col.iter_mut().enumerate() {
                *entry /= svd.sigma[i];
            }
        }
        let eig = dense_eig(&small)?;
        let raw: Vec<(Complex64, Vec<Complex64>)> = eig
            .values
            .into_iter()
            .zip(eig.vectors)
            .map(|(theta, z)| (theta, real_matvec_complex(&svd.v, &z)))
            .collect();
        (raw, Some(svd.rank))
    } else {
        let m = whitened_projection(&qr, &d_sk)?;
        let eig = dense_eig(&m)?;
        (eig.values.into_iter().zip(eig.vectors).collect(), None)
    };
    Ok(finish(
        raw,
        c,
        d_sk,
        kappa,
        sketch_dim,
        use_stabilized,
        retained_rank,
        warnings,
        config,
        assembly,
    ))
}

/// Attach residual estimates, post-process, filter and assemble.
#[allow(clippy::too_many_arguments)]
fn finish(
    raw: Vec<(Complex64, Vec<Complex64>)>,
    c: DenseMatrix,
    d_sk: DenseMatrix,
    kappa: f64,
    sketch_dim: usize,
    stabilized: bool,
    retained_rank: Option<usize>,
    warnings: Vec<String>,
    config: &SrrConfig,
    assembly: Option<&DenseMatrix>,
) -> SrrResult {
    let pairs: Vec<EigenPairEstimate> = raw
        .into_iter()
        .map(|(theta, y)| {
            let r_est = pair_residual(&c, &d_sk, theta, &y);
            EigenPairEstimate {
                theta,
                y,
                r_est,
                x: None,
            }
        })
        .collect();
    let accepted = accepted_indices(&pairs, config.tau);
    let mut result = SrrResult {
        pairs,
        accepted,
        kappa_sb: kappa,
        stabilized,
        retained_rank,
        sketch_dim,
        tau: config.tau,
        warnings,
        sketched_b: c,
        sketched_ab: d_sk,
    };
    if config.symmetric {
        result = symmetric_postprocess(result);
    }
    if let Some(b) = assembly {
        for &i in &result.accepted {
            if result.pairs[i].x.is_none() {
                result.pairs[i].x = Some(real_matvec_complex(b, &result.pairs[i].y));
            }
        }
    }
    result
}

/// Indices of pairs below the acceptance threshold, ascending.
fn accepted_indices(pairs: &[EigenPairEstimate], tau: f64) -> Vec<usize> {
    pairs
        .iter()
        .enumerate()
        .filter(|(_, p)| p.r_est < tau)
        .map(|(i, _)| i)
        .collect()
}

/// Relative residual `|| D y - theta C y || / || C y ||` in complex
/// arithmetic over real matrices.  Returns infinity for a vector that `C`
/// annihilates, so such pairs are never accepted.
fn pair_residual(c: &DenseMatrix, d: &DenseMatrix, theta: Complex64, y: &[Complex64]) -> f64 {
    let cy = real_matvec_complex(c, y);
    let dy = real_matvec_complex(d, y);
    let denom = complex_norm(&cy);
    if denom == 0.0 {
        return f64::INFINITY;
    }
    let mut num = 0.0;
    for (di, ci) in dy.iter().zip(&cy) {
        num += (di - theta * ci).norm_sqr();
    }
    num.sqrt() / denom
}

/// Product of a real matrix with a complex vector.
fn real_matvec_complex(m: &DenseMatrix, v: &[Complex64]) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); m.nrows()];
    for (j, vj) in v.iter().enumerate() {
        if vj.re == 0.0 && vj.im == 0.0 {
            continue;
        }
        for (o, &c) in out.iter_mut().zip(m.col(j)) {
            *o += vj * c;
        }
    }
    out
}

/// Euclidean norm of a complex vector.
fn complex_norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}
