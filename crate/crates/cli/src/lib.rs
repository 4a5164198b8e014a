//! Benchmark and demonstration harness for the sketched solvers.
//!
//! This crate turns the library into a command-line tool: it loads or
//! generates test problems, runs the sketched solvers head-to-head with
//! their classical baselines, and emits per-iteration convergence,
//! conditioning and timing data as CSV or JSON for external plotting.
//! The binary front end lives in `main.rs`; everything here is callable
//! from tests.
//!
//! Output conventions:
//! - Solve runs use the CSV header `iter,r_est,true_res,cond,ms`; eigen
//!   runs use `theta_re,theta_im,r_est` preceded by a `#`-prefixed
//!   metadata block. JSON mirrors the rows under a `history` (or `pairs`)
//!   array plus a `summary` object.
//! - Wall times are not observable per iteration from outside the solver,
//!   so the `ms` column is 0 for every row by default (keeping repeated
//!   runs byte-identical); with timings enabled the final row carries the
//!   measured cumulative total.
//! - Exit codes: 0 success, 1 usage or input error, 2 conditioning
//!   failure or an unconverged/unreliable solve.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;
use thiserror::Error;

use sketchy::basis::{
    block_basis, build_basis, resolve_basis, BasisError, BasisSelection, BlockVariant,
    KrylovBasis, ResolvedBasis, SpectralBox,
};
use sketchy::kernels::{dot, householder_qr, norm2, solve_upper_triangular, KernelError};
use sketchy::operators::{
    laplacian_2d, planted_diagonal, read_matrix_market, trs_operator, LinearOperator,
    OperatorError,
};
use sketchy::sgmres::{
    gmres_baseline, sgmres_iterative, RestartPolicy, SgmresConfig, SgmresError,
};
use sketchy::sketch::{Embedding, EmbeddingKind, SketchError};
use sketchy::srr::{rr_baseline, srr, srr_stabilized, SrrConfig, SrrError, StabilizeMode};
use sketchy::DenseMatrix;

/// Decorrelates the right-hand-side stream from the embedding seed.
const RHS_SEED_SALT: u64 = 0x7268_73aa;
/// Seed salt for randomly generated eigen start vectors and blocks.
const START_SEED_SALT: u64 = 0x7374_6172;

/// Everything that can go wrong in a harness run.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Basis(#[from] BasisError),
    #[error(transparent)]
    Sgmres(#[from] SgmresError),
    #[error(transparent)]
    Srr(#[from] SrrError),
    #[error(transparent)]
    Sketch(#[from] SketchError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

impl CliError {
    /// Process exit code for this error: 2 for conditioning failures of
    /// the eigensolvers, 1 for usage and input problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Srr(SrrError::IllConditioned { .. })
            | CliError::Srr(SrrError::DegenerateBasis)
            | CliError::Srr(SrrError::RankDeficientBasis) => 2,
            _ => 1,
        }
    }
}

/// A problem source: a generator family with its size, or a matrix file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Problem {
    Laplacian2d { m: usize },
    Trs { n: usize },
    Planted { n: usize },
    File { path: PathBuf },
}

impl Problem {
    /// Parse a `--gen` value such as `laplacian2d:100`, `trs:1000` or
    /// `planted:8192`.
    pub fn parse_gen(spec: &str) -> Result<Problem, CliError> {
        let (family, size) = spec
            .split_once(':')
            .ok_or_else(|| CliError::Usage(format!("--gen {spec}: expected <family>:<size>")))?;
        let size: usize = size
            .parse()
            .map_err(|_| CliError::Usage(format!("--gen {spec}: size must be an integer")))?;
        match family {
            "laplacian2d" => {
                if size == 0 {
                    return Err(CliError::Usage("laplacian2d grid side must be positive".into()));
                }
                Ok(Problem::Laplacian2d { m: size })
            }
            "trs" => {
                if size < 2 {
                    return Err(CliError::Usage("trs inner dimension must be at least 2".into()));
                }
                Ok(Problem::Trs { n: size })
            }
            "planted" => {
                if size < 12 {
                    return Err(CliError::Usage("planted dimension must be at least 12".into()));
                }
                Ok(Problem::Planted { n: size })
            }
            other => Err(CliError::Usage(format!("unknown generator family {other}"))),
        }
    }

    /// Stable identifier used in output metadata.
    pub fn id(&self) -> String {
        match self {
            Problem::Laplacian2d { m } => format!("laplacian2d:{m}"),
            Problem::Trs { n } => format!("trs:{n}"),
            Problem::Planted { n } => format!("planted:{n}"),
            Problem::File { path } => format!("file:{}", path.display()),
        }
    }

    /// Materialize the operator. Generators that need randomness draw it
    /// from `seed`.
    pub fn build(&self, seed: u64) -> Result<BuiltProblem, CliError> {
        match self {
            Problem::Laplacian2d { m } => Ok(BuiltProblem {
                id: self.id(),
                op: Box::new(laplacian_2d(*m)),
                start: None,
            }),
            Problem::Trs { n } => {
                // Gaussian coupling scaled to norm 0.01 and unit trust
                // radius; the natural Krylov start for the block operator
                // is (0; g).
                let op = trs_operator(*n, 0.01, 1.0, seed);
                let start = op.krylov_start();
                Ok(BuiltProblem {
                    id: self.id(),
                    op: Box::new(op),
                    start: Some(start),
                })
            }
            Problem::Planted { n } => Ok(BuiltProblem {
                id: self.id(),
                op: Box::new(planted_diagonal(*n, seed)),
                start: None,
            }),
            Problem::File { path } => {
                let op = read_matrix_market(path)?;
                if op.nrows() != op.ncols() {
                    return Err(CliError::Usage(format!(
                        "matrix {} is {}x{}; the solvers need a square operator",
                        path.display(),
                        op.nrows(),
                        op.ncols()
                    )));
                }
                Ok(BuiltProblem {
                    id: self.id(),
                    op: Box::new(op),
                    start: None,
                })
            }
        }
    }
}

/// A materialized problem: the operator plus an optional preferred start
/// vector (the TRS block operator comes with one).
pub struct BuiltProblem {
    pub id: String,
    pub op: Box<dyn LinearOperator>,
    pub start: Option<Vec<f64>>,
}

/// Resolve the `--matrix`/`--gen` pair into a problem source.
pub fn problem_from_flags(
    matrix: Option<&Path>,
    gen: Option<&str>,
) -> Result<Problem, CliError> {
    match (matrix, gen) {
        (Some(_), Some(_)) => Err(CliError::Usage(
            "--matrix and --gen are mutually exclusive".into(),
        )),
        (Some(path), None) => Ok(Problem::File {
            path: path.to_path_buf(),
        }),
        (None, Some(spec)) => Problem::parse_gen(spec),
        (None, None) => Err(CliError::Usage("one of --matrix or --gen is required".into())),
    }
}

/// Standard normal vector from a dedicated stream.
fn gaussian_vector(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// Standard normal matrix from a dedicated stream (column major).
fn gaussian_matrix(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    DenseMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
}

/// Build the right-hand side: `random` draws a seeded standard normal
/// vector, anything else is read as a whitespace-separated number file.
pub fn make_rhs(spec: &str, n: usize, seed: u64) -> Result<Vec<f64>, CliError> {
    if spec == "random" {
        return Ok(gaussian_vector(n, seed ^ RHS_SEED_SALT));
    }
    let path = PathBuf::from(spec);
    let text = std::fs::read_to_string(&path).map_err(|source| CliError::Io {
        path: path.clone(),
        source,
    })?;
    let mut v = Vec::new();
    for tok in text.split_whitespace() {
        let x: f64 = tok.parse().map_err(|_| {
            CliError::Usage(format!("{}: bad number {tok:?}", path.display()))
        })?;
        v.push(x);
    }
    if v.len() != n {
        return Err(CliError::Usage(format!(
            "{}: expected {n} entries, found {}",
            path.display(),
            v.len()
        )));
    }
    Ok(v)
}

/// Parse a `--basis` value: `arnoldi:<k>`, `lanczos`, `chebyshev`,
/// `newton`, `monomial` or `blockcheb`. The spectral box (from `--box`)
/// feeds the Chebyshev recurrences when given.
pub fn parse_basis(spec: &str, spectral_box: Option<SpectralBox>) -> Result<BasisChoice, CliError> {
    if let Some(k) = spec.strip_prefix("arnoldi:") {
        let k: usize = k
            .parse()
            .map_err(|_| CliError::Usage(format!("--basis {spec}: depth must be an integer")))?;
        if k == 0 {
            return Err(CliError::Usage("arnoldi depth must be at least 1".into()));
        }
        return Ok(BasisChoice::Single(BasisSelection::Arnoldi { k }));
    }
    match spec {
        "lanczos" => Ok(BasisChoice::Single(BasisSelection::Lanczos)),
        "chebyshev" => Ok(BasisChoice::Single(BasisSelection::Chebyshev { spectral_box })),
        "newton" => Ok(BasisChoice::Single(BasisSelection::Newton { shifts: None })),
        "monomial" => Ok(BasisChoice::Single(BasisSelection::Monomial)),
        "blockcheb" => Ok(BasisChoice::BlockChebyshev { spectral_box }),
        other => Err(CliError::Usage(format!("unknown basis {other}"))),
    }
}

/// Either a single-vector recurrence or the block Chebyshev construction.
#[derive(Debug, Clone)]
pub enum BasisChoice {
    Single(BasisSelection),
    BlockChebyshev { spectral_box: Option<SpectralBox> },
}

/// Flags of a solve run, already typed.
pub struct SolveSpec {
    pub problem: Problem,
    pub rhs: String,
    pub method: SolveMethod,
    pub basis: BasisChoice,
    pub d: usize,
    pub seed: u64,
    pub restart: RestartPolicy,
    pub tol: f64,
    pub sketch_dim: Option<usize>,
    pub embedding: EmbeddingKind,
    pub timings: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMethod {
    Sgmres,
    Gmres,
}

impl SolveMethod {
    fn name(self) -> &'static str {
        match self {
            SolveMethod::Sgmres => "sgmres",
            SolveMethod::Gmres => "gmres",
        }
    }
}

/// One output row of a solve run.
#[derive(Debug, Clone, Serialize)]
pub struct RunRow {
    pub iter: usize,
    pub r_est: f64,
    pub true_res: Option<f64>,
    pub cond: Option<f64>,
    pub ms: f64,
}

/// Final state of a solve run.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub final_r_est: f64,
    pub final_true_res: f64,
    pub rhs_norm: f64,
    pub converged: bool,
    pub unreliable: bool,
    pub restarts: usize,
    pub basis_dim: usize,
    pub sketch_dim: usize,
    pub total_ms: f64,
}

/// Full record of a solve run: identification, per-iteration history and
/// the final summary.
#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub problem: String,
    pub method: String,
    pub d: usize,
    pub seed: u64,
    pub history: Vec<RunRow>,
    pub summary: RunSummary,
}

/// Outcome of a harness command: the rendered record, warnings for
/// stderr, and the process exit code.
pub struct CommandOutcome {
    pub output: String,
    pub warnings: Vec<String>,
    pub exit_code: i32,
}

/// Output rendering selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

/// Run a linear solve and render its record.
pub fn run_solve(spec: &SolveSpec, format: OutputFormat) -> Result<CommandOutcome, CliError> {
    let selection = match &spec.basis {
        BasisChoice::Single(sel) => sel.clone(),
        BasisChoice::BlockChebyshev { .. } => {
            return Err(CliError::Usage(
                "blockcheb is an eigensolver basis; solve runs use single-vector recurrences"
                    .into(),
            ))
        }
    };
    if spec.d == 0 {
        return Err(CliError::Usage("--d must be positive".into()));
    }
    let built = spec.problem.build(spec.seed)?;
    let n = built.op.nrows();
    let rhs = make_rhs(&spec.rhs, n, spec.seed)?;
    let rhs_norm = norm2(&rhs);

    let record = match spec.method {
        SolveMethod::Sgmres => {
            let config = SgmresConfig {
                d_max: spec.d,
                sketch_dim: spec.sketch_dim,
                basis: selection,
                embedding: spec.embedding,
                seed: spec.seed,
                restart: spec.restart,
                target: spec.tol,
                ..SgmresConfig::default()
            };
            let clock = Instant::now();
            let res = sgmres_iterative(&*built.op, &rhs, None, &config)?;
            let total_ms = if spec.timings {
                clock.elapsed().as_secs_f64() * 1e3
            } else {
                0.0
            };
            let mut history: Vec<RunRow> = res
                .history
                .iter()
                .map(|rec| RunRow {
                    iter: rec.iter,
                    r_est: rec.r_est,
                    true_res: rec.true_residual,
                    cond: rec.cond,
                    ms: 0.0,
                })
                .collect();
            if let Some(last) = history.last_mut() {
                last.ms = total_ms;
            }
            RunRecord {
                problem: built.id.clone(),
                method: spec.method.name().into(),
                d: spec.d,
                seed: spec.seed,
                history,
                summary: RunSummary {
                    final_r_est: res.r_est,
                    final_true_res: res.true_residual,
                    rhs_norm,
                    converged: res.converged,
                    unreliable: res.unreliable,
                    restarts: res.restarts,
                    basis_dim: res.basis_dim,
                    sketch_dim: res.sketch_dim,
                    total_ms,
                },
            }
            .with_warnings(res.warnings)
        }
        SolveMethod::Gmres => {
            let clock = Instant::now();
            let res = gmres_baseline(&*built.op, &rhs, None, spec.d, spec.tol)?;
            let total_ms = if spec.timings {
                clock.elapsed().as_secs_f64() * 1e3
            } else {
                0.0
            };
            let ax = built.op.apply_vec(&res.x);
            let true_res = norm2(
                &rhs.iter()
                    .zip(&ax)
                    .map(|(b, a)| b - a)
                    .collect::<Vec<f64>>(),
            );
            let iterations = res.iterations;
            let mut history: Vec<RunRow> = res.residual_history[1..]
                .iter()
                .enumerate()
                .map(|(i, &r)| RunRow {
                    iter: i + 1,
                    r_est: r,
                    true_res: None,
                    cond: None,
                    ms: 0.0,
                })
                .collect();
            if let Some(last) = history.last_mut() {
                last.true_res = Some(true_res);
                last.ms = total_ms;
            }
            RunRecord {
                problem: built.id.clone(),
                method: spec.method.name().into(),
                d: spec.d,
                seed: spec.seed,
                history,
                summary: RunSummary {
                    final_r_est: res.residual_history.last().copied().unwrap_or(rhs_norm),
                    final_true_res: true_res,
                    rhs_norm,
                    converged: res.converged,
                    unreliable: false,
                    restarts: 0,
                    basis_dim: iterations,
                    sketch_dim: 0,
                    total_ms,
                },
            }
            .with_warnings(Vec::new())
        }
    };

    let (record, warnings) = record;
    let exit_code = if record.summary.converged && !record.summary.unreliable {
        0
    } else {
        2
    };
    let output = match format {
        OutputFormat::Csv => render_solve_csv(&record),
        OutputFormat::Json => render_json(&record)?,
    };
    Ok(CommandOutcome {
        output,
        warnings,
        exit_code,
    })
}

impl RunRecord {
    fn with_warnings(self, warnings: Vec<String>) -> (RunRecord, Vec<String>) {
        (self, warnings)
    }
}

/// Flags of an eigen run, already typed.
pub struct EigSpec {
    pub problem: Problem,
    pub method: EigMethod,
    pub basis: BasisChoice,
    pub d: usize,
    pub block: usize,
    pub depth: usize,
    pub tau: f64,
    pub seed: u64,
    pub symmetric: bool,
    pub sketch_dim: Option<usize>,
    pub embedding: EmbeddingKind,
    pub start: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EigMethod {
    Srr,
    SrrStab,
    Rr,
}

impl EigMethod {
    fn name(self) -> &'static str {
        match self {
            EigMethod::Srr => "srr",
            EigMethod::SrrStab => "srrstab",
            EigMethod::Rr => "rr",
        }
    }
}

/// One accepted eigenpair row.
#[derive(Debug, Clone, Serialize)]
pub struct EigPairRow {
    pub theta_re: f64,
    pub theta_im: f64,
    pub r_est: f64,
}

/// Summary of an eigen run.
#[derive(Debug, Clone, Serialize)]
pub struct EigSummary {
    pub problem: String,
    pub method: String,
    pub basis_dim: usize,
    pub seed: u64,
    pub sketch_dim: usize,
    pub kappa_sb: f64,
    pub stabilized: bool,
    pub retained_rank: Option<usize>,
    pub tau: f64,
    pub accepted: usize,
}

/// Full record of an eigen run.
#[derive(Debug, Clone, Serialize)]
pub struct EigRecord {
    pub summary: EigSummary,
    pub pairs: Vec<EigPairRow>,
}

/// Build the Krylov basis an eigen run asks for.
fn eig_basis(spec: &EigSpec, built: &BuiltProblem) -> Result<KrylovBasis, CliError> {
    let op = &*built.op;
    let start = if spec.start == "random" {
        match &built.start {
            Some(v) => v.clone(),
            None => gaussian_vector(op.nrows(), spec.seed ^ START_SEED_SALT),
        }
    } else {
        make_rhs(&spec.start, op.nrows(), spec.seed)?
    };
    match &spec.basis {
        BasisChoice::Single(sel) => {
            if spec.d == 0 {
                return Err(CliError::Usage("--d must be positive".into()));
            }
            Ok(build_basis(op, &start, spec.d, sel, spec.seed)?)
        }
        BasisChoice::BlockChebyshev { spectral_box } => {
            if spec.block == 0 || spec.depth == 0 {
                return Err(CliError::Usage(
                    "blockcheb needs positive --block and --depth".into(),
                ));
            }
            let spectral_box = match spectral_box {
                Some(b) => *b,
                None => {
                    let resolved = resolve_basis(
                        op,
                        &BasisSelection::Chebyshev { spectral_box: None },
                        spec.depth,
                        spec.seed,
                    )?;
                    match resolved {
                        ResolvedBasis::Chebyshev { spectral_box } => spectral_box,
                        _ => unreachable!("chebyshev selection resolves to a chebyshev basis"),
                    }
                }
            };
            let omega = gaussian_matrix(op.nrows(), spec.block, spec.seed ^ START_SEED_SALT);
            Ok(block_basis(
                op,
                &omega,
                spec.depth,
                BlockVariant::Chebyshev { spectral_box },
            )?)
        }
    }
}

/// Run an eigenvalue extraction and render its record.
pub fn run_eig(spec: &EigSpec, format: OutputFormat) -> Result<CommandOutcome, CliError> {
    let built = spec.problem.build(spec.seed)?;
    let basis = eig_basis(spec, &built)?;
    let config = SrrConfig {
        sketch_dim: spec.sketch_dim,
        embedding: spec.embedding,
        seed: spec.seed,
        tau: spec.tau,
        symmetric: spec.symmetric,
        stabilize: StabilizeMode::Auto,
        ..SrrConfig::default()
    };
    let result = match spec.method {
        EigMethod::Srr => srr(&basis, &config)?,
        EigMethod::SrrStab => srr_stabilized(&basis, &config)?,
        EigMethod::Rr => rr_baseline(&basis, &config)?,
    };
    let pairs: Vec<EigPairRow> = result
        .accepted
        .iter()
        .map(|&i| {
            let p = &result.pairs[i];
            EigPairRow {
                theta_re: p.theta.re,
                theta_im: p.theta.im,
                r_est: p.r_est,
            }
        })
        .collect();
    let record = EigRecord {
        summary: EigSummary {
            problem: built.id.clone(),
            method: spec.method.name().into(),
            basis_dim: basis.dim(),
            seed: spec.seed,
            sketch_dim: result.sketch_dim,
            kappa_sb: result.kappa_sb,
            stabilized: result.stabilized,
            retained_rank: result.retained_rank,
            tau: result.tau,
            accepted: pairs.len(),
        },
        pairs,
    };
    let output = match format {
        OutputFormat::Csv => render_eig_csv(&record),
        OutputFormat::Json => render_json(&record)?,
    };
    Ok(CommandOutcome {
        output,
        warnings: result.warnings.clone(),
        exit_code: 0,
    })
}

fn fmt_opt(x: Option<f64>) -> String {
    match x {
        Some(v) => format!("{v:e}"),
        None => String::new(),
    }
}

fn render_solve_csv(record: &RunRecord) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# problem={}", record.problem);
    let _ = writeln!(out, "# method={}", record.method);
    let _ = writeln!(out, "# d={}", record.d);
    let _ = writeln!(out, "# seed={}", record.seed);
    out.push_str("iter,r_est,true_res,cond,ms\n");
    for row in &record.history {
        let _ = writeln!(
            out,
            "{},{:e},{},{},{}",
            row.iter,
            row.r_est,
            fmt_opt(row.true_res),
            fmt_opt(row.cond),
            row.ms
        );
    }
    let s = &record.summary;
    let _ = writeln!(out, "# final_r_est={:e}", s.final_r_est);
    let _ = writeln!(out, "# final_true_res={:e}", s.final_true_res);
    let _ = writeln!(out, "# rhs_norm={:e}", s.rhs_norm);
    let _ = writeln!(out, "# converged={}", s.converged);
    let _ = writeln!(out, "# unreliable={}", s.unreliable);
    let _ = writeln!(out, "# restarts={}", s.restarts);
    let _ = writeln!(out, "# basis_dim={}", s.basis_dim);
    let _ = writeln!(out, "# sketch_dim={}", s.sketch_dim);
    let _ = writeln!(out, "# total_ms={}", s.total_ms);
    out
}

fn render_eig_csv(record: &EigRecord) -> String {
    let mut out = String::new();
    let s = &record.summary;
    let _ = writeln!(out, "# problem={}", s.problem);
    let _ = writeln!(out, "# method={}", s.method);
    let _ = writeln!(out, "# basis_dim={}", s.basis_dim);
    let _ = writeln!(out, "# seed={}", s.seed);
    let _ = writeln!(out, "# sketch_dim={}", s.sketch_dim);
    let _ = writeln!(out, "# kappa_sb={:e}", s.kappa_sb);
    let _ = writeln!(out, "# stabilized={}", s.stabilized);
    let _ = writeln!(
        out,
        "# retained_rank={}",
        s.retained_rank.map_or(String::new(), |r| r.to_string())
    );
    let _ = writeln!(out, "# tau={:e}", s.tau);
    let _ = writeln!(out, "# accepted={}", s.accepted);
    out.push_str("theta_re,theta_im,r_est\n");
    for p in &record.pairs {
        let _ = writeln!(out, "{:e},{:e},{:e}", p.theta_re, p.theta_im, p.r_est);
    }
    out
}

fn render_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Usage(format!("serialization failed: {e}")))?;
    s.push('\n');
    Ok(s)
}

// ---------------------------------------------------------------------
// Benchmark mode
// ---------------------------------------------------------------------

/// Wall times of one pipeline run, split by phase. The `ls_solve` phase
/// of the sketched pipeline covers compressing the reduced matrix and
/// solving the small least-squares problem — the sketch-and-solve step —
/// which is how its cost is usually accounted; the `sketch` phase covers
/// building the embedding and sketching the right-hand side.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PhaseTimes {
    pub basis_ms: f64,
    pub sketch_ms: f64,
    pub ls_solve_ms: f64,
    pub assembly_ms: f64,
    pub total_ms: f64,
}

/// Median phase times of one benchmark point.
#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub method: String,
    pub n: usize,
    pub d: usize,
    pub basis_ms: f64,
    pub sketch_ms: f64,
    pub ls_solve_ms: f64,
    pub assembly_ms: f64,
    pub total_ms: f64,
}

impl BenchRow {
    fn phase(&self, name: &str) -> f64 {
        match name {
            "basis" => self.basis_ms,
            "sketch" => self.sketch_ms,
            "ls_solve" => self.ls_solve_ms,
            "assembly" => self.assembly_ms,
            _ => self.total_ms,
        }
    }
}

/// Fitted growth exponent of a phase against a problem parameter.
#[derive(Debug, Clone, Serialize)]
pub struct FitRow {
    pub method: String,
    pub phase: String,
    pub variable: String,
    pub exponent: f64,
}

/// Full benchmark output.
#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub fits: Vec<FitRow>,
}

/// Benchmark flags.
pub struct BenchSpec {
    /// Problem sizes for the n-sweep (grid Laplacians of side ~sqrt(n)).
    pub n_list: Vec<usize>,
    /// Basis dimensions for the d-sweep.
    pub d_list: Vec<usize>,
    /// Runs per point; medians are reported.
    pub repeat: usize,
    pub seed: u64,
    pub embedding: EmbeddingKind,
}

/// Sketched pipeline with phase instrumentation: Lanczos-style basis,
/// embedding + sketched right-hand side, sketch-and-solve least squares,
/// solution assembly. Returns the times and the assembled solution.
pub fn bench_sgmres(
    op: &dyn LinearOperator,
    rhs: &[f64],
    d: usize,
    embedding: EmbeddingKind,
    seed: u64,
) -> Result<(PhaseTimes, Vec<f64>), CliError> {
    let n = op.nrows();
    let total_clock = Instant::now();

    let clock = Instant::now();
    let basis = build_basis(op, rhs, d, &BasisSelection::Arnoldi { k: 2 }, seed)?;
    let basis_ms = clock.elapsed().as_secs_f64() * 1e3;

    let clock = Instant::now();
    let s = (2 * d + 1).min(n);
    let emb = Embedding::new(embedding, n, s, seed)?;
    let g = emb.apply_vec(rhs)?;
    let sketch_ms = clock.elapsed().as_secs_f64() * 1e3;

    let clock = Instant::now();
    let c = emb.apply_mat(&basis.ab)?;
    let qr = householder_qr(&c)?;
    let utg = qr.u.matvec_transpose(&g)?;
    let y = solve_upper_triangular(&qr.t, &utg)?;
    let ls_solve_ms = clock.elapsed().as_secs_f64() * 1e3;

    let clock = Instant::now();
    let x = basis.b.matvec(&y)?;
    let assembly_ms = clock.elapsed().as_secs_f64() * 1e3;

    let times = PhaseTimes {
        basis_ms,
        sketch_ms,
        ls_solve_ms,
        assembly_ms,
        total_ms: total_clock.elapsed().as_secs_f64() * 1e3,
    };
    Ok((times, x))
}

/// Classical GMRES pipeline with phase instrumentation: fully
/// orthogonalized Arnoldi (which also produces the Hessenberg entries),
/// small Hessenberg least-squares solve, solution assembly. No sketching.
/// Returns the times and the assembled solution.
pub fn bench_gmres(
    op: &dyn LinearOperator,
    rhs: &[f64],
    d: usize,
) -> Result<(PhaseTimes, Vec<f64>), CliError> {
    let n = op.nrows();
    let d = d.min(n).max(1);
    let total_clock = Instant::now();

    let clock = Instant::now();
    let beta = norm2(rhs);
    let mut q: Vec<Vec<f64>> = vec![rhs.iter().map(|v| v / beta).collect()];
    // Hessenberg columns, one per iteration (j+2 entries in column j).
    let mut h: Vec<Vec<f64>> = Vec::with_capacity(d);
    for j in 0..d {
        let mut w = op.apply_vec(&q[j]);
        let mut col = Vec::with_capacity(j + 2);
        for qi in q.iter().take(j + 1) {
            let hij = dot(qi, &w);
            for (wk, qk) in w.iter_mut().zip(qi) {
                *wk -= hij * qk;
            }
            col.push(hij);
        }
        let hnext = norm2(&w);
        col.push(hnext);
        h.push(col);
        if hnext == 0.0 {
            break;
        }
        for wk in &mut w {
            *wk /= hnext;
        }
        q.push(w);
    }
    let basis_ms = clock.elapsed().as_secs_f64() * 1e3;

    let clock = Instant::now();
    let m = h.len();
    // Givens reduction of the (m+1) x m Hessenberg system H y = beta e1.
    let mut r_cols: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut rotations: Vec<(f64, f64)> = Vec::with_capacity(m);
    let mut g = vec![0.0; m + 1];
    g[0] = beta;
    for (j, col) in h.iter().enumerate() {
        let mut v = col.clone();
        for (i, &(c, s)) in rotations.iter().enumerate() {
            let a = v[i];
            let b = v[i + 1];
            v[i] = c * a + s * b;
            v[i + 1] = -s * a + c * b;
        }
        let (a, b) = (v[j], v[j + 1]);
        let r = (a * a + b * b).sqrt();
        let (c, s) = if r == 0.0 { (1.0, 0.0) } else { (a / r, b / r) };
        v[j] = r;
        v[j + 1] = 0.0;
        let ga = g[j];
        let gb = g[j + 1];
        g[j] = c * ga + s * gb;
        g[j + 1] = -s * ga + c * gb;
        rotations.push((c, s));
        r_cols.push(v);
    }
    let mut y = vec![0.0; m];
    for i in (0..m).rev() {
        let mut acc = g[i];
        for (j, col) in r_cols.iter().enumerate().skip(i + 1) {
            acc -= col[i] * y[j];
        }
        y[i] = acc / r_cols[i][i];
    }
    let ls_solve_ms = clock.elapsed().as_secs_f64() * 1e3;

    let clock = Instant::now();
    let mut x = vec![0.0; n];
    for (j, yj) in y.iter().enumerate() {
        for (xi, qi) in x.iter_mut().zip(&q[j]) {
            *xi += yj * qi;
        }
    }
    let assembly_ms = clock.elapsed().as_secs_f64() * 1e3;

    let times = PhaseTimes {
        basis_ms,
        sketch_ms: 0.0,
        ls_solve_ms,
        assembly_ms,
        total_ms: total_clock.elapsed().as_secs_f64() * 1e3,
    };
    Ok((times, x))
}

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(|a, b| a.total_cmp(b));
    let k = xs.len();
    if k == 0 {
        return 0.0;
    }
    if k % 2 == 1 {
        xs[k / 2]
    } else {
        0.5 * (xs[k / 2 - 1] + xs[k / 2])
    }
}

/// Least-squares slope of log(t) against log(x): the growth exponent of
/// a phase time in a problem parameter.
pub fn fit_exponent(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 || points.iter().any(|&(x, t)| x <= 0.0 || t <= 0.0) {
        return None;
    }
    let k = points.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(x, t) in points {
        let lx = x.ln();
        let lt = t.ln();
        sx += lx;
        sy += lt;
        sxx += lx * lx;
        sxy += lx * lt;
    }
    let denom = k * sxx - sx * sx;
    if denom == 0.0 {
        return None;
    }
    Some((k * sxy - sx * sy) / denom)
}

const BENCH_PHASES: [&str; 4] = ["basis", "sketch", "ls_solve", "assembly"];

fn bench_point(
    method: &str,
    n_req: usize,
    d: usize,
    spec: &BenchSpec,
) -> Result<BenchRow, CliError> {
    let m = (n_req as f64).sqrt().round().max(1.0) as usize;
    let op = laplacian_2d(m);
    let n = op.nrows();
    let rhs = gaussian_vector(n, spec.seed ^ RHS_SEED_SALT);
    let mut samples: Vec<PhaseTimes> = Vec::with_capacity(spec.repeat);
    for rep in 0..spec.repeat.max(1) {
        let seed = spec.seed.wrapping_add(rep as u64);
        let (t, _x) = match method {
            "sgmres" => bench_sgmres(&op, &rhs, d, spec.embedding, seed)?,
            _ => bench_gmres(&op, &rhs, d)?,
        };
        samples.push(t);
    }
    let pick = |f: fn(&PhaseTimes) -> f64| {
        let mut v: Vec<f64> = samples.iter().map(f).collect();
        median(&mut v)
    };
    Ok(BenchRow {
        method: method.into(),
        n,
        d,
        basis_ms: pick(|t| t.basis_ms),
        sketch_ms: pick(|t| t.sketch_ms),
        ls_solve_ms: pick(|t| t.ls_solve_ms),
        assembly_ms: pick(|t| t.assembly_ms),
        total_ms: pick(|t| t.total_ms),
    })
}

/// Run the full benchmark: an n-sweep at the first basis dimension and a
/// d-sweep at the first problem size, for both solvers, with growth
/// exponents fitted per phase.
pub fn run_bench(spec: &BenchSpec) -> Result<BenchReport, CliError> {
    if spec.n_list.is_empty() || spec.d_list.is_empty() {
        return Err(CliError::Usage("--n-list and --d-list must be nonempty".into()));
    }
    let d0 = spec.d_list[0];
    let n0 = spec.n_list[0];
    let mut rows: Vec<BenchRow> = Vec::new();
    for method in ["sgmres", "gmres"] {
        for &n in &spec.n_list {
            rows.push(bench_point(method, n, d0, spec)?);
        }
        for &d in &spec.d_list {
            if d == d0 {
                continue; // the sweep corner is already covered
            }
            rows.push(bench_point(method, n0, d, spec)?);
        }
    }

    let m0 = (n0 as f64).sqrt().round().max(1.0) as usize;
    let n0_actual = m0 * m0;
    let mut fits = Vec::new();
    for method in ["sgmres", "gmres"] {
        for phase in BENCH_PHASES {
            let n_points: Vec<(f64, f64)> = rows
                .iter()
                .filter(|r| r.method == method && r.d == d0)
                .map(|r| (r.n as f64, r.phase(phase)))
                .collect();
            if let Some(exp) = fit_exponent(&n_points) {
                fits.push(FitRow {
                    method: method.into(),
                    phase: phase.into(),
                    variable: "n".into(),
                    exponent: exp,
                });
            }
            let d_points: Vec<(f64, f64)> = rows
                .iter()
                .filter(|r| r.method == method && r.n == n0_actual)
                .map(|r| (r.d as f64, r.phase(phase)))
                .collect();
            if let Some(exp) = fit_exponent(&d_points) {
                fits.push(FitRow {
                    method: method.into(),
                    phase: phase.into(),
                    variable: "d".into(),
                    exponent: exp,
                });
            }
        }
    }
    Ok(BenchReport { rows, fits })
}

/// Render a benchmark report as CSV (one row per point, fits as trailing
/// comments).
pub fn render_bench_csv(report: &BenchReport) -> String {
    let mut out = String::new();
    out.push_str("method,n,d,basis_ms,sketch_ms,ls_solve_ms,assembly_ms,total_ms\n");
    for r in &report.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.method, r.n, r.d, r.basis_ms, r.sketch_ms, r.ls_solve_ms, r.assembly_ms, r.total_ms
        );
    }
    for f in &report.fits {
        let _ = writeln!(
            out,
            "# fit method={} phase={} variable={} exponent={:.3}",
            f.method, f.phase, f.variable, f.exponent
        );
    }
    out
}

/// Render a benchmark report as JSON.
pub fn render_bench_json(report: &BenchReport) -> Result<String, CliError> {
    render_json(report)
}
