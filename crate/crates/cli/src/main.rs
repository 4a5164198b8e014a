//! `sketchy` — run the sketched solvers and their classical baselines on
//! generated or MatrixMarket problems, writing convergence and timing
//! records as CSV or JSON.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 conditioning failure
//! or an unconverged solve. Warnings go to stderr as `WARN:` lines. The
//! environment variable `SKETCHY_SEED` overrides any `--seed` flag.

use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

use sketchy::basis::SpectralBox;
use sketchy::sgmres::RestartPolicy;
use sketchy::sketch::EmbeddingKind;

use sketchy_cli::{
    parse_basis, problem_from_flags, run_bench, run_eig, run_solve, render_bench_csv,
    render_bench_json, BenchSpec, CliError, CommandOutcome, EigMethod, EigSpec, OutputFormat,
    SolveMethod, SolveSpec,
};

#[derive(Parser)]
#[command(
    name = "sketchy",
    about = "Sketched Krylov solvers benchmark harness",
    version
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve a linear system with sGMRES or the GMRES baseline.
    Solve(SolveArgs),
    /// Extract eigenpairs with sketched or classical Rayleigh-Ritz.
    Eig(EigArgs),
    /// Sweep problem sizes and basis dimensions, timing each phase.
    Bench(BenchArgs),
}

#[derive(Args)]
struct ProblemArgs {
    /// MatrixMarket coordinate file with a square matrix.
    #[arg(long)]
    matrix: Option<PathBuf>,
    /// Generated problem: laplacian2d:<m>, trs:<n> or planted:<n>.
    #[arg(long)]
    gen: Option<String>,
}

#[derive(Args)]
struct OutputArgs {
    /// Output file (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output format.
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Right-hand side: "random" or a file of numbers.
    #[arg(long, default_value = "random")]
    rhs: String,
    #[arg(long, value_enum, default_value_t = SolveMethodArg::Sgmres)]
    method: SolveMethodArg,
    /// Basis recurrence: arnoldi:<k>, lanczos, chebyshev, newton, monomial.
    #[arg(long, default_value = "arnoldi:2")]
    basis: String,
    /// Basis dimension (iterations).
    #[arg(long, default_value_t = 50)]
    d: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Reaction to an ill-conditioned sketched factor.
    #[arg(long, value_enum, default_value_t = RestartArg::None)]
    restart: RestartArg,
    /// Relative residual target.
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    /// Embedding rows (default 2d+1 clamped to n).
    #[arg(long)]
    sketch_dim: Option<usize>,
    #[arg(long, value_enum, default_value_t = EmbeddingArg::Trig)]
    embedding: EmbeddingArg,
    /// Spectral box lo,hi for the Chebyshev recurrence.
    #[arg(long = "box", value_name = "LO,HI")]
    spectral_box: Option<String>,
    /// Record real wall times (output is no longer run-to-run identical).
    #[arg(long)]
    timings: bool,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct EigArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long, value_enum, default_value_t = EigMethodArg::Srr)]
    method: EigMethodArg,
    /// Basis recurrence: arnoldi:<k>, lanczos, chebyshev, newton,
    /// monomial or blockcheb.
    #[arg(long, default_value = "lanczos")]
    basis: String,
    /// Basis dimension (single-vector recurrences).
    #[arg(long, default_value_t = 50)]
    d: usize,
    /// Block size for blockcheb.
    #[arg(long, default_value_t = 4)]
    block: usize,
    /// Depth (number of blocks) for blockcheb.
    #[arg(long, default_value_t = 10)]
    depth: usize,
    /// Residual acceptance threshold.
    #[arg(long, default_value_t = 1e-6)]
    tau: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Realify estimates of a symmetric operator.
    #[arg(long)]
    symmetric: bool,
    /// Embedding rows (default 4d clamped to n).
    #[arg(long)]
    sketch_dim: Option<usize>,
    #[arg(long, value_enum, default_value_t = EmbeddingArg::Trig)]
    embedding: EmbeddingArg,
    /// Spectral box lo,hi for the Chebyshev recurrences.
    #[arg(long = "box", value_name = "LO,HI")]
    spectral_box: Option<String>,
    /// Start vector: "random" or a file of numbers.
    #[arg(long, default_value = "random")]
    rhs: String,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct BenchArgs {
    /// Problem sizes for the n-sweep (grid Laplacians of side ~sqrt n).
    #[arg(long = "n-list", value_delimiter = ',', default_value = "16384,65536,262144")]
    n_list: Vec<usize>,
    /// Basis dimensions for the d-sweep.
    #[arg(long = "d-list", value_delimiter = ',', default_value = "50,100,200")]
    d_list: Vec<usize>,
    /// Runs per point (medians are reported).
    #[arg(long, default_value_t = 3)]
    repeat: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = EmbeddingArg::Trig)]
    embedding: EmbeddingArg,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolveMethodArg {
    Sgmres,
    Gmres,
}

#[derive(Clone, Copy, ValueEnum)]
enum EigMethodArg {
    Srr,
    Srrstab,
    Rr,
}

#[derive(Clone, Copy, ValueEnum)]
enum RestartArg {
    None,
    Adaptive,
    Whiten,
}

#[derive(Clone, Copy, ValueEnum)]
enum EmbeddingArg {
    Trig,
    Sparse,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

impl From<EmbeddingArg> for EmbeddingKind {
    fn from(v: EmbeddingArg) -> Self {
        match v {
            EmbeddingArg::Trig => EmbeddingKind::Trig,
            EmbeddingArg::Sparse => EmbeddingKind::Sparse,
        }
    }
}

impl From<RestartArg> for RestartPolicy {
    fn from(v: RestartArg) -> Self {
        match v {
            RestartArg::None => RestartPolicy::None,
            RestartArg::Adaptive => RestartPolicy::Adaptive,
            RestartArg::Whiten => RestartPolicy::Whiten,
        }
    }
}

impl From<FormatArg> for OutputFormat {
    fn from(v: FormatArg) -> Self {
        match v {
            FormatArg::Csv => OutputFormat::Csv,
            FormatArg::Json => OutputFormat::Json,
        }
    }
}

fn parse_box(spec: Option<&str>) -> Result<Option<SpectralBox>, CliError> {
    let Some(spec) = spec else { return Ok(None) };
    let parts: Vec<&str> = spec.split(',').collect();
    if parts.len() != 2 {
        return Err(CliError::Usage(format!("--box {spec}: expected lo,hi")));
    }
    let lo: f64 = parts[0]
        .trim()
        .parse()
        .map_err(|_| CliError::Usage(format!("--box {spec}: bad number {}", parts[0])))?;
    let hi: f64 = parts[1]
        .trim()
        .parse()
        .map_err(|_| CliError::Usage(format!("--box {spec}: bad number {}", parts[1])))?;
    if !(lo < hi) {
        return Err(CliError::Usage(format!("--box {spec}: needs lo < hi")));
    }
    Ok(Some(SpectralBox::real_interval(lo, hi)))
}

/// `SKETCHY_SEED` overrides any `--seed` flag when set.
fn seed_override(flag: u64) -> Result<u64, CliError> {
    match std::env::var("SKETCHY_SEED") {
        Ok(v) => v
            .parse()
            .map_err(|_| CliError::Usage(format!("SKETCHY_SEED={v}: not an integer seed"))),
        Err(_) => Ok(flag),
    }
}

fn write_output(path: Option<&PathBuf>, content: &str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, content).map_err(|source| CliError::Io {
            path: p.clone(),
            source,
        }),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn dispatch(cli: Cli) -> Result<i32, CliError> {
    match cli.cmd {
        Cmd::Solve(args) => {
            let spec = SolveSpec {
                problem: problem_from_flags(args.problem.matrix.as_deref(), args.problem.gen.as_deref())?,
                rhs: args.rhs,
                method: match args.method {
                    SolveMethodArg::Sgmres => SolveMethod::Sgmres,
                    SolveMethodArg::Gmres => SolveMethod::Gmres,
                },
                basis: parse_basis(&args.basis, parse_box(args.spectral_box.as_deref())?)?,
                d: args.d,
                seed: seed_override(args.seed)?,
                restart: args.restart.into(),
                tol: args.tol,
                sketch_dim: args.sketch_dim,
                embedding: args.embedding.into(),
                timings: args.timings,
            };
            let outcome = run_solve(&spec, args.output.format.into())?;
            finish(outcome, args.output.out.as_ref())
        }
        Cmd::Eig(args) => {
            let spec = EigSpec {
                problem: problem_from_flags(args.problem.matrix.as_deref(), args.problem.gen.as_deref())?,
                method: match args.method {
                    EigMethodArg::Srr => EigMethod::Srr,
                    EigMethodArg::Srrstab => EigMethod::SrrStab,
                    EigMethodArg::Rr => EigMethod::Rr,
                },
                basis: parse_basis(&args.basis, parse_box(args.spectral_box.as_deref())?)?,
                d: args.d,
                block: args.block,
                depth: args.depth,
                tau: args.tau,
                seed: seed_override(args.seed)?,
                symmetric: args.symmetric,
                sketch_dim: args.sketch_dim,
                embedding: args.embedding.into(),
                start: args.rhs,
            };
            let outcome = run_eig(&spec, args.output.format.into())?;
            finish(outcome, args.output.out.as_ref())
        }
        Cmd::Bench(args) => {
            let spec = BenchSpec {
                n_list: args.n_list,
                d_list: args.d_list,
                repeat: args.repeat,
                seed: seed_override(args.seed)?,
                embedding: args.embedding.into(),
            };
            let report = run_bench(&spec)?;
            let output = match args.output.format {
                FormatArg::Csv => render_bench_csv(&report),
                FormatArg::Json => render_bench_json(&report)?,
            };
            write_output(args.output.out.as_ref(), &output)?;
            Ok(0)
        }
    }
}

fn finish(outcome: CommandOutcome, out: Option<&PathBuf>) -> Result<i32, CliError> {
    for w in &outcome.warnings {
        eprintln!("WARN: {w}");
    }
    write_output(out, &outcome.output)?;
    Ok(outcome.exit_code)
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    match dispatch(cli) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
