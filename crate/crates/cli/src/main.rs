//! `trinet`: command-line front end for the inflation bounds, the exact
//! certifier and the grid local-model lab.

mod commands;
mod numbers;
mod output;
mod region;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;
use trinet::bound::{BoundError, Direction};
use trinet::certify::CertifyError;
use trinet::constraint::{ConstraintError, Factorization, Mode};
use trinet::local::LocalError;
use trinet::{OpiError, OrbitError};

/// Polygon sizes the commands accept.
const SIZES: std::ops::RangeInclusive<i64> = 3..=9;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}", path = .0.display(), source = .1)]
    Io(PathBuf, #[source] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Orbit(#[from] OrbitError),
    #[error(transparent)]
    Opi(#[from] OpiError),
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
    #[error(transparent)]
    Bound(#[from] BoundError),
    #[error(transparent)]
    Certify(#[from] CertifyError),
    #[error(transparent)]
    Local(#[from] LocalError),
    #[error("{0}")]
    NotConverged(String),
    #[error("{0} saturating OPI strategies found")]
    Found(usize),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Opi(_) | CliError::Orbit(_) => 2,
            CliError::Constraint(ConstraintError::Orbit(_)) => 2,
            CliError::Local(LocalError::EmptyGrid(_) | LocalError::TooLarge(_)) => 2,
            CliError::Bound(BoundError::FitFailed(_)) => 2,
            CliError::NotConverged(_) | CliError::Local(LocalError::BudgetExceeded(_)) => 3,
            CliError::Certify(CertifyError::Constraint(_) | CertifyError::Bound(_)) => 1,
            CliError::Certify(_) => 4,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "trinet", version, about = "Inflation bounds and local models for the symmetric four-output triangle")]
struct Cli {
    /// Write the run manifest here (defaults to `<out>.manifest.json` when
    /// `--out` is given).
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum RuleArg {
    Cyclic,
    SegmentJoin,
}

impl From<RuleArg> for Factorization {
    fn from(r: RuleArg) -> Self {
        match r {
            RuleArg::Cyclic => Factorization::Cyclic,
            RuleArg::SegmentJoin => Factorization::SegmentJoin,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Single,
    Cumulative,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Single => Mode::Single,
            ModeArg::Cumulative => Mode::Cumulative,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DirectionArg {
    Max,
    Min,
}

impl From<DirectionArg> for Direction {
    fn from(d: DirectionArg) -> Self {
        match d {
            DirectionArg::Max => Direction::Max,
            DirectionArg::Min => Direction::Min,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Text,
    Json,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum RegionDirection {
    Max,
    Min,
    Both,
}

#[derive(Debug, Args)]
struct SlpArgs {
    #[arg(long, value_enum, default_value = "single")]
    mode: ModeArg,
    #[arg(long, value_enum, default_value = "max")]
    direction: DirectionArg,
    /// Convergence threshold on the change of the linearization point.
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, default_value_t = 200)]
    max_iter: usize,
    /// Stop after this many seconds and report the run as not converged.
    #[arg(long)]
    time_limit: Option<f64>,
    /// Append every result as one JSON line to this file.
    #[arg(long)]
    ledger: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Word orbits, outcome orbits and constraints of one polygon.
    Enumerate {
        #[arg(long, value_parser = clap::value_parser!(i64).range(SIZES))]
        n: i64,
        /// Block factorization used for the linear and quadratic constraints.
        #[arg(long, value_enum, default_value = "cyclic")]
        rule: RuleArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Numerical bound on the pair correlator by successive linear programming.
    Bound {
        #[arg(long, value_parser = clap::value_parser!(i64).range(SIZES))]
        n: i64,
        #[command(flatten)]
        slp: SlpArgs,
        /// Starting estimate of the objective.
        #[arg(long, allow_hyphen_values = true)]
        ebar: Option<f64>,
        /// Rewrite the linearization state to this file after every iteration.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Continue from a state written by `--checkpoint`.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Bounds for a range of polygon sizes, each seeded with the previous one.
    Curve {
        #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(i64).range(SIZES))]
        from: i64,
        #[arg(long, value_parser = clap::value_parser!(i64).range(SIZES))]
        to: i64,
        #[command(flatten)]
        slp: SlpArgs,
    },
    /// Fit `a + b exp(-c n)` to a bound series.
    #[command(group(ArgGroup::new("source").required(true).args(["ledger", "values"])))]
    Fit {
        /// Bound ledger to read (the latest entry per polygon is used).
        #[arg(long)]
        ledger: Option<PathBuf>,
        /// Comma-separated bounds for consecutive polygon sizes.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        values: Option<Vec<f64>>,
        /// Polygon size of the first entry of `--values`.
        #[arg(long, default_value_t = 3)]
        start: usize,
        #[arg(long, value_enum, default_value = "cumulative")]
        mode: ModeArg,
        #[arg(long, value_enum, default_value = "max")]
        direction: DirectionArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact value of the single-polygon maximum.
    Certify {
        #[arg(long, value_parser = clap::value_parser!(i64).range(SIZES))]
        n: i64,
        #[arg(long, value_enum, default_value = "text")]
        format: FormatArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Outcome-by-correlator matrix as CSV.
    Matrix {
        #[arg(long, value_parser = clap::value_parser!(i64).range(SIZES))]
        n: i64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Geometry of the correlator plane: positivity edges, Finner segment,
    /// landmarks and bound lines.
    Region {
        #[arg(long, default_value_t = 9, value_parser = clap::value_parser!(i64).range(SIZES))]
        max_n: i64,
        /// Bounds to draw (cumulative mode).
        #[arg(long, value_enum, default_value = "both")]
        direction: RegionDirection,
        /// Reuse bounds from this ledger; missing ones are computed and appended.
        #[arg(long)]
        ledger: Option<PathBuf>,
        /// Extra landmark `e2,e3o` labelled `ejm`.
        #[arg(long, allow_hyphen_values = true)]
        ejm: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate grid local models and record their correlators.
    Scan {
        #[arg(long)]
        k: usize,
        /// Number of random strategies; every strategy when absent.
        #[arg(long)]
        samples: Option<u64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Search grid local models for an OPI point saturating Finner.
    VerifyTheorem {
        #[arg(long)]
        k: usize,
        /// Strategies to evaluate before stopping with a checkpoint.
        #[arg(long)]
        budget: Option<u64>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Finner margin and coordinate conversions of an OPI point.
    #[command(group(ArgGroup::new("point").required(true).args(["p", "e"])))]
    Finner {
        /// `p111,p112,p123`; decimals or fractions.
        #[arg(long, allow_hyphen_values = true)]
        p: Option<String>,
        /// `e2,e3o`; decimals or fractions.
        #[arg(long, allow_hyphen_values = true)]
        e: Option<String>,
    },
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("TRINET_THREADS") else { return Ok(()) };
    let n: usize =
        v.trim().parse().map_err(|_| CliError::Usage(format!("TRINET_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Usage(format!("thread pool: {e}")))
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    let manifest = cli.manifest;
    match cli.command {
        Command::Enumerate { n, rule, out } => commands::enumerate(n as usize, rule.into(), out, manifest),
        Command::Bound { n, slp, ebar, checkpoint, resume } => {
            commands::bound(n as usize, &slp, ebar, checkpoint, resume, manifest)
        }
        Command::Curve { from, to, slp } => commands::curve(from as usize, to as usize, &slp, manifest),
        Command::Fit { ledger, values, start, mode, direction, out } => {
            commands::fit(ledger, values, start, mode.into(), direction.into(), out, manifest)
        }
        Command::Certify { n, format, out } => commands::certify(n as usize, format, out, manifest),
        Command::Matrix { n, out } => commands::matrix(n as usize, out, manifest),
        Command::Region { max_n, direction, ledger, ejm, out } => {
            region::run(max_n as usize, direction, ledger, ejm, out, manifest)
        }
        Command::Scan { k, samples, seed, out } => commands::scan(k, samples, seed, out, manifest),
        Command::VerifyTheorem { k, budget, checkpoint, resume } => {
            commands::verify_theorem(k, budget, checkpoint, resume, manifest)
        }
        Command::Finner { p, e } => commands::finner(p, e, manifest),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
