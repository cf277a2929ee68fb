//! `monobox` command line: solve positions from head-map fixtures, run
//! gradient checks, generate synthetic fixtures, evaluate detections,
//! sweep position error against keypoint count, and demo the consistency
//! loss. Reports are CSV or JSON.
//!
//! Exit codes: 0 success, 1 check failure, 2 input error, 3 numeric
//! degeneracy.

mod augspec;
mod commands;
mod report;

use clap::{Parser, Subcommand};

/// Default seed when neither `--seed` nor `MONOBOX_SEED` is set.
const DEFAULT_SEED: u64 = 42;

#[derive(Parser)]
#[command(
    name = "monobox",
    version,
    about = "Keypoint-based monocular 3D box toolkit"
)]
struct Cli {
    /// RNG seed (overrides the MONOBOX_SEED environment variable).
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decode a head-map fixture and solve object positions.
    Solve(commands::solve::Args),
    /// Check analytic position gradients against finite differences.
    Gradcheck(commands::gradcheck::Args),
    /// Generate a synthetic fixture (head maps + calibration + labels).
    Fixture(commands::fixture::Args),
    /// Evaluate detection files against ground truth.
    Eval(commands::eval::Args),
    /// Sweep position error against kept-keypoint count and noise.
    Extreme(commands::extreme::Args),
    /// Consistency loss between two augmented views of a fixture.
    Consistency(commands::consistency::Args),
}

/// Failure classes mapped onto the exit-code contract.
#[derive(Debug)]
pub enum CliError {
    /// A verification failed (exit 1).
    Check(String),
    /// Unreadable or inconsistent inputs (exit 2).
    Input(String),
    /// Degenerate geometry (exit 3).
    Degenerate(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Check(_) => 1,
            CliError::Input(_) => 2,
            CliError::Degenerate(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Check(m) | CliError::Input(m) | CliError::Degenerate(m) => m,
        }
    }
}

fn resolve_seed(arg: Option<u64>) -> u64 {
    arg.or_else(|| {
        std::env::var("MONOBOX_SEED")
            .ok()
            .and_then(|s| s.parse().ok())
    })
    .unwrap_or(DEFAULT_SEED)
}

fn main() {
    let cli = Cli::parse();
    let seed = resolve_seed(cli.seed);
    let result = match cli.command {
        Command::Solve(args) => commands::solve::run(args, seed),
        Command::Gradcheck(args) => commands::gradcheck::run(args, seed),
        Command::Fixture(args) => commands::fixture::run(args, seed),
        Command::Eval(args) => commands::eval::run(args),
        Command::Extreme(args) => commands::extreme::run(args, seed),
        Command::Consistency(args) => commands::consistency::run(args, seed),
    };
    if let Err(err) = result {
        eprintln!("error: {}", err.message());
        std::process::exit(err.exit_code());
    }
}
