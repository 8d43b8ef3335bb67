//! `wfpc <command> --config <path> --out <dir> [--jobs N] [--seed S]`

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "wfpc", version, about = "Penalized optimal control of the Fokker-Planck equation under a constraint on the law")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One penalized solve at the configured (epsilon, delta).
    Solve(Args),
    /// Penalized solves over the configured epsilon/delta lists.
    Sweep(Args),
    /// Particle steering flow over several seeds.
    Steer(Args),
    /// Particle-versus-grid comparisons and the Ito-formula check.
    Oracle(Args),
    /// Structural invariant suite on the built-in catalog.
    Check(Args),
}

#[derive(clap::Args, Clone)]
pub struct Args {
    /// TOML experiment file; optional for `check`.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads for sweeps and particle loops.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Overrides `[particles] seed`.
    #[arg(long)]
    seed: Option<u64>,
}

/// Why a command stopped: bad input (exit 2) or a solver-side failure
/// (exit 1).
#[derive(Debug)]
pub enum Failure {
    Invalid(String),
    Solver(String),
}

impl From<wfpc_core::Error> for Failure {
    fn from(e: wfpc_core::Error) -> Self {
        match e {
            wfpc_core::Error::InvalidInput(m) => Failure::Invalid(m),
            other => Failure::Solver(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Solver(format!("i/o: {e}"))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (args, run): (&Args, fn(&Args) -> Result<(), Failure>) = match &cli.command {
        Command::Solve(a) => (a, commands::solve),
        Command::Sweep(a) => (a, commands::sweep),
        Command::Steer(a) => (a, commands::steer),
        Command::Oracle(a) => (a, commands::oracle),
        Command::Check(a) => (a, commands::check),
    };
    let threads = rayon::ThreadPoolBuilder::new().num_threads(args.jobs.max(1)).build_global();
    if let Err(e) = threads {
        eprintln!("error: thread pool: {e}");
        return ExitCode::from(2);
    }
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(m)) => {
            eprintln!("invalid input: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Solver(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
