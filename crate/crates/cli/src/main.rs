//! `sls`: command-line front end for system level synthesis.
//!
//! Exit codes: 0 success, 2 a negative verdict (infeasible synthesis,
//! failed verification, pattern not QI), 1 any error.

/// Prints to stdout, ignoring a closed pipe.
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout().lock(), $($arg)*);
    }};
}

mod commands;
mod config;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use commands::{Globals, Outcome};

#[derive(Parser)]
#[command(name = "sls", version, about = "System level synthesis toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads (default: solver.threads, else all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Verification and monotonicity tolerance (default: solver.tol).
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Seed for random perturbations.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize one response and write it with a cost summary.
    Synth,
    /// Solve every point of the [sweep] grid and write sweep.csv.
    Sweep,
    /// Realize a controller and simulate the closed loop.
    Simulate {
        /// Use a stored response instead of synthesizing.
        #[arg(long)]
        response: Option<PathBuf>,
    },
    /// Check a stored response for achievability and internal stability.
    Verify {
        #[arg(long)]
        response: PathBuf,
    },
    /// Test quadratic invariance of a controller pattern under a plant pattern.
    QiCheck {
        /// Controller pattern, 0/1 CSV (inputs x outputs).
        #[arg(long)]
        k: PathBuf,
        /// Plant pattern, 0/1 CSV (outputs x inputs).
        #[arg(long)]
        p: PathBuf,
    },
}

fn run(cli: Cli) -> Result<Outcome> {
    let loaded = cli.config.as_deref().map(config::load).transpose()?;
    let threads = cli
        .threads
        .or_else(|| loaded.as_ref().and_then(|l| l.config.solver.threads));
    if let Some(t) = threads {
        anyhow::ensure!(t > 0, "--threads must be positive");
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global()?;
    }
    let tol = cli
        .tol
        .or_else(|| loaded.as_ref().map(|l| l.config.solver.tol))
        .unwrap_or(1e-8);
    anyhow::ensure!(tol > 0.0 && tol.is_finite(), "--tol must be positive");
    let g = Globals {
        out: cli.out,
        tol,
        seed: cli.seed,
    };
    let need = || loaded.as_ref().context("this command needs --config");
    match &cli.command {
        Command::Synth => commands::synth(need()?, &g),
        Command::Sweep => commands::sweep(need()?, &g),
        Command::Simulate { response } => commands::run_simulation(need()?, &g, response.as_deref()),
        Command::Verify { response } => commands::verify(need()?, &g, response),
        Command::QiCheck { k, p } => commands::qi_check(k, p),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::Fail) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
