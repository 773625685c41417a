// Negated comparisons are used deliberately so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod error;
mod output;

use config::{Overrides, RunConfig, GRID_ENV};
use error::{CliError, EXIT_VALIDATION};

/// Stealthiness-distortion tradeoff curves and worst-case attack synthesis
#[derive(Parser, Debug)]
#[command(version, about)]
struct Cli {
    /// JSON run configuration
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (overrides the config)
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Frequency grid size, a power of two >= 64 (overrides STEALTHCURVE_GRID_N and the config)
    #[arg(long, global = true)]
    grid_n: Option<usize>,

    /// Random seed (overrides simulation.seed)
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve every target and write curve.csv, spectrum_<i>.csv and report.json
    Tradeoff,
    /// Check the spectral solution against the finite-horizon oracle and Monte Carlo runs
    Verify,
    /// Write one worst-case attack realization and its spectrum
    Synthesize,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let path = cli.config.ok_or_else(|| CliError::validation("config", "--config PATH is required"))?;
    let overrides = Overrides {
        grid_n: cli.grid_n,
        env_grid_n: std::env::var(GRID_ENV).ok().filter(|v| !v.trim().is_empty()),
        seed: cli.seed,
        out: cli.out,
    };
    let config = RunConfig::load(&path)?.resolve(&overrides)?;
    let report = match cli.command {
        Command::Tradeoff => commands::tradeoff(config)?,
        Command::Verify => commands::verify(config)?,
        Command::Synthesize => commands::synthesize(config)?,
    };
    let dir = report.config.out_dir();
    println!("{}: wrote {} and report.json to {}", report.command, report.files.join(", "), dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(EXIT_VALIDATION);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let info = e.info();
            eprintln!("{}", serde_json::json!({ "error": info }));
            eprintln!("error: {e}");
            ExitCode::from(info.exit_code)
        }
    }
}
