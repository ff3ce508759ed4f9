//! Command-line surface of the bifurcation toolkit.
//!
//! Exit codes: 0 success, 2 configuration or validation error,
//! 3 numerical failure, 4 inconclusive classification.

mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "hombif",
    about = "Detection and global continuation of homoclinic bifurcations via exponential dichotomies and a global Evans function",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Path to the TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (overrides the config key).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Lower end of the λ window (overrides the config key).
    #[arg(long, global = true, allow_negative_numbers = true)]
    lambda_min: Option<f64>,

    /// Upper end of the λ window (overrides the config key).
    #[arg(long, global = true, allow_negative_numbers = true)]
    lambda_max: Option<f64>,

    /// Grid step of the λ sweep (overrides the config key).
    #[arg(long, global = true)]
    grid_step: Option<f64>,

    /// Dichotomy horizon (overrides the config key).
    #[arg(long, global = true)]
    horizon: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep the Evans function over the λ grid and record critical values.
    Scan,
    /// Certify sign changes, touch-zeros and endpoint parity; build the cover.
    Bifurcations,
    /// Switch onto a branch at seed-lambda and continue it.
    Branch,
    /// Re-evaluate the classification of a recorded continuum.
    Classify,
    /// Compare the numerical pipeline against the built-in closed forms.
    VerifyExample,
    /// Report dichotomy subspaces, constants and index checks per λ sample.
    Dichotomy,
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Scan => "scan",
        Command::Bifurcations => "bifurcations",
        Command::Branch => "branch",
        Command::Classify => "classify",
        Command::VerifyExample => "verify-example",
        Command::Dichotomy => "dichotomy",
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config_path = match &cli.config {
        Some(p) => p.clone(),
        None => {
            eprintln!("error: --config <path> is required");
            return ExitCode::from(2);
        }
    };
    let overrides = config::Overrides {
        out: cli.out.clone(),
        lambda_min: cli.lambda_min,
        lambda_max: cli.lambda_max,
        grid_step: cli.grid_step,
        horizon: cli.horizon,
    };
    let cfg = match config::parse_config(&config_path, &overrides) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let code = commands::execute(command_name(&cli.command), &cfg);
    ExitCode::from(code as u8)
}
