use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;

#[derive(Parser, Debug)]
#[command(name = "leniency", version, about = "Judge-propensity IV pipeline")]
pub struct Cli {
    /// TOML config for the subcommand; relative paths also resolve against the config directory.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, env = "LENIENCY_CONFIG_DIR")]
    pub config_dir: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; 0 uses all cores.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Parse a raw extract, classify conditions, link offenders, apply the restriction funnel.
    Ingest { input: PathBuf },
    /// Generate a synthetic case table and its ground-truth sidecar.
    Simulate,
    /// Leave-out judge propensities for a case table.
    Instruments { input: PathBuf },
    /// OLS and 2SLS coefficient table.
    Estimate { input: PathBuf },
    /// Balance, monotonicity, randomization, time-profile and subgroup checks.
    Diagnose { input: PathBuf },
    /// Cross-fitted Lasso IV on saturated covariates.
    Ddml { input: PathBuf },
    /// Cost-benefit ledger.
    Cba,
    /// Print the default config of a subcommand.
    Defaults { subcommand: String },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
            eprintln!("error[E_THREADS]: {e}");
            return ExitCode::from(1);
        }
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {}", e.code(), e);
            ExitCode::from(1)
        }
    }
}
