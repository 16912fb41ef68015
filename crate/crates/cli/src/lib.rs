//! Experiment driver: reads a JSON experiment description, runs sweeps,
//! optimizations and simulations, and writes plot-ready CSV.

pub mod commands;
pub mod config;
pub mod error;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use commands::{CommRow, Output, Row};
pub use config::ExperimentConfig;
pub use error::CliError;

/// Environment variable holding the default worker-thread count.
pub const THREADS_ENV: &str = "CLOUDCLUST_THREADS";

#[derive(Debug, Parser)]
#[command(name = "cloudclust", version, about = "Cloud-cluster detection experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON experiment config; missing keys take reference defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// CSV destination; standard output when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub trials: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true, env = THREADS_ENV)]
    pub threads: Option<usize>,
    /// Also write the effective config, in canonical form, to this path.
    #[arg(long, global = true)]
    pub emit_config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Cluster communication probability against cluster size.
    CommProb,
    /// Comparison curves against the per-sensor communication probability.
    SweepPcom,
    /// Comparison curves against the number of equal clusters.
    SweepNc,
    /// Threshold optimization report with an initialization comparison.
    Optimize,
    /// Monte Carlo check of the optimized homogeneous rule.
    Simulate,
}

/// The config from `--config` with the command-line overrides applied.
pub fn effective_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.trials {
        cfg.trials = t;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn run_command(command: Command, cfg: &ExperimentConfig) -> Result<Output, CliError> {
    match command {
        Command::CommProb => commands::comm_prob(cfg),
        Command::SweepPcom => commands::sweep_pcom(cfg),
        Command::SweepNc => commands::sweep_nc(cfg),
        Command::Optimize => commands::optimize(cfg),
        Command::Simulate => commands::simulate(cfg),
    }
}

/// Runs a parsed invocation: CSV goes to `--out` or standard output, the
/// summary to standard error.
pub fn run(cli: &Cli) -> Result<(), CliError> {
    if cli.threads == Some(0) {
        return Err(CliError::Config("--threads must be positive".into()));
    }
    let cfg = effective_config(cli)?;
    if let Some(p) = &cli.emit_config {
        std::fs::write(p, cfg.to_json())?;
    }
    let work = || run_command(cli.command, &cfg);
    let out = match cli.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Config(e.to_string()))?
            .install(work)?,
        None => work()?,
    };
    match &cli.out {
        Some(p) => std::fs::write(p, &out.csv)?,
        None => print!("{}", out.csv),
    }
    eprint!("{}", out.summary);
    Ok(())
}
