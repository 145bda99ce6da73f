//! Command-line experiment runner for `moran-core`.

pub mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use config::{load_file_config, resolve, Format, Overrides, Resolved};
use output::{write_all, Outcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Simulate trajectories and write them as a table.
    Simulate,
    /// Rate estimates over a grid of population sizes.
    Sweep,
    /// Run a coupling and count invariant violations.
    CoupleCheck,
    /// Empirical tails against the analytic bounds.
    TailCheck,
    /// Width contraction and stability over a grid of population sizes.
    WidthExp,
    /// Excursion and restarted-front checks.
    PropCheck,
    /// Monte Carlo mean fitness against the exact chain.
    OracleCheck,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Sweep => "sweep",
            Command::CoupleCheck => "couple-check",
            Command::TailCheck => "tail-check",
            Command::WidthExp => "width-exp",
            Command::PropCheck => "prop-check",
            Command::OracleCheck => "oracle-check",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "moran", version, about = "Moran model experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub replicates: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads; 0 uses every core. Defaults to MORAN_WORKERS, then 1.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[arg(long, global = true, value_parser = parse_format)]
    pub format: Option<Format>,
}

fn parse_format(s: &str) -> Result<Format, String> {
    s.parse()
}

/// Name of the environment variable holding the default worker count.
pub const WORKERS_ENV: &str = "MORAN_WORKERS";

impl Cli {
    pub fn resolve(&self, env_workers: Option<String>) -> Result<Resolved, config::ConfigError> {
        let file = load_file_config(self.config.as_deref())?;
        let flags = Overrides {
            seed: self.seed,
            replicates: self.replicates,
            out: self.out.clone(),
            workers: self.workers,
            format: self.format,
            env_workers,
        };
        resolve(self.command, &file, &flags)
    }
}

/// Runs a resolved configuration and writes its outputs. Returns the outcome
/// so the caller can decide the exit status.
pub fn execute(cmd: Command, cfg: &Resolved) -> Result<Outcome, Box<dyn std::error::Error>> {
    let outcome = commands::run(cmd, cfg)?;
    write_all(cfg, &outcome, &cfg.directory)?;
    Ok(outcome)
}
