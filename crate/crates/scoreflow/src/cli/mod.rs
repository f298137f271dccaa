//! Command-line experiment harness.
//!
//! Six subcommands: orbit, variance-decay, entropy, ridgelet, swissroll, and
//! verify. The first five read an optional key=value config file, apply flag
//! overrides, and write deterministic CSV or JSON files; verify runs the
//! named invariant checks and reports a pass/fail table.

mod commands;
mod config;
mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::Result;

pub use config::{DistributionSpec, ExperimentConfig, Mode, SynthesisTarget};
pub use output::{atomic_write, fmt_f64};

#[derive(Debug, Parser)]
#[command(
    name = "scoreflow",
    about = "Denoising transport maps: orbit, decay, entropy, and synthesis experiments",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Trace transport orbits of grid points and seeded samples.
    Orbit(RunArgs),
    /// Tabulate variance decay for the three flow families.
    VarianceDecay(RunArgs),
    /// Tabulate entropy along the continuous and ordinary flows.
    Entropy(RunArgs),
    /// Report reconstruction and stacked-representation quality.
    Ridgelet(RunArgs),
    /// Train a two-layer stack on the swiss roll and dump point sets.
    Swissroll(RunArgs),
    /// Run every named invariant check.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Key=value experiment file; flags below override its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file (output directory for swissroll).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    /// Step size of the composed flow.
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub t_max: Option<f64>,
    /// Output (and integration) time step.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Add a trained-network column to the variance table.
    #[arg(long)]
    pub train: bool,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub seed: Option<u64>,
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Orbit(args) => commands::cmd_orbit(&config::resolve(args)?),
        Command::VarianceDecay(args) => commands::cmd_variance_decay(&config::resolve(args)?),
        Command::Entropy(args) => commands::cmd_entropy(&config::resolve(args)?),
        Command::Ridgelet(args) => commands::cmd_ridgelet(&config::resolve(args)?),
        Command::Swissroll(args) => commands::cmd_swissroll(&config::resolve(args)?),
        Command::Verify(args) => commands::cmd_verify(args.seed.unwrap_or(0)),
    }
}
