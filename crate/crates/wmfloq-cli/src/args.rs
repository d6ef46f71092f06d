//! Command-line interface.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::Mode;

#[derive(Debug, Parser)]
#[command(name = "wmfloq", version, about = "Weakly measured honeycomb Floquet code: Monte Carlo driver")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print lattice, schedule and cut bookkeeping.
    LatticeInfo(CommonArgs),
    /// Markov comb over a grid of sizes and measurement strengths.
    Sweep(CommonArgs),
    /// Markov comb at a single (L, r, t).
    Point(CommonArgs),
    /// Outer-chain negativity and entropy over sizes (no inner chains).
    NegativityScan(CommonArgs),
    /// Compare the Gaussian route against the dense density-matrix oracle.
    OracleCheck(CommonArgs),
    /// Finite-temperature Kitaev model: exact flux sum (L=3) and flux Monte Carlo.
    Kitaev(CommonArgs),
    /// Fits on comb CSV output.
    Fit(FitArgs),
}

impl Command {
    pub fn mode(&self) -> Mode {
        match self {
            Command::LatticeInfo(_) => Mode::LatticeInfo,
            Command::Sweep(_) => Mode::Sweep,
            Command::Point(_) => Mode::Point,
            Command::NegativityScan(_) => Mode::NegativityScan,
            Command::OracleCheck(_) => Mode::OracleCheck,
            Command::Kitaev(_) => Mode::Kitaev,
            Command::Fit(_) => Mode::Fit,
        }
    }

    pub fn common(&self) -> &CommonArgs {
        match self {
            Command::LatticeInfo(a)
            | Command::Sweep(a)
            | Command::Point(a)
            | Command::NegativityScan(a)
            | Command::OracleCheck(a)
            | Command::Kitaev(a) => a,
            Command::Fit(f) => &f.common,
        }
    }
}

#[derive(Clone, Debug, Default, Args)]
pub struct CommonArgs {
    /// TOML config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Linear sizes (multiples of 3), comma separated.
    #[arg(long = "L", value_delimiter = ',')]
    pub l: Option<Vec<usize>>,
    /// Circuit depth in rounds (multiple of 3); defaults to L.
    #[arg(long)]
    pub r: Option<usize>,
    /// Measurement strengths in units of π, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub t: Option<Vec<f64>>,
    /// Evenly spaced strengths `start:stop:n` in units of π.
    #[arg(long = "t-grid")]
    pub t_grid: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long = "outer-sweeps")]
    pub outer_sweeps: Option<usize>,
    #[arg(long = "burn-in")]
    pub burn_in: Option<usize>,
    #[arg(long = "branch-interval")]
    pub branch_interval: Option<usize>,
    #[arg(long = "inner-sweeps")]
    pub inner_sweeps: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Outer sweeps between checkpoints (0 disables).
    #[arg(long = "checkpoint-every")]
    pub checkpoint_every: Option<usize>,
    /// Continue from checkpoints in the output directory.
    #[arg(long)]
    pub resume: bool,
    /// Re-evaluate every proposal from scratch.
    #[arg(long = "no-cache")]
    pub no_cache: bool,
    /// Worker threads (default from WMFLOQ_THREADS, else all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Checkpoint and exit after this many outer sweeps per chain.
    #[arg(long = "stop-after", hide = true)]
    pub stop_after: Option<usize>,
}

#[derive(Clone, Debug, Args)]
pub struct FitArgs {
    /// threshold, z, negativity or collapse.
    #[arg(long)]
    pub kind: Option<String>,
    /// CSV files produced by sweep, point or negativity-scan.
    pub inputs: Vec<PathBuf>,
    #[command(flatten)]
    pub common: CommonArgs,
}
