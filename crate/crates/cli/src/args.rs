use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "obarrier", version, about = "Runtime safety and reach-avoid bounds for polynomial stochastic systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize the offline tail certificate and write it as JSON.
    Synthesize(Common),
    /// Replay an observation file and write one report per event.
    Predict(PredictArgs),
    /// Read observations from stdin and answer each on stdout.
    Monitor(Common),
    /// Check emitted bounds against Monte Carlo estimates.
    Validate(ValidateArgs),
    /// Write simulated trajectories and set boundaries as CSV.
    PlotData(PlotArgs),
    /// Run offline synthesis and generated observation sequences on the
    /// benchmark models.
    Bench(BenchArgs),
}

/// Options shared by every subcommand.
#[derive(Clone, Debug, Args, Serialize)]
pub struct Common {
    /// Model file, or the name of a bundled model.
    #[arg(long)]
    pub model: Option<String>,
    /// Grid nodes per axis (default 201 up to 2-D, 81 above).
    #[arg(long, value_parser = clap::value_parser!(u64).range(2..))]
    pub grid_res: Option<u64>,
    #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u64).range(1..))]
    pub quad_order: u64,
    /// Degree of the tail template.
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u32).range(2..))]
    pub degree: u32,
    #[arg(long)]
    pub mult_degree: Option<u32>,
    /// Monte Carlo horizon (default 200, or 500 for reach-avoid and 3-D models).
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    pub horizon: Option<u32>,
    /// Monte Carlo sample count.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub samples: Option<u64>,
    #[arg(long, default_value_t = 0.95)]
    pub confidence: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Observation file (line-delimited JSON).
    #[arg(long)]
    pub obs: Option<PathBuf>,
    /// Tail file written by `synthesize`; synthesized in-process if absent.
    #[arg(long)]
    pub cert: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Fall back to value iteration when synthesis fails.
    #[arg(long)]
    pub fallback_vi: bool,
    /// Run grid and sampling loops on one thread.
    #[arg(long)]
    pub sequential: bool,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub common: Common,
    /// Session log to write (header, then one entry per event).
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Number of generated observation sequences.
    #[arg(long, default_value_t = 20)]
    pub runs: usize,
    /// Sequence `r` has `1 + r % obs_len` observations.
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(1..))]
    pub obs_len: u64,
    /// Steps between observations.
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u32).range(1..))]
    pub gap: u32,
    #[arg(long, default_value_t = 0.1)]
    pub half_width: f64,
    /// Trial cap for rejection sampling (default 100 x samples).
    #[arg(long)]
    pub max_trials: Option<u64>,
    /// Test hook: encode with the unsound `+` multiplier sign and accept
    /// unverified certificates.
    #[arg(long, hide = true)]
    pub putinar_plus: bool,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    #[command(flatten)]
    pub common: Common,
    /// Number of trajectories.
    #[arg(long, default_value_t = 50)]
    pub trajectories: usize,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub common: Common,
    /// Comma-separated model names (default: the nine benchmarks).
    #[arg(long, value_delimiter = ',')]
    pub models: Option<Vec<String>>,
    /// Observation sequence lengths.
    #[arg(long, value_delimiter = ',', default_value = "2,3,4,5")]
    pub lengths: Vec<usize>,
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u32).range(1..))]
    pub gap: u32,
    #[arg(long, default_value_t = 0.1)]
    pub half_width: f64,
}
