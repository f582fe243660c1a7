//! `safedeploy` command-line tool.
//!
//! Exit codes: 0 success, 1 runtime or I/O failure, 2 usage error, 3 a run stopped at
//! `max_iters` without meeting the tolerance.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use safedeploy::deploy::Strategy;

#[derive(Debug, Parser)]
#[command(name = "safedeploy", version, about = "Risk-constrained accelerated deployment simulator")]
pub struct Cli {
    /// TOML config file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Log verbosity: -v info, -vv debug.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic ground-truth risk table.
    GenWorld(GenWorldArgs),
    /// Turn an encounter log into a risk table and a route clustering.
    Ingest(IngestArgs),
    /// Run one deployment sequence.
    Run(RunArgs),
    /// Paired replications of both strategies.
    Bench(BenchArgs),
    /// Re-summarize an existing curves file.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct SpaceArgs {
    /// Number of route clusters [default: 16]
    #[arg(long)]
    pub cluster_count: Option<usize>,
    /// Number of equal-width time groups [default: 8]
    #[arg(long)]
    pub time_groups: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct WorldArgs {
    /// Baseline risk level of the generator [default: 0.0015]
    #[arg(long)]
    pub base_risk: Option<f64>,
    /// Amplitude of the time-of-day pattern [default: 0.002]
    #[arg(long)]
    pub diurnal_amplitude: Option<f64>,
    /// Lower end of the log-uniform cluster multiplier [default: 0.2]
    #[arg(long)]
    pub spread_lo: Option<f64>,
    /// Upper end of the log-uniform cluster multiplier [default: 5]
    #[arg(long)]
    pub spread_hi: Option<f64>,
    /// Standard deviation of the log of the per-cell noise [default: 0.25]
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    /// Smallest generated risk [default: 0.00001]
    #[arg(long)]
    pub floor: Option<f64>,
    /// Largest generated risk [default: 0.05]
    #[arg(long)]
    pub ceiling: Option<f64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunParamArgs {
    /// Risk tolerance on the blended score [default: 0.02]
    #[arg(long)]
    pub xi: Option<f64>,
    /// Tolerance on the average estimation error [default: 0.00075]
    #[arg(long)]
    pub tau: Option<f64>,
    /// Confidence-weight steepness [default: 1/tau]
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Minimum number of deployments [default: 100]
    #[arg(long)]
    pub n_min: Option<usize>,
    /// Size of the random initial design [default: 25]
    #[arg(long)]
    pub n_init: Option<usize>,
    /// Iteration cap [default: 5000]
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Random restarts per fit [default: 3]
    #[arg(long)]
    pub restarts: Option<usize>,
    /// Draw each observation as the risky fraction of this many encounters instead of
    /// reading the exact risk [default: exact]
    #[arg(long)]
    pub samples: Option<u64>,
}

#[derive(Debug, Args)]
pub struct GenWorldArgs {
    /// World seed [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output risk table CSV.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub space: SpaceArgs,
    #[command(flatten)]
    pub world: WorldArgs,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Encounter log CSV (route_id,timestamp_h,range_ft,range_rate_ftps).
    #[arg(long)]
    pub input: PathBuf,
    /// Output risk table CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Output route clustering CSV (route_id,cluster).
    #[arg(long)]
    pub clusters_out: PathBuf,
    /// Number of route clusters [default: 16]
    #[arg(long)]
    pub k: Option<usize>,
    /// Clustering seed [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// k-means iteration cap [default: 100]
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Number of equal-width time groups [default: 8]
    #[arg(long)]
    pub time_groups: Option<usize>,
    /// Largest range of a risky encounter, feet, inclusive [default: 10]
    #[arg(long)]
    pub max_range: Option<f64>,
    /// Range rate of a risky encounter must be below this, ft/s [default: 0]
    #[arg(long, allow_hyphen_values = true)]
    pub rate_threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Ground-truth risk table CSV.
    #[arg(long, conflicts_with = "gen", required_unless_present = "gen")]
    pub world: Option<PathBuf>,
    /// Generate the ground truth from this world seed instead of reading a file.
    #[arg(long)]
    pub gen: Option<u64>,
    /// accelerated or random [default: accelerated]
    #[arg(long)]
    pub strategy: Option<Strategy>,
    /// Run seed [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output iteration log CSV.
    #[arg(long)]
    pub log: PathBuf,
    /// Output run summary JSON.
    #[arg(long)]
    pub summary: PathBuf,
    #[command(flatten)]
    pub params: RunParamArgs,
    #[command(flatten)]
    pub space: SpaceArgs,
    #[command(flatten)]
    pub world_params: WorldArgs,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Number of paired replications [default: 1000]
    #[arg(long)]
    pub replications: Option<usize>,
    /// Master seed [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads [default: all cores]
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Output summary JSON.
    #[arg(long)]
    pub summary: PathBuf,
    /// Output curves CSV (replication,arm,n,avg_z,f_obs).
    #[arg(long)]
    pub curves: PathBuf,
    #[command(flatten)]
    pub params: RunParamArgs,
    #[command(flatten)]
    pub space: SpaceArgs,
    #[command(flatten)]
    pub world_params: WorldArgs,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Curves CSV written by `bench`.
    #[arg(long)]
    pub curves: PathBuf,
    /// Also write the summary JSON here.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match commands::dispatch(&cli) {
        Ok(code) => code,
        Err(failure) => {
            eprintln!("error: {:#}", failure.error);
            ExitCode::from(failure.code)
        }
    }
}
