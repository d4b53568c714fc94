//! `cutin` command-line front end. The binary is a thin wrapper around
//! [`run`], so the commands can also be driven from tests.

pub mod commands;
pub mod config;
pub mod dataset;

use std::io::{BufRead, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use cutin_core::{Result, StrategyKind};

pub use config::RunConfig;
pub use dataset::Part;

#[derive(Debug, Parser)]
#[command(
    name = "cutin",
    version,
    about = "Cut-in / lane-pass maneuver prediction from bounding-box tracks"
)]
pub struct Cli {
    /// Run configuration file (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Master seed; overrides `seed` in the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Log more (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a labeled synthetic dataset.
    Simulate(SimulateArgs),
    /// Track objects in a per-frame detection file.
    Track(TrackArgs),
    /// Write resampled, normalized feature sequences.
    Featurize(FeaturizeArgs),
    /// Train one strategy on the training part of a dataset.
    Train(TrainArgs),
    /// Grid-search hyperparameters and keep the best model.
    Gridsearch(GridArgs),
    /// Evaluate a model on one part of a dataset.
    Eval(EvalArgs),
    /// Classify one clip or observation table.
    Classify(ClassifyArgs),
    /// Classify a detection stream on standard input, one decision per window.
    Stream(StreamArgs),
    /// Grid search and test evaluation for several sequence lengths.
    Sweep(SweepArgs),
    /// Per-stage processing time.
    Timing(TimingArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct SceneFlags {
    #[arg(long)]
    pub fps: Option<f64>,
    #[arg(long)]
    pub width: Option<f64>,
    #[arg(long)]
    pub height: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Clips per class and side.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Also write per-frame detection files.
    #[arg(long)]
    pub detections: bool,
    /// Distractor vehicles in detection files.
    #[arg(long)]
    pub distractors: Option<usize>,
    #[command(flatten)]
    pub scene: SceneFlags,
}

#[derive(Debug, Args)]
pub struct TrackArgs {
    /// Observation-table file with any number of targets per frame.
    #[arg(long, value_name = "FILE")]
    pub detections: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Dataset directory or its index file.
    #[arg(long, value_name = "PATH")]
    pub data: PathBuf,
    #[arg(long, value_parser = parse_strategy)]
    pub strategy: Option<StrategyKind>,
    #[arg(long)]
    pub length: Option<usize>,
}

#[derive(Debug, Args)]
pub struct FeaturizeArgs {
    #[arg(long, value_name = "PATH")]
    pub data: PathBuf,
    #[arg(long)]
    pub length: Option<usize>,
    /// Output file; standard output if omitted.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Worker threads; defaults to the available cores.
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
    #[arg(long, value_name = "PATH")]
    pub data: PathBuf,
    /// Part of the seeded split to evaluate.
    #[arg(long, value_enum, default_value = "test")]
    pub part: Part,
    /// Directory for metric tables.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
    /// Clip manifest (`.toml`, observations next to it) or an observation
    /// table (`.csv`, scene from the configuration).
    #[arg(long, value_name = "FILE")]
    pub clip: PathBuf,
    #[command(flatten)]
    pub scene: SceneFlags,
}

#[derive(Debug, Args)]
pub struct StreamArgs {
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
    /// Only follow this target id; defaults to the first one seen.
    #[arg(long)]
    pub target: Option<u64>,
    /// Leave the classification time off decision lines.
    #[arg(long)]
    pub no_timing: bool,
    #[command(flatten)]
    pub scene: SceneFlags,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, value_name = "PATH")]
    pub data: PathBuf,
    #[arg(long, value_parser = parse_strategy)]
    pub strategy: Option<StrategyKind>,
    #[arg(long, value_delimiter = ',', default_value = "15,30,45,60")]
    pub lengths: Vec<usize>,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Train only the `[train]` hyperparameters instead of the grid.
    #[arg(long)]
    pub no_grid: bool,
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TimingArgs {
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
    #[arg(long, value_name = "PATH")]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    pub part: Part,
    #[arg(long)]
    pub repetitions: Option<usize>,
    /// Output file; standard output if omitted.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

fn parse_strategy(s: &str) -> std::result::Result<StrategyKind, String> {
    s.parse().map_err(|e: cutin_core::Error| e.to_string())
}

/// Runs one command. Decision and summary lines go to `stdout`; logs go
/// through the `log` facade.
pub fn run(cli: Cli, stdin: &mut dyn BufRead, stdout: &mut dyn Write) -> Result<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    match cli.command {
        Command::Simulate(a) => commands::simulate(cfg, &a, stdout),
        Command::Track(a) => commands::track(cfg, &a, stdout),
        Command::Featurize(a) => commands::featurize(cfg, &a, stdout),
        Command::Train(a) => commands::train(cfg, &a, stdout),
        Command::Gridsearch(a) => commands::gridsearch(cfg, &a, stdout),
        Command::Eval(a) => commands::eval(cfg, &a, stdout),
        Command::Classify(a) => commands::classify(cfg, &a, stdout),
        Command::Stream(a) => commands::stream(cfg, &a, stdin, stdout),
        Command::Sweep(a) => commands::sweep(cfg, &a, stdout),
        Command::Timing(a) => commands::timing(cfg, &a, stdout),
    }
}

/// Process exit status for a failed command: 2 for usage and validation
/// errors, 1 for runtime and numerical failures.
pub fn exit_status(e: &cutin_core::Error) -> u8 {
    if e.is_usage() {
        2
    } else {
        1
    }
}
