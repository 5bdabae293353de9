//! `dualnav`: generate grid worlds and episodes, train and evaluate the
//! waypoint predictor and the dual-action agent, and dump step traces.

mod commands;
mod config;
mod corpus;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dualnav_core::agent::AgentError;
use dualnav_core::metrics::ActionMode;
use dualnav_core::waypoint::WaypointError;

use config::{PolicyKind, Switch, WaypointKind};

/// Worker count for parallel evaluation; defaults to 1.
pub const WORKERS_ENV: &str = "DUALNAV_WORKERS";

#[derive(Parser)]
#[command(name = "dualnav", version, about = "Grid-world instruction navigation with dual-action agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate procedural maps.
    GenWorld(GenWorldArgs),
    /// Sample episodes over every map in a directory.
    MakeEpisodes(MakeEpisodesArgs),
    /// Train the waypoint predictor on panoramas at graph nodes.
    TrainWp(TrainWpArgs),
    /// Score a predictor checkpoint against graph neighbors.
    EvalWp(EvalWpArgs),
    /// Jointly train the candidate scorer and the low-level decoder.
    TrainAgent(TrainAgentArgs),
    /// Roll out episodes and write per-episode metrics.
    EvalAgent(EvalAgentArgs),
    /// Write the step records of one episode as JSON Lines.
    Trace(TraceArgs),
}

/// Flags shared by every command; each overrides the config file.
#[derive(Args, Clone)]
pub struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    maps_dir: Option<PathBuf>,
}

/// Observation masking flags.
#[derive(Args, Clone)]
pub struct MaskArgs {
    #[arg(long, value_enum)]
    mask: Option<Switch>,
    /// Comma-separated open-area class names.
    #[arg(long)]
    vocab: Option<String>,
}

#[derive(Args, Clone)]
pub struct NmsArgs {
    #[arg(long)]
    nms_k: Option<usize>,
    #[arg(long)]
    nms_threshold: Option<f64>,
}

#[derive(Args)]
pub struct GenWorldArgs {
    #[command(flatten)]
    common: Common,
    /// Single output map; otherwise `--count` maps go into `--maps-dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    count: usize,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    #[arg(long)]
    rooms: Option<usize>,
}

#[derive(Args)]
pub struct MakeEpisodesArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    min_geodesic: Option<f64>,
    #[arg(long)]
    max_geodesic: Option<f64>,
    #[arg(long)]
    min_separation: Option<f64>,
}

#[derive(Args)]
pub struct TrainWpArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    mask: MaskArgs,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Predictor checkpoint to write.
    #[arg(long)]
    out: PathBuf,
    /// Optional training curve.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args)]
pub struct EvalWpArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    mask: MaskArgs,
    #[command(flatten)]
    nms: NmsArgs,
    #[arg(long)]
    predictor: Option<PathBuf>,
    /// Report to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
pub struct TrainAgentArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    mask: MaskArgs,
    #[arg(long)]
    episodes: Option<PathBuf>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Agent checkpoint to write.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    log: Option<PathBuf>,
}

/// Rollout flags shared by evaluation and tracing.
#[derive(Args, Clone)]
pub struct RolloutArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    mask: MaskArgs,
    #[command(flatten)]
    nms: NmsArgs,
    #[arg(long)]
    episodes: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    predictor: Option<PathBuf>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long, value_enum)]
    waypoints: Option<WaypointKind>,
    /// High-level chooser; `teacher` is the geodesic oracle.
    #[arg(long, value_enum)]
    policy: Option<PolicyKind>,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum ModeArg {
    High,
    Low,
}

impl From<ModeArg> for ActionMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::High => ActionMode::High,
            ModeArg::Low => ActionMode::Low,
        }
    }
}

#[derive(Args)]
pub struct EvalAgentArgs {
    #[command(flatten)]
    rollout: RolloutArgs,
    /// Per-episode results, JSON Lines.
    #[arg(long)]
    out: PathBuf,
    /// Optional aggregate table as JSON.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args)]
pub struct TraceArgs {
    #[command(flatten)]
    rollout: RolloutArgs,
    #[arg(long)]
    episode_id: String,
    #[arg(long)]
    out: PathBuf,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<std::io::Error>() {
            return 3;
        }
        if matches!(cause.downcast_ref(), Some(AgentError::Divergence { .. }))
            || matches!(cause.downcast_ref(), Some(WaypointError::Divergence { .. }))
        {
            return 4;
        }
    }
    2
}

fn workers() -> anyhow::Result<usize> {
    match std::env::var(WORKERS_ENV) {
        Err(_) => Ok(1),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => anyhow::bail!("{WORKERS_ENV} must be a positive integer, got {v:?}"),
        },
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    rayon::ThreadPoolBuilder::new().num_threads(workers()?).build_global()?;
    match cli.command {
        Command::GenWorld(a) => commands::gen_world(a),
        Command::MakeEpisodes(a) => commands::make_episodes(a),
        Command::TrainWp(a) => commands::train_wp(a),
        Command::EvalWp(a) => commands::eval_wp(a),
        Command::TrainAgent(a) => commands::train_agent(a),
        Command::EvalAgent(a) => commands::eval_agent(a),
        Command::Trace(a) => commands::trace(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
