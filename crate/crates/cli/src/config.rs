use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use dualnav_core::agent::TrainConfig;
use dualnav_core::metrics::ActionMode;
use dualnav_core::waypoint::{KernelParams, NmsParams, PredictorHyper, DEFAULT_OPEN_VOCAB};
use dualnav_core::world::{EpisodeParams, WorldParams};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum WaypointKind {
    /// Navigation-graph nodes snapped onto the action lattice.
    Gt,
    /// Predictor heatmap followed by NMS.
    Learned,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Scorer,
    /// Geodesic oracle over the candidates.
    Teacher,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Switch {
    On,
    Off,
}

impl From<Switch> for bool {
    fn from(s: Switch) -> bool {
        s == Switch::On
    }
}

/// Everything a command may read, from a JSON file and then flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub maps_dir: Option<PathBuf>,
    pub episodes: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub predictor: Option<PathBuf>,
    pub vocab: Vec<String>,
    pub mask: bool,
    pub mode: ActionMode,
    pub waypoints: WaypointKind,
    pub policy: PolicyKind,
    pub node_spacing: f64,
    pub world: WorldParams,
    pub episode: EpisodeParams,
    pub nms: NmsParams,
    pub kernel: KernelParams,
    pub predictor_train: PredictorHyper,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            maps_dir: None,
            episodes: None,
            checkpoint: None,
            predictor: None,
            vocab: DEFAULT_OPEN_VOCAB.iter().map(|s| s.to_string()).collect(),
            mask: true,
            mode: ActionMode::High,
            waypoints: WaypointKind::Gt,
            policy: PolicyKind::Scorer,
            node_spacing: 2.0,
            world: WorldParams::default(),
            episode: EpisodeParams::default(),
            nms: NmsParams::default(),
            kernel: KernelParams::default(),
            predictor_train: PredictorHyper::default(),
            train: TrainConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Copies the shared fields into the component configs.
    pub fn finish(mut self) -> Result<Self> {
        self.train.seed = self.seed;
        self.predictor_train.seed = self.seed;
        self.train.mask = self.mask;
        self.train.vocab = self.vocab.clone();
        if !(self.node_spacing.is_finite() && self.node_spacing > 0.0) {
            bail!("node_spacing must be positive");
        }
        self.train.validate()?;
        Ok(self)
    }

    pub fn maps_dir(&self) -> Result<&Path> {
        self.maps_dir.as_deref().context("--maps-dir is required")
    }

    pub fn episodes(&self) -> Result<&Path> {
        self.episodes.as_deref().context("--episodes is required")
    }

    pub fn checkpoint(&self) -> Result<&Path> {
        self.checkpoint.as_deref().context("--checkpoint is required")
    }

    pub fn predictor(&self) -> Result<&Path> {
        self.predictor.as_deref().context("--predictor is required for learned waypoints")
    }
}

/// Splits a comma-separated vocabulary list, dropping blanks.
pub fn parse_vocab(list: &str) -> Vec<String> {
    list.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect()
}
