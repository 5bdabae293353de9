//! The dual-action navigator.
//!
//! A scorer picks one candidate waypoint per step (or the stop candidate at
//! index 0); a recurrent decoder, conditioned on the same step context,
//! emits the equivalent LEFT/RIGHT/FORWARD token sequence. Training mixes
//! imitation of a geodesic teacher with a policy-gradient term on sampled
//! candidates, plus teacher-forced likelihood of the compiled labels.

mod decoder;
mod obs;
mod rollout;
mod scorer;
mod teacher;
mod train;

pub use decoder::{decode_greedy, decode_low, loss_low, sequence_logprob, Decoded, DecoderParams, BOS, VOCAB_OUT};
pub use obs::{
    cand_dim, candidate_features, observation_summary, CandidateSet, EncodedInstruction, InstructionVocab, OBS_DIM,
};
pub use rollout::{
    evaluate_rollout, gt_waypoints, landing_poses, rollout_high, rollout_low, HighPolicy, Navigator, Rollout, Sensing,
    StepRecord, WaypointSource,
};
pub use scorer::{
    classify_low_baseline, loss_high, score_candidates, HighRecord, ScorerForward, ScorerParams, ScorerState,
};
pub use teacher::{advance_progress, landing_pose, teacher_action, teacher_choice};
pub use train::{
    build_step_data, epoch_metrics, loss_joint, train_agent, AgentParams, EpisodeData, EpochMetrics, LossParts,
    StepData, TrainLog, TrainLogEntry, STOP_REWARD,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::learnkit::LearnError;
use crate::waypoint::DEFAULT_OPEN_VOCAB;

#[derive(Debug, Error, PartialEq)]
pub enum AgentError {
    #[error("training diverged at epoch {epoch}, episode {step}")]
    Divergence { epoch: usize, step: usize },
    #[error("label of {0} tokens exceeds the decode limit")]
    LabelTooLong(usize),
    #[error("label must end with END")]
    Unterminated,
    #[error("no training episodes")]
    NoEpisodes,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("episode {0}: {1}")]
    Episode(String, String),
    #[error(transparent)]
    Learn(#[from] LearnError),
}

/// Training and rollout settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Weight of the policy-gradient term.
    pub lambda: f64,
    pub epochs: usize,
    pub seed: u64,
    pub lr: f64,
    /// Learning rate reached at the last epoch, as a fraction of `lr`
    /// (linear decay; 1 keeps it constant).
    pub lr_final: f64,
    pub beam: usize,
    pub max_decode_len: usize,
    pub max_high_steps: usize,
    pub max_low_actions: usize,
    pub gamma: f64,
    pub success_threshold: f64,
    /// A gt node counts as reached within this many meters.
    pub reach: f64,
    pub embed_dim: usize,
    pub hidden: usize,
    pub context_dim: usize,
    pub decoder_dim: usize,
    pub token_dim: usize,
    pub mask: bool,
    pub vocab: Vec<String>,
    pub rays_per_sector: usize,
    pub max_range: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 0.75,
            epochs: 200,
            seed: 0,
            lr: 1e-3,
            lr_final: 0.1,
            beam: 3,
            max_decode_len: crate::dualact::MAX_SEQUENCE_LEN,
            max_high_steps: 15,
            max_low_actions: 200,
            gamma: 0.9,
            success_threshold: 3.0,
            reach: 1.0,
            embed_dim: 32,
            hidden: 128,
            context_dim: 64,
            decoder_dim: 128,
            token_dim: 16,
            mask: true,
            vocab: DEFAULT_OPEN_VOCAB.iter().map(|s| s.to_string()).collect(),
            rays_per_sector: crate::world::DEFAULT_RAYS_PER_SECTOR,
            max_range: crate::world::DEFAULT_MAX_RANGE,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |m: &str| Err(AgentError::Config(m.to_string()));
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad("lambda must lie in [0, 1]");
        }
        if self.beam == 0 || self.max_decode_len == 0 || self.max_decode_len > crate::dualact::MAX_SEQUENCE_LEN {
            return bad("beam must be positive and max_decode_len in [1, 30]");
        }
        if self.max_high_steps == 0 || self.max_low_actions == 0 {
            return bad("step budgets must be positive");
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) || !(0.0..=1.0).contains(&self.lr_final) {
            return bad("lr must be non-negative and lr_final in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if !(self.success_threshold > 0.0 && self.reach > 0.0) {
            return bad("thresholds must be positive");
        }
        if [self.embed_dim, self.hidden, self.context_dim, self.decoder_dim, self.token_dim, self.rays_per_sector]
            .contains(&0)
        {
            return bad("dimensions must be positive");
        }
        Ok(())
    }
}
