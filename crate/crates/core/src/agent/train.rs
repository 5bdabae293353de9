use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::decoder::{decode_low, loss_low, DecoderParams};
use super::obs::{CandidateSet, EncodedInstruction, InstructionVocab};
use super::rollout::{landing_poses, HighPolicy, Navigator, WaypointSource};
use super::scorer::{loss_high, HighRecord, ScorerForward, ScorerParams, ScorerState};
use super::{AgentError, TrainConfig};
use crate::dualact::{compile_waypoint, smaller_rotation, stop_label, ActionSequence};
use crate::jsonfmt::ser_f64_full;
use crate::learnkit::{Adam, AdamConfig, Params};
use crate::rng::{keyed_substream, substream};
use crate::world::{distance, distance_field, Episode, NavGraph};

/// Reward for stopping inside (or outside) the success radius.
pub const STOP_REWARD: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentParams {
    pub scorer: ScorerParams,
    pub decoder: DecoderParams,
}

impl AgentParams {
    pub fn new(config: &TrainConfig, vocab_len: usize, legend_len: usize) -> Self {
        let mut rng = substream(config.seed, "agent-init");
        let scorer = ScorerParams::new(
            vocab_len,
            legend_len,
            config.embed_dim,
            config.hidden,
            config.context_dim,
            config.max_high_steps,
            &mut rng,
        );
        let decoder = DecoderParams::new(config.context_dim, config.decoder_dim, config.token_dim, &mut rng);
        Self { scorer, decoder }
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        self.scorer.validate()?;
        self.decoder.validate(self.scorer.context_dim())?;
        Ok(())
    }
}

impl Params for AgentParams {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        self.scorer.visit(f);
        self.decoder.visit(f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        self.scorer.visit_mut(f);
        self.decoder.visit_mut(f);
    }
}

/// One step along the teacher trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct StepData {
    pub obs: Vec<f64>,
    pub candidates: CandidateSet,
    pub teacher: usize,
    /// Reward for each choice, stop first.
    pub rewards: Vec<f64>,
    /// Low-level tokens equivalent to the teacher choice, END terminated.
    pub label: ActionSequence,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeData {
    pub episode_id: String,
    pub instruction: EncodedInstruction,
    pub steps: Vec<StepData>,
}

impl EpisodeData {
    /// Scorer state before step `t`.
    pub fn state_at(&self, t: usize) -> ScorerState {
        ScorerState {
            instruction: self.instruction.clone(),
            history: self.steps[..t].iter().map(|s| s.obs.clone()).collect(),
            step: t,
        }
    }
}

/// Follows the teacher with gt waypoints and records, per step, the
/// observation, candidates, teacher label and per-choice rewards. A
/// waypoint's reward is the geodesic progress toward the goal of its landing
/// point; stop earns `±STOP_REWARD` by whether the agent is inside the
/// success radius.
pub fn build_step_data(nav: &Navigator<'_>, graph: &NavGraph, ep: &Episode) -> Result<EpisodeData, AgentError> {
    let goal_field =
        distance_field(nav.grid, ep.goal).map_err(|e| AgentError::Episode(ep.id.clone(), e.to_string()))?;
    let mut steps = Vec::new();
    let mut failure = None;
    nav.rollout_high_with(ep, WaypointSource::Ground(graph), HighPolicy::Teacher, |_, pose, sensing, teacher| {
        let cands = &sensing.candidates;
        let here = goal_field.at(pose.position());
        let inside = distance(pose.position(), ep.goal) <= nav.config.success_threshold;
        let mut rewards = vec![if inside { STOP_REWARD } else { -STOP_REWARD }];
        rewards.extend(landing_poses(nav.grid, pose, cands).iter().skip(1).map(|p| here - goal_field.at(p.position())));
        let label = if teacher == 0 {
            stop_label()
        } else {
            let w = cands.waypoints[teacher - 1];
            match compile_waypoint(smaller_rotation(w.heading), w.distance) {
                Ok(seq) => seq.terminated(),
                Err(e) => {
                    failure.get_or_insert(e.to_string());
                    stop_label()
                }
            }
        };
        steps.push(StepData { obs: sensing.obs.clone(), candidates: cands.clone(), teacher, rewards, label });
    })?;
    if let Some(msg) = failure {
        return Err(AgentError::Episode(ep.id.clone(), msg));
    }
    if let Some(s) = steps.iter().find(|s| !s.rewards.iter().all(|r| r.is_finite())) {
        return Err(AgentError::Episode(
            ep.id.clone(),
            format!("non-finite reward at a step with teacher {}", s.teacher),
        ));
    }
    Ok(EpisodeData { episode_id: ep.id.clone(), instruction: nav.vocab.encode(&ep.instruction), steps })
}

/// Episode loss `Σ_t [−log p(teacher) − λ A_t log p(sampled)] + Σ_t L_low`
/// and its gradient. The scorer context feeds both heads.
pub fn loss_joint(
    params: &AgentParams,
    ep: &EpisodeData,
    sampled: &[usize],
    advantages: &[f64],
    lambda: f64,
) -> Result<(LossParts, AgentParams), AgentError> {
    let mut grad = params.zeros_like();
    let mut parts = LossParts::default();
    let mut forwards: Vec<ScorerForward> = Vec::with_capacity(ep.steps.len());
    let mut records = Vec::with_capacity(ep.steps.len());
    let mut state = ep.state_at(0);
    for (t, s) in ep.steps.iter().enumerate() {
        let fwd = params.scorer.forward(&state, &s.obs, &s.candidates)?;
        records.push(HighRecord {
            logits: fwd.logits.clone(),
            teacher: s.teacher,
            sampled: sampled[t],
            advantage: advantages[t],
        });
        forwards.push(fwd);
        state.push(s.obs.clone());
    }
    let (il, _) = loss_high(&records, 0.0);
    let (high, dlogits) = loss_high(&records, lambda);
    parts.il = il;
    parts.rl = high - il;
    for (t, s) in ep.steps.iter().enumerate() {
        let (low, dgrad, dctx) = loss_low(&params.decoder, &forwards[t].ctx, &s.label)?;
        parts.low += low;
        grad.decoder.add_scaled(&dgrad, 1.0);
        params.scorer.backward(&forwards[t], &s.candidates, &dlogits[t], Some(&dctx), &mut grad.scorer)?;
    }
    Ok((parts, grad))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    #[serde(serialize_with = "ser_f64_full")]
    pub il: f64,
    #[serde(serialize_with = "ser_f64_full")]
    pub rl: f64,
    #[serde(serialize_with = "ser_f64_full")]
    pub low: f64,
}

impl LossParts {
    pub fn total(&self) -> f64 {
        self.il + self.rl + self.low
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogEntry {
    pub epoch: usize,
    /// Per-step means over the epoch.
    pub loss: LossParts,
    #[serde(serialize_with = "ser_f64_full")]
    pub teacher_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainLog {
    pub entries: Vec<TrainLogEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    /// Fraction of steps whose argmax choice is the teacher's.
    #[serde(serialize_with = "ser_f64_full")]
    pub teacher_accuracy: f64,
    /// Fraction of steps whose decoded tokens equal the label exactly.
    #[serde(serialize_with = "ser_f64_full")]
    pub exact_match: f64,
}

fn argmax(v: &[f64]) -> usize {
    (0..v.len()).fold(0, |b, i| if v[i] > v[b] { i } else { b })
}

/// Teacher accuracy and label exact match over teacher trajectories.
pub fn epoch_metrics(
    params: &AgentParams,
    data: &[EpisodeData],
    config: &TrainConfig,
) -> Result<EpochMetrics, AgentError> {
    let (mut hits, mut exact, mut n) = (0usize, 0usize, 0usize);
    for ep in data {
        let mut state = ep.state_at(0);
        for s in &ep.steps {
            let fwd = params.scorer.forward(&state, &s.obs, &s.candidates)?;
            hits += (argmax(&fwd.probs) == s.teacher) as usize;
            let decoded = decode_low(&params.decoder, &fwd.ctx, config.beam, config.max_decode_len);
            exact += (decoded.sequence == s.label) as usize;
            n += 1;
            state.push(s.obs.clone());
        }
    }
    let n = n.max(1) as f64;
    Ok(EpochMetrics { teacher_accuracy: hits as f64 / n, exact_match: exact as f64 / n })
}

fn sample(rng: &mut crate::rng::Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Adam over the joint loss, one update per episode. Episodes are visited
/// in a seeded shuffled order each epoch; the sampled choices for the
/// policy-gradient term come from a stream keyed by epoch and episode.
/// Advantages are discounted returns minus a per-step running mean.
pub fn train_agent(
    data: &[EpisodeData],
    vocab: &InstructionVocab,
    legend_len: usize,
    config: &TrainConfig,
) -> Result<(AgentParams, TrainLog), AgentError> {
    config.validate()?;
    if data.iter().all(|e| e.steps.is_empty()) {
        return Err(AgentError::NoEpisodes);
    }
    let mut params = AgentParams::new(config, vocab.len(), legend_len);
    let mut adam = Adam::new(AdamConfig { lr: config.lr, ..AdamConfig::default() }, params.num_params());
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut shuffle = substream(config.seed, "agent-shuffle");
    let mut baseline: Vec<(f64, usize)> = vec![(0.0, 0); config.max_high_steps];
    let mut log = TrainLog::default();
    for epoch in 0..config.epochs {
        let frac = if config.epochs > 1 { epoch as f64 / (config.epochs - 1) as f64 } else { 0.0 };
        adam.config.lr = config.lr * (1.0 - (1.0 - config.lr_final) * frac);
        order.shuffle(&mut shuffle);
        let mut sum = LossParts::default();
        let (mut hits, mut n) = (0usize, 0usize);
        for (k, &i) in order.iter().enumerate() {
            let ep = &data[i];
            if ep.steps.is_empty() {
                continue;
            }
            let mut rng = keyed_substream(config.seed, "agent-sampling", &format!("{epoch}/{}", ep.episode_id));
            let mut state = ep.state_at(0);
            let mut sampled = Vec::with_capacity(ep.steps.len());
            for s in &ep.steps {
                let probs = params.scorer.forward(&state, &s.obs, &s.candidates)?.probs;
                hits += (argmax(&probs) == s.teacher) as usize;
                sampled.push(sample(&mut rng, &probs));
                state.push(s.obs.clone());
            }
            let rewards: Vec<f64> = ep.steps.iter().zip(&sampled).map(|(s, &a)| s.rewards[a]).collect();
            let mut returns = vec![0.0; rewards.len()];
            let mut g = 0.0;
            for t in (0..rewards.len()).rev() {
                g = rewards[t] + config.gamma * g;
                returns[t] = g;
            }
            let advantages: Vec<f64> = returns
                .iter()
                .enumerate()
                .map(|(t, &r)| {
                    let b = &mut baseline[t.min(config.max_high_steps - 1)];
                    let mean = if b.1 == 0 { 0.0 } else { b.0 / b.1 as f64 };
                    b.0 += r;
                    b.1 += 1;
                    r - mean
                })
                .collect();
            let (parts, mut grad) = loss_joint(&params, ep, &sampled, &advantages, config.lambda)?;
            let steps = ep.steps.len() as f64;
            grad.scale(1.0 / steps);
            sum.il += parts.il;
            sum.rl += parts.rl;
            sum.low += parts.low;
            n += ep.steps.len();
            if !parts.total().is_finite() || !grad.all_finite() {
                return Err(AgentError::Divergence { epoch, step: k });
            }
            adam.update(&mut params, &grad)?;
            if !params.all_finite() {
                return Err(AgentError::Divergence { epoch, step: k });
            }
        }
        let nf = n.max(1) as f64;
        log.entries.push(TrainLogEntry {
            epoch,
            loss: LossParts { il: sum.il / nf, rl: sum.rl / nf, low: sum.low / nf },
            teacher_accuracy: hits as f64 / nf,
        });
    }
    Ok((params, log))
}
