use serde::{Deserialize, Serialize};

use super::obs::{cand_dim, CandidateSet, EncodedInstruction, OBS_DIM};
use super::AgentError;
use crate::jsonfmt::ser_vec_full;
use crate::learnkit::{dot, log_softmax, softmax, Dense, Embedding, LearnError, Mlp, MlpCache, Params};
use crate::rng::Rng;

/// Per-episode scorer inputs that persist across steps.
#[derive(Debug, Clone, PartialEq)]
pub struct ScorerState {
    pub instruction: EncodedInstruction,
    /// Observation summaries of the steps taken so far.
    pub history: Vec<Vec<f64>>,
    pub step: usize,
}

impl ScorerState {
    pub fn new(instruction: EncodedInstruction) -> Self {
        Self { instruction, history: Vec::new(), step: 0 }
    }

    /// Arithmetic mean of prior summaries, zeros before the first step.
    pub fn history_mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; OBS_DIM];
        if self.history.is_empty() {
            return m;
        }
        for h in &self.history {
            for (a, b) in m.iter_mut().zip(h) {
                *a += b;
            }
        }
        let n = self.history.len() as f64;
        m.iter_mut().for_each(|v| *v /= n);
        m
    }

    /// Records the observation of the step just taken.
    pub fn push(&mut self, obs: Vec<f64>) {
        self.history.push(obs);
        self.step += 1;
    }
}

/// Candidate scorer: a context network over instruction, history and the
/// current observation, dotted with linear candidate embeddings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScorerParams {
    pub max_steps: usize,
    pub embed: Embedding,
    pub context: Mlp,
    pub candidate: Dense,
    #[serde(serialize_with = "ser_vec_full")]
    pub stop: Vec<f64>,
    pub baseline: Dense,
}

impl ScorerParams {
    pub fn context_input_dim(embed_dim: usize, max_steps: usize) -> usize {
        3 * embed_dim + 2 * OBS_DIM + max_steps
    }

    pub fn new(
        vocab: usize,
        legend_len: usize,
        embed_dim: usize,
        hidden: usize,
        context_dim: usize,
        max_steps: usize,
        rng: &mut Rng,
    ) -> Self {
        let input = Self::context_input_dim(embed_dim, max_steps);
        Self {
            max_steps,
            embed: Embedding::init(vocab, embed_dim, rng),
            context: Mlp::new(&[input, hidden, context_dim], rng),
            candidate: Dense::init(cand_dim(legend_len), context_dim, rng),
            stop: crate::learnkit::Embedding::init(1, context_dim, rng).table,
            baseline: Dense::init(context_dim, 4, rng),
        }
    }

    pub fn validate(&self) -> Result<(), LearnError> {
        let d = self.context.output_dim();
        let expect = Self::context_input_dim(self.embed.dim, self.max_steps);
        if self.context.input_dim() != expect {
            return Err(LearnError::Shape { expected: expect, got: self.context.input_dim() });
        }
        if self.embed.table.len() != self.embed.vocab * self.embed.dim {
            return Err(LearnError::Shape { expected: self.embed.vocab * self.embed.dim, got: self.embed.table.len() });
        }
        self.candidate.validate()?;
        self.baseline.validate()?;
        for (want, got) in
            [(d, self.candidate.outputs), (d, self.stop.len()), (d, self.baseline.inputs), (4, self.baseline.outputs)]
        {
            if want != got {
                return Err(LearnError::Shape { expected: want, got });
            }
        }
        Ok(())
    }

    pub fn context_dim(&self) -> usize {
        self.context.output_dim()
    }

    fn mean_embedding(&self, ids: &[usize]) -> Result<Vec<f64>, LearnError> {
        let mut m = vec![0.0; self.embed.dim];
        for &id in ids {
            for (a, b) in m.iter_mut().zip(self.embed.row(id)?) {
                *a += b;
            }
        }
        if !ids.is_empty() {
            let n = ids.len() as f64;
            m.iter_mut().for_each(|v| *v /= n);
        }
        Ok(m)
    }

    fn context_input(&self, state: &ScorerState, obs: &[f64]) -> Result<Vec<f64>, LearnError> {
        if obs.len() != OBS_DIM {
            return Err(LearnError::Shape { expected: OBS_DIM, got: obs.len() });
        }
        let instr = &state.instruction;
        let mut x = self.mean_embedding(&instr.tokens)?;
        x.extend(self.mean_embedding(instr.segment(state.step))?);
        x.extend(self.mean_embedding(instr.segment(state.step + 1))?);
        x.extend(state.history_mean());
        x.extend_from_slice(obs);
        let mut onehot = vec![0.0; self.max_steps];
        onehot[state.step.min(self.max_steps - 1)] = 1.0;
        x.extend(onehot);
        Ok(x)
    }

    /// Step context vector alone, as used by the decoder and the baseline.
    pub fn context_vector(&self, state: &ScorerState, obs: &[f64]) -> Result<Vec<f64>, LearnError> {
        self.context.infer(&self.context_input(state, obs)?)
    }

    pub fn forward(&self, state: &ScorerState, obs: &[f64], cands: &CandidateSet) -> Result<ScorerForward, LearnError> {
        let input = self.context_input(state, obs)?;
        let (ctx, cache) = self.context.forward(&input)?;
        let cand_emb: Vec<Vec<f64>> = cands.features.iter().map(|f| self.candidate.apply(f)).collect();
        if let Some(f) = cands.features.iter().find(|f| f.len() != self.candidate.inputs) {
            return Err(LearnError::Shape { expected: self.candidate.inputs, got: f.len() });
        }
        let mut logits = vec![dot(&self.stop, &ctx)];
        logits.extend(cand_emb.iter().map(|e| dot(e, &ctx)));
        let probs = softmax(&logits);
        Ok(ScorerForward {
            ctx,
            cache,
            cand_emb,
            logits,
            probs,
            tokens: state.instruction.tokens.clone(),
            segment: state.instruction.segment(state.step).to_vec(),
            next_segment: state.instruction.segment(state.step + 1).to_vec(),
        })
    }

    /// Accumulates gradients for `dlogits` and an extra context gradient
    /// (from the decoder) into `grad`.
    pub fn backward(
        &self,
        fwd: &ScorerForward,
        cands: &CandidateSet,
        dlogits: &[f64],
        dctx_extra: Option<&[f64]>,
        grad: &mut ScorerParams,
    ) -> Result<(), LearnError> {
        let d = self.context_dim();
        let mut dctx = dctx_extra.map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; d]);
        for k in 0..d {
            dctx[k] += dlogits[0] * self.stop[k];
            grad.stop[k] += dlogits[0] * fwd.ctx[k];
        }
        for (i, e) in fwd.cand_emb.iter().enumerate() {
            let g = dlogits[i + 1];
            if g == 0.0 {
                continue;
            }
            for k in 0..d {
                dctx[k] += g * e[k];
            }
            let dy: Vec<f64> = fwd.ctx.iter().map(|c| g * c).collect();
            self.candidate.backprop(&cands.features[i], &dy, &mut grad.candidate);
        }
        let dx = self.context.backward(&fwd.cache, &dctx, &mut grad.context)?;
        let e = self.embed.dim;
        for (block, ids) in [(0, &fwd.tokens), (1, &fwd.segment), (2, &fwd.next_segment)] {
            if ids.is_empty() {
                continue;
            }
            let g = &dx[block * e..(block + 1) * e];
            let scale = 1.0 / ids.len() as f64;
            for &id in ids {
                grad.embed.accumulate(id, g, scale);
            }
        }
        Ok(())
    }
}

impl Params for ScorerParams {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        self.embed.visit(f);
        self.context.visit(f);
        self.candidate.visit(f);
        f(&self.stop);
        self.baseline.visit(f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        self.embed.visit_mut(f);
        self.context.visit_mut(f);
        self.candidate.visit_mut(f);
        f(&mut self.stop);
        self.baseline.visit_mut(f);
    }
}

/// Everything the backward pass needs from one scoring step.
#[derive(Debug, Clone)]
pub struct ScorerForward {
    pub ctx: Vec<f64>,
    cache: MlpCache,
    cand_emb: Vec<Vec<f64>>,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
    tokens: Vec<usize>,
    segment: Vec<usize>,
    next_segment: Vec<usize>,
}

/// Candidate distribution for one step; index 0 is stop.
pub fn score_candidates(
    params: &ScorerParams,
    cands: &CandidateSet,
    state: &ScorerState,
    obs: &[f64],
) -> Result<Vec<f64>, AgentError> {
    Ok(params.forward(state, obs, cands)?.probs)
}

/// Four-way LEFT/RIGHT/FORWARD/STOP distribution from the step context.
pub fn classify_low_baseline(params: &ScorerParams, state: &ScorerState, obs: &[f64]) -> Result<Vec<f64>, AgentError> {
    let ctx = params.context_vector(state, obs)?;
    Ok(softmax(&params.baseline.apply(&ctx)))
}

/// One high-level step as seen by the loss.
#[derive(Debug, Clone, PartialEq)]
pub struct HighRecord {
    pub logits: Vec<f64>,
    pub teacher: usize,
    pub sampled: usize,
    pub advantage: f64,
}

/// `Σ −log p[teacher] + λ Σ −A log p[sampled]`, with per-record logit
/// gradients.
pub fn loss_high(records: &[HighRecord], lambda: f64) -> (f64, Vec<Vec<f64>>) {
    let mut total = 0.0;
    let grads = records
        .iter()
        .map(|r| {
            let logp = log_softmax(&r.logits);
            let p = softmax(&r.logits);
            total += -logp[r.teacher];
            if lambda != 0.0 {
                total += lambda * -r.advantage * logp[r.sampled];
            }
            let mut g = p.clone();
            g[r.teacher] -= 1.0;
            if lambda != 0.0 {
                for (k, gk) in g.iter_mut().enumerate() {
                    let e = if k == r.sampled { 1.0 } else { 0.0 };
                    *gk += lambda * r.advantage * (p[k] - e);
                }
            }
            g
        })
        .collect();
    (total, grads)
}
