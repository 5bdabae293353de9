use rand::Rng as _;
use serde::Serialize;

use super::decoder::decode_low;
use super::obs::{candidate_features, observation_summary, CandidateSet, InstructionVocab};
use super::scorer::{ScorerParams, ScorerState};
use super::teacher::{advance_progress, landing_pose, teacher_choice};
use super::train::AgentParams;
use super::{AgentError, TrainConfig};
use crate::dualact::{compile_waypoint, execute_tokens, smaller_rotation, stop_label};
use crate::jsonfmt::ser_vec_full;
use crate::metrics::{densify, ActionMode, EpisodeResult};
use crate::rng::keyed_substream;
use crate::waypoint::{
    features, nms_sample, obstacle_mask, NmsParams, ObstacleMask, OpenVocabulary, Waypoint, WaypointPredictor,
    WaypointSet,
};
use crate::world::{
    bearing, distance, distance_field, geodesic_distance, raycast_panorama, DistanceField, Episode, NavGraph, Panorama,
    Point, Pose, SemanticGrid, FORWARD_M, MAX_EDGE_M, TURN_DEG,
};

/// Where candidate waypoints come from.
#[derive(Debug, Clone, Copy)]
pub enum WaypointSource<'a> {
    /// Visible navigation-graph nodes reachable without collision.
    Ground(&'a NavGraph),
    Learned {
        predictor: &'a WaypointPredictor,
        nms: NmsParams,
    },
}

/// Who picks among the candidates in high-level mode.
#[derive(Debug, Clone, Copy)]
pub enum HighPolicy<'a> {
    Scorer(&'a ScorerParams),
    Teacher,
    /// Uniform over all choices (stop included), seeded per episode.
    Random(u64),
}

/// Extra 15° steps either side tried when approaching a blocked node.
const APPROACH_TURNS: i32 = 2;

/// Graph nodes in `(0.25, 3]` m, snapped onto the action lattice: of the
/// floor/ceil 15° headings and floor/ceil 0.25 m distances, the
/// collision-free motion landing closest to the node is kept. Nodes only
/// reachable around an obstacle get the nearest collision-free approach
/// instead. Duplicate lattice points are dropped.
pub fn gt_waypoints(grid: &SemanticGrid, graph: &NavGraph, pose: Pose) -> WaypointSet {
    let here = pose.position();
    let mut waypoints: Vec<Waypoint> = Vec::new();
    for &n in &graph.nodes {
        let d = distance(here, n);
        if !(d > FORWARD_M && d <= MAX_EDGE_M) {
            continue;
        }
        let raw = smaller_rotation(bearing(here, n) - pose.heading) / TURN_DEG;
        let steps = d / FORWARD_M;
        let snapped = |turns: &[f64], lengths: &[f64], miss: &dyn Fn(Point) -> f64| {
            let mut best: Option<(f64, Waypoint)> = None;
            for &k in turns {
                for &m in lengths {
                    if !(1.0..=MAX_EDGE_M / FORWARD_M).contains(&m) {
                        continue;
                    }
                    let w = Waypoint::new(k * TURN_DEG, m * FORWARD_M);
                    let Ok(seq) = compile_waypoint(smaller_rotation(w.heading), w.distance) else { continue };
                    let exec = execute_tokens(grid, pose, seq.tokens(), usize::MAX);
                    let miss = miss(exec.final_pose.position());
                    if exec.collisions == 0 && best.is_none_or(|(b, _)| miss < b) {
                        best = Some((miss, w));
                    }
                }
            }
            best
        };
        // when every full-length option collides, take the collision-free
        // motion of nearby heading and any length that gets geodesically
        // closest
        let (lo, hi) = (raw.floor(), raw.ceil());
        let best = snapped(&[lo, hi], &[steps.floor(), steps.ceil()], &|p| distance(p, n)).or_else(|| {
            let field = distance_field(grid, n).ok()?;
            let turns: Vec<f64> = (-APPROACH_TURNS..=APPROACH_TURNS + 1).map(|i| lo + i as f64).collect();
            let lengths: Vec<f64> = (1..=steps.ceil() as usize).map(|m| m as f64).collect();
            let start = field.at(here);
            snapped(&turns, &lengths, &|p| field.at(p)).filter(|&(g, _)| g < start - FORWARD_M)
        });
        if let Some((_, w)) = best {
            let same = |v: &Waypoint| smaller_rotation(v.heading - w.heading) == 0.0 && v.distance == w.distance;
            if !waypoints.iter().any(same) {
                waypoints.push(w);
            }
        }
    }
    WaypointSet { waypoints }
}

#[derive(Debug, Clone, Serialize)]
pub struct StepRecord {
    pub step: usize,
    pub pose: Pose,
    pub candidates: Vec<Waypoint>,
    /// Choice distribution, stop first; empty for the teacher policy.
    #[serde(serialize_with = "ser_vec_full")]
    pub probs: Vec<f64>,
    pub chosen: Option<usize>,
    pub teacher: Option<usize>,
    /// Low-level tokens run for this step.
    pub actions: String,
    pub collisions: usize,
    /// Peak predictor score when waypoints are learned.
    pub heatmap_peak: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Rollout {
    pub episode_id: String,
    pub mode: ActionMode,
    /// Start pose, then the pose after every executed low-level action.
    pub poses: Vec<Pose>,
    pub steps: Vec<StepRecord>,
    pub collisions: usize,
    pub stopped: bool,
}

impl Rollout {
    /// Positions visited, with consecutive repeats (turns) collapsed.
    pub fn trajectory(&self) -> Vec<Point> {
        let mut out: Vec<Point> = Vec::with_capacity(self.poses.len());
        for p in &self.poses {
            if out.last() != Some(&p.position()) {
                out.push(p.position());
            }
        }
        out
    }
}

/// What the agent perceives at one pose.
#[derive(Debug, Clone)]
pub struct Sensing {
    pub panorama: Panorama,
    pub mask: ObstacleMask,
    pub obs: Vec<f64>,
    pub candidates: CandidateSet,
    pub heatmap_peak: Option<f64>,
}

/// Shared per-map state for rollouts.
#[derive(Debug, Clone)]
pub struct Navigator<'a> {
    pub grid: &'a SemanticGrid,
    pub config: &'a TrainConfig,
    open: Option<OpenVocabulary>,
    pub vocab: InstructionVocab,
}

fn episode_err(ep: &Episode, e: impl std::fmt::Display) -> AgentError {
    AgentError::Episode(ep.id.clone(), e.to_string())
}

impl<'a> Navigator<'a> {
    pub fn new(grid: &'a SemanticGrid, config: &'a TrainConfig) -> Result<Self, AgentError> {
        config.validate()?;
        let open = if config.mask {
            Some(OpenVocabulary::new(&config.vocab, grid.legend()).map_err(|e| AgentError::Config(e.to_string()))?)
        } else {
            None
        };
        Ok(Self { grid, config, open, vocab: InstructionVocab::from_legend(grid.legend()) })
    }

    pub fn sense(&self, ep: &Episode, pose: Pose, source: Option<WaypointSource<'_>>) -> Result<Sensing, AgentError> {
        let panorama = raycast_panorama(self.grid, pose, self.config.rays_per_sector, self.config.max_range)
            .map_err(|e| episode_err(ep, e))?;
        let mask = match &self.open {
            Some(v) => obstacle_mask(&panorama, v),
            None => ObstacleMask::ones(&panorama),
        };
        let obs = observation_summary(&panorama, &mask);
        let mut heatmap_peak = None;
        let waypoints = match source {
            None => WaypointSet::default(),
            Some(WaypointSource::Ground(graph)) => gt_waypoints(self.grid, graph, pose),
            Some(WaypointSource::Learned { predictor, nms }) => {
                let f = features(&panorama, &mask, self.grid).map_err(|e| episode_err(ep, e))?;
                let hm = predictor.predict(&f).map_err(|e| episode_err(ep, e))?;
                heatmap_peak = Some(hm.max());
                nms_sample(&hm, &nms)
            }
        };
        let candidates = candidate_features(&panorama, &mask, &waypoints, pose, self.grid);
        Ok(Sensing { panorama, mask, obs, candidates, heatmap_peak })
    }

    /// Distance fields toward every gt node.
    pub fn gt_fields(&self, ep: &Episode) -> Result<Vec<DistanceField>, AgentError> {
        ep.gt_path.iter().map(|&p| distance_field(self.grid, p).map_err(|e| episode_err(ep, e))).collect()
    }

    /// High-level rollout. `observe` sees every step before the choice is
    /// executed, together with the teacher's choice.
    pub fn rollout_high_with(
        &self,
        ep: &Episode,
        source: WaypointSource<'_>,
        policy: HighPolicy<'_>,
        mut observe: impl FnMut(usize, Pose, &Sensing, usize),
    ) -> Result<Rollout, AgentError> {
        let cfg = self.config;
        let fields = self.gt_fields(ep)?;
        let mut state = ScorerState::new(self.vocab.encode(&ep.instruction));
        let mut rng = match policy {
            HighPolicy::Random(seed) => Some(keyed_substream(seed, "random-policy", &ep.id)),
            _ => None,
        };
        let mut pose = ep.start;
        let mut poses = vec![pose];
        let mut steps = Vec::new();
        let mut collisions = 0;
        let mut stopped = false;
        let mut progress = advance_progress(&ep.gt_path, pose.position(), 0, cfg.reach);
        for t in 0..cfg.max_high_steps {
            let budget = cfg.max_low_actions - (poses.len() - 1);
            if budget == 0 {
                break;
            }
            let sensing = self.sense(ep, pose, Some(source))?;
            let cands = &sensing.candidates;
            let (teacher, target) =
                teacher_choice(self.grid, &ep.gt_path, &fields, progress, pose, cands, cfg.success_threshold);
            progress = target;
            observe(t, pose, &sensing, teacher);
            let (probs, chosen) = match policy {
                HighPolicy::Scorer(params) => {
                    let probs = params.forward(&state, &sensing.obs, cands)?.probs;
                    let best = (0..probs.len()).fold(0, |b, i| if probs[i] > probs[b] { i } else { b });
                    (probs, best)
                }
                HighPolicy::Teacher => (Vec::new(), teacher),
                HighPolicy::Random(_) => {
                    let n = cands.len();
                    let rng = rng.as_mut().expect("random policy has a stream");
                    (vec![1.0 / n as f64; n], rng.gen_range(0..n))
                }
            };
            let mut record = StepRecord {
                step: t,
                pose,
                candidates: cands.waypoints.clone(),
                probs,
                chosen: Some(chosen),
                teacher: Some(teacher),
                actions: String::new(),
                collisions: 0,
                heatmap_peak: sensing.heatmap_peak,
            };
            state.push(sensing.obs.clone());
            if chosen == 0 {
                record.actions = stop_label().to_text();
                steps.push(record);
                stopped = true;
                break;
            }
            let w = cands.waypoints[chosen - 1];
            let seq = compile_waypoint(smaller_rotation(w.heading), w.distance).map_err(|e| episode_err(ep, e))?;
            let exec = execute_tokens(self.grid, pose, seq.tokens(), budget);
            record.actions = seq.to_text();
            record.collisions = exec.collisions;
            collisions += exec.collisions;
            poses.extend(&exec.trajectory);
            pose = exec.final_pose;
            progress = advance_progress(&ep.gt_path, pose.position(), progress, cfg.reach);
            steps.push(record);
        }
        Ok(Rollout { episode_id: ep.id.clone(), mode: ActionMode::High, poses, steps, collisions, stopped })
    }

    /// Low-level rollout: each cycle decodes a token sequence from the step
    /// context and runs it until STOP, END or the action budget.
    pub fn rollout_low(&self, ep: &Episode, params: &AgentParams) -> Result<Rollout, AgentError> {
        let cfg = self.config;
        let mut state = ScorerState::new(self.vocab.encode(&ep.instruction));
        let mut pose = ep.start;
        let mut poses = vec![pose];
        let mut steps = Vec::new();
        let mut collisions = 0;
        let mut stopped = false;
        for t in 0..cfg.max_high_steps {
            let budget = cfg.max_low_actions - (poses.len() - 1);
            if budget == 0 {
                break;
            }
            let sensing = self.sense(ep, pose, None)?;
            let ctx = params.scorer.context_vector(&state, &sensing.obs)?;
            let decoded = decode_low(&params.decoder, &ctx, cfg.beam, cfg.max_decode_len);
            let mut exec = execute_tokens(self.grid, pose, decoded.sequence.tokens(), budget);
            if exec.stopped {
                exec.trajectory.pop();
            }
            collisions += exec.collisions;
            poses.extend(&exec.trajectory);
            steps.push(StepRecord {
                step: t,
                pose,
                candidates: Vec::new(),
                probs: Vec::new(),
                chosen: None,
                teacher: None,
                actions: decoded.sequence.to_text(),
                collisions: exec.collisions,
                heatmap_peak: None,
            });
            state.push(sensing.obs);
            pose = exec.final_pose;
            if exec.stopped {
                stopped = true;
                break;
            }
        }
        Ok(Rollout { episode_id: ep.id.clone(), mode: ActionMode::Low, poses, steps, collisions, stopped })
    }
}

pub fn rollout_high(
    grid: &SemanticGrid,
    config: &TrainConfig,
    ep: &Episode,
    source: WaypointSource<'_>,
    policy: HighPolicy<'_>,
) -> Result<Rollout, AgentError> {
    Navigator::new(grid, config)?.rollout_high_with(ep, source, policy, |_, _, _, _| {})
}

pub fn rollout_low(
    grid: &SemanticGrid,
    config: &TrainConfig,
    ep: &Episode,
    params: &AgentParams,
) -> Result<Rollout, AgentError> {
    Navigator::new(grid, config)?.rollout_low(ep, params)
}

/// Scores a rollout against the episode; the nDTW reference is the gt path
/// sampled every 0.25 m.
pub fn evaluate_rollout(
    grid: &SemanticGrid,
    ep: &Episode,
    rollout: &Rollout,
    d_th: f64,
) -> Result<EpisodeResult, AgentError> {
    let shortest = geodesic_distance(grid, ep.start.position(), ep.goal).map_err(|e| episode_err(ep, e))?;
    let reference = densify(&ep.gt_path, crate::world::FORWARD_M);
    Ok(EpisodeResult::evaluate(&ep.id, rollout.mode, &rollout.trajectory(), &reference, ep.goal, shortest, d_th))
}

/// Landing poses of every candidate, stop (index 0) staying put.
pub fn landing_poses(grid: &SemanticGrid, pose: Pose, cands: &CandidateSet) -> Vec<Pose> {
    std::iter::once(pose).chain(cands.waypoints.iter().map(|w| landing_pose(grid, pose, w))).collect()
}
