use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use dualnav_core::agent::{
    build_step_data, cand_dim, evaluate_rollout, rollout_high, rollout_low, train_agent as fit_agent, AgentParams,
    DecoderParams, HighPolicy, InstructionVocab, Navigator, Rollout, ScorerParams, TrainConfig, WaypointSource,
};
use dualnav_core::metrics::{aggregate, ActionMode, Summary};
use dualnav_core::rng::keyed_substream;
use dualnav_core::waypoint::{
    collect_samples, eval_waypoints_multi, features, nms_sample, obstacle_mask, train_predictor, FeatureTensor,
    ObstacleMask, OpenVocabulary, PanoramaSample, WaypointPredictor,
};
use dualnav_core::world::{gen_world as generate, make_episodes as sample_episodes, Episode, SemanticGrid};
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{parse_vocab, PolicyKind, RunConfig, WaypointKind};
use crate::corpus::{json_lines, load_episodes, read_json, write_file, MapEntry, MapSet};
use crate::{
    Common, EvalAgentArgs, EvalWpArgs, GenWorldArgs, MakeEpisodesArgs, MaskArgs, NmsArgs, RolloutArgs, TraceArgs,
    TrainAgentArgs, TrainWpArgs,
};

/// Agent checkpoint bundle.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub scorer: ScorerParams,
    pub decoder: DecoderParams,
    pub config: TrainConfig,
    pub seed: u64,
}

fn resolve(common: &Common, mask: Option<&MaskArgs>) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(common.config.as_deref())?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = &common.maps_dir {
        cfg.maps_dir = Some(dir.clone());
    }
    if let Some(m) = mask {
        if let Some(on) = m.mask {
            cfg.mask = on.into();
        }
        if let Some(list) = &m.vocab {
            cfg.vocab = parse_vocab(list);
        }
    }
    Ok(cfg)
}

fn apply_nms(cfg: &mut RunConfig, nms: &NmsArgs) {
    if let Some(k) = nms.nms_k {
        cfg.nms.k = k;
    }
    if let Some(t) = nms.nms_threshold {
        cfg.nms.threshold = t;
    }
}

fn json<T: Serialize>(value: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(text)
}

pub fn gen_world(a: GenWorldArgs) -> Result<()> {
    let mut cfg = resolve(&a.common, None)?;
    if let Some(w) = a.width {
        cfg.world.width = w;
    }
    if let Some(h) = a.height {
        cfg.world.height = h;
    }
    if let Some(r) = a.rooms {
        cfg.world.rooms = r;
    }
    if a.count == 0 {
        bail!("--count must be positive");
    }
    let outputs: Vec<(std::path::PathBuf, u64)> = match (&a.out, &cfg.maps_dir) {
        (Some(out), _) if a.count == 1 => vec![(out.clone(), cfg.seed)],
        (Some(_), _) => bail!("--out writes a single map; use --maps-dir with --count"),
        (None, Some(dir)) => (0..a.count as u64)
            .map(|i| {
                let seed = cfg.seed.checked_add(i).context("seed overflow")?;
                Ok((dir.join(format!("m{seed}.json")), seed))
            })
            .collect::<Result<_>>()?,
        (None, None) => bail!("give --out or --maps-dir"),
    };
    let grids: Vec<SemanticGrid> = outputs
        .iter()
        .map(|&(_, seed)| generate(seed, &cfg.world).map_err(|e| anyhow!("seed {seed}: {e}")))
        .collect::<Result<_>>()?;
    for ((path, _), grid) in outputs.iter().zip(&grids) {
        write_file(path, &grid.to_json())?;
    }
    let cells: usize = grids.iter().map(|g| g.traversable_count()).sum();
    println!("wrote {} map(s), {cells} traversable cells", grids.len());
    Ok(())
}

pub fn make_episodes(a: MakeEpisodesArgs) -> Result<()> {
    let mut cfg = resolve(&a.common, None)?;
    if let Some(v) = a.min_geodesic {
        cfg.episode.min_geodesic = v;
    }
    if let Some(v) = a.max_geodesic {
        cfg.episode.max_geodesic = Some(v);
    }
    if let Some(v) = a.min_separation {
        cfg.episode.min_separation = v;
    }
    if a.n == 0 {
        bail!("--n must be positive");
    }
    let maps = MapSet::load(cfg.maps_dir()?, cfg.node_spacing)?;
    let k = maps.maps.len();
    let mut episodes = Vec::with_capacity(a.n);
    for (i, (id, m)) in maps.maps.iter().enumerate() {
        let count = a.n / k + usize::from(i < a.n % k);
        if count == 0 {
            continue;
        }
        let seed: u64 = keyed_substream(cfg.seed, "episodes", id).gen();
        let eps =
            sample_episodes(&m.grid, &m.graph, id, count, seed, &cfg.episode).map_err(|e| anyhow!("map {id}: {e}"))?;
        for ep in &eps {
            ep.validate(&m.grid, &m.graph).map_err(|e| anyhow!("generated invalid episode: {e}"))?;
        }
        episodes.extend(eps);
    }
    let text: String = episodes.iter().map(|e| e.to_json_line() + "\n").collect();
    write_file(&a.out, &text)?;
    println!("wrote {} episodes over {k} map(s)", episodes.len());
    Ok(())
}

/// Open-area vocabulary per map, or `None` everywhere when masking is off.
fn vocabularies(cfg: &RunConfig, maps: &MapSet) -> Result<Vec<Option<OpenVocabulary>>> {
    maps.maps
        .iter()
        .map(|(id, m)| {
            if !cfg.mask {
                return Ok(None);
            }
            OpenVocabulary::new(&cfg.vocab, m.grid.legend()).map(Some).map_err(|e| anyhow!("map {id}: {e}"))
        })
        .collect()
}

fn sample_features(grid: &SemanticGrid, s: &PanoramaSample, vocab: Option<&OpenVocabulary>) -> Result<FeatureTensor> {
    let mask = match vocab {
        Some(v) => obstacle_mask(&s.panorama, v),
        None => ObstacleMask::ones(&s.panorama),
    };
    Ok(features(&s.panorama, &mask, grid)?)
}

/// Every graph-node panorama of every map, in map order.
fn panoramas<'a>(cfg: &RunConfig, maps: &'a MapSet) -> Result<Vec<(&'a MapEntry, usize, PanoramaSample)>> {
    let mut out = Vec::new();
    for (slot, (id, m)) in maps.maps.iter().enumerate() {
        let samples =
            collect_samples(&m.grid, &m.graph, id, cfg.train.rays_per_sector, cfg.train.max_range, &cfg.kernel)?;
        out.extend(samples.into_iter().map(|s| (m, slot, s)));
    }
    Ok(out)
}

pub fn train_wp(a: TrainWpArgs) -> Result<()> {
    let mut cfg = resolve(&a.common, Some(&a.mask))?;
    if let Some(e) = a.epochs {
        cfg.predictor_train.epochs = e;
    }
    if let Some(lr) = a.lr {
        cfg.predictor_train.lr = lr;
    }
    let cfg = cfg.finish()?;
    let maps = MapSet::load(cfg.maps_dir()?, cfg.node_spacing)?;
    let vocabs = vocabularies(&cfg, &maps)?;
    let samples = panoramas(&cfg, &maps)?;
    let corpus: Vec<(FeatureTensor, _)> = samples
        .par_iter()
        .map(|(m, slot, s)| Ok((sample_features(&m.grid, s, vocabs[*slot].as_ref())?, s.gt.clone())))
        .collect::<Result<_>>()?;
    let (model, report) = train_predictor(&corpus, &cfg.predictor_train)?;
    write_file(&a.out, &json(&model)?)?;
    if let Some(log) = &a.log {
        write_file(log, &json(&report)?)?;
    }
    let last = report.epoch_mse.last().copied().unwrap_or(f64::NAN);
    println!("trained on {} panoramas, final mse {last:.6}", corpus.len());
    Ok(())
}

fn load_predictor(path: &Path) -> Result<WaypointPredictor> {
    read_json(path, "predictor")
}

pub fn eval_wp(a: EvalWpArgs) -> Result<()> {
    let mut cfg = resolve(&a.common, Some(&a.mask))?;
    apply_nms(&mut cfg, &a.nms);
    if let Some(p) = &a.predictor {
        cfg.predictor = Some(p.clone());
    }
    let cfg = cfg.finish()?;
    let maps = MapSet::load(cfg.maps_dir()?, cfg.node_spacing)?;
    let vocabs = vocabularies(&cfg, &maps)?;
    let model = load_predictor(cfg.predictor()?)?;
    let samples = panoramas(&cfg, &maps)?;
    let preds = samples
        .par_iter()
        .map(|(m, slot, s)| {
            let hm = model.predict(&sample_features(&m.grid, s, vocabs[*slot].as_ref())?)?;
            Ok(nms_sample(&hm, &cfg.nms))
        })
        .collect::<Result<Vec<_>>>()?;
    let targets: Vec<_> = samples.iter().map(|(_, _, s)| s.target.clone()).collect();
    let grids: Vec<&SemanticGrid> = samples.iter().map(|(m, _, _)| &m.grid).collect();
    let poses: Vec<_> = samples.iter().map(|(_, _, s)| s.pose).collect();
    let report = eval_waypoints_multi(&preds, &targets, &grids, &poses)?;
    write_file(&a.out, &json(&report)?)?;
    println!(
        "{} panoramas: delta {:.3}  %Open {:.3}  d_C {:.3}  d_H {:.3}",
        preds.len(),
        report.delta,
        report.pct_open,
        report.d_c,
        report.d_h
    );
    Ok(())
}

/// Instruction vocabulary shared by all maps; legends must agree.
fn shared_vocab(maps: &MapSet) -> Result<(InstructionVocab, usize)> {
    let mut legends = maps.maps.values().map(|m| m.grid.legend());
    let first = legends.next().context("no maps loaded")?;
    if legends.any(|l| l != first) {
        bail!("all maps must share one legend");
    }
    Ok((InstructionVocab::from_legend(first), first.len()))
}

pub fn train_agent(a: TrainAgentArgs) -> Result<()> {
    let mut cfg = resolve(&a.common, Some(&a.mask))?;
    if let Some(p) = &a.episodes {
        cfg.episodes = Some(p.clone());
    }
    if let Some(l) = a.lambda {
        cfg.train.lambda = l;
    }
    if let Some(e) = a.epochs {
        cfg.train.epochs = e;
    }
    if let Some(lr) = a.lr {
        cfg.train.lr = lr;
    }
    let cfg = cfg.finish()?;
    let maps = MapSet::load(cfg.maps_dir()?, cfg.node_spacing)?;
    let (vocab, legend_len) = shared_vocab(&maps)?;
    let episodes = load_episodes(cfg.episodes()?, &maps)?;
    vocabularies(&cfg, &maps)?;
    let data = episodes
        .par_iter()
        .map(|ep| {
            let m = maps.get(&ep.map_id)?;
            let nav = Navigator::new(&m.grid, &cfg.train)?;
            Ok(build_step_data(&nav, &m.graph, ep)?)
        })
        .collect::<Result<Vec<_>>>()?;
    let (params, log) = fit_agent(&data, &vocab, legend_len, &cfg.train)?;
    let ckpt = Checkpoint { scorer: params.scorer, decoder: params.decoder, config: cfg.train.clone(), seed: cfg.seed };
    write_file(&a.out, &serde_json::to_string(&ckpt)?)?;
    if let Some(path) = &a.log {
        write_file(path, &json(&log)?)?;
    }
    if let Some(e) = log.entries.last() {
        println!(
            "trained {} epochs on {} episodes: loss {:.4} (il {:.4} rl {:.4} low {:.4}), teacher accuracy {:.3}",
            log.entries.len(),
            data.len(),
            e.loss.total(),
            e.loss.il,
            e.loss.rl,
            e.loss.low,
            e.teacher_accuracy
        );
    }
    Ok(())
}

/// Resolved inputs for rollouts.
struct RolloutSetup {
    cfg: RunConfig,
    agent_config: TrainConfig,
    maps: MapSet,
    episodes: Vec<Episode>,
    params: Option<AgentParams>,
    predictor: Option<WaypointPredictor>,
}

fn setup_rollouts(a: &RolloutArgs) -> Result<RolloutSetup> {
    let mut cfg = resolve(&a.common, Some(&a.mask))?;
    apply_nms(&mut cfg, &a.nms);
    if let Some(p) = &a.episodes {
        cfg.episodes = Some(p.clone());
    }
    if let Some(p) = &a.checkpoint {
        cfg.checkpoint = Some(p.clone());
    }
    if let Some(p) = &a.predictor {
        cfg.predictor = Some(p.clone());
    }
    if let Some(m) = a.mode {
        cfg.mode = m.into();
    }
    if let Some(w) = a.waypoints {
        cfg.waypoints = w;
    }
    if let Some(p) = a.policy {
        cfg.policy = p;
    }
    let cfg = cfg.finish()?;
    if cfg.mode == ActionMode::Low && cfg.policy != PolicyKind::Scorer {
        bail!("--policy {:?} only applies to high mode", cfg.policy);
    }
    let maps = MapSet::load(cfg.maps_dir()?, cfg.node_spacing)?;
    let (vocab, legend_len) = shared_vocab(&maps)?;
    let episodes = load_episodes(cfg.episodes()?, &maps)?;
    let needs_params = cfg.mode == ActionMode::Low || cfg.policy == PolicyKind::Scorer;
    let (params, mut agent_config) = if needs_params {
        let ckpt: Checkpoint = read_json(cfg.checkpoint()?, "checkpoint")?;
        let params = AgentParams { scorer: ckpt.scorer, decoder: ckpt.decoder };
        params.validate()?;
        ckpt.config.validate()?;
        if params.scorer.embed.vocab != vocab.len() || params.scorer.candidate.inputs != cand_dim(legend_len) {
            bail!("checkpoint was trained on a different map legend");
        }
        (Some(params), ckpt.config)
    } else {
        (None, cfg.train.clone())
    };
    // masking flags given on the command line win over the checkpoint
    if a.mask.mask.is_some() || a.mask.vocab.is_some() {
        agent_config.mask = cfg.mask;
        agent_config.vocab = cfg.vocab.clone();
    }
    for (id, m) in &maps.maps {
        Navigator::new(&m.grid, &agent_config).map_err(|e| anyhow!("map {id}: {e}"))?;
    }
    // low mode runs without waypoints, so no predictor is read
    let predictor = if cfg.mode == ActionMode::High && cfg.waypoints == WaypointKind::Learned {
        Some(load_predictor(cfg.predictor()?)?)
    } else {
        None
    };
    Ok(RolloutSetup { cfg, agent_config, maps, episodes, params, predictor })
}

impl RolloutSetup {
    fn run(&self, ep: &Episode) -> Result<(Rollout, &MapEntry)> {
        let m = self.maps.get(&ep.map_id)?;
        let rollout = match self.cfg.mode {
            ActionMode::Low => rollout_low(&m.grid, &self.agent_config, ep, self.params.as_ref().expect("loaded"))?,
            ActionMode::High => {
                let source = match &self.predictor {
                    Some(predictor) => WaypointSource::Learned { predictor, nms: self.cfg.nms },
                    None => WaypointSource::Ground(&m.graph),
                };
                let policy = match self.cfg.policy {
                    PolicyKind::Scorer => HighPolicy::Scorer(&self.params.as_ref().expect("loaded").scorer),
                    PolicyKind::Teacher => HighPolicy::Teacher,
                    PolicyKind::Random => HighPolicy::Random(self.cfg.seed),
                };
                rollout_high(&m.grid, &self.agent_config, ep, source, policy)?
            }
        };
        Ok((rollout, m))
    }
}

pub fn eval_agent(a: EvalAgentArgs) -> Result<()> {
    let setup = setup_rollouts(&a.rollout)?;
    let d_th = setup.agent_config.success_threshold;
    let results = setup
        .episodes
        .par_iter()
        .map(|ep| {
            let (rollout, m) = setup.run(ep)?;
            Ok(evaluate_rollout(&m.grid, ep, &rollout, d_th)?)
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = aggregate(&results);
    write_file(&a.out, &json_lines(&results)?)?;
    if let Some(path) = &a.summary {
        write_file(path, &json(&summary)?)?;
    }
    println!("{}", Summary::table_header());
    for s in &summary {
        println!("{}", s.table_row());
    }
    Ok(())
}

pub fn trace(a: TraceArgs) -> Result<()> {
    let setup = setup_rollouts(&a.rollout)?;
    let ep = setup
        .episodes
        .iter()
        .find(|e| e.id == a.episode_id)
        .ok_or_else(|| anyhow!("unknown episode id {:?}", a.episode_id))?;
    let (rollout, _) = setup.run(ep)?;
    write_file(&a.out, &json_lines(&rollout.steps)?)?;
    println!("{}: {} steps, {} low-level actions", ep.id, rollout.steps.len(), rollout.poses.len() - 1);
    Ok(())
}
