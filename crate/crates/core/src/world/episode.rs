use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{bearing, distance, normalize_heading, segment_clear, NavGraph, Point, Pose, SemanticGrid, WorldError};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub id: String,
    pub map_id: String,
    pub start: Pose,
    #[serde(serialize_with = "crate::jsonfmt::ser_point_meters")]
    pub goal: Point,
    #[serde(serialize_with = "crate::jsonfmt::ser_points_meters")]
    pub gt_path: Vec<Point>,
    pub instruction: Vec<String>,
}

impl Episode {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("episode serializes")
    }

    /// Parses JSON Lines, skipping blank lines.
    pub fn parse_lines(text: &str) -> Result<Vec<Episode>, WorldError> {
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(n, l)| {
                serde_json::from_str(l).map_err(|e| WorldError::Malformed(format!("episode line {}: {e}", n + 1)))
            })
            .collect()
    }

    /// Checks the episode against its map and graph.
    pub fn validate(&self, grid: &SemanticGrid, graph: &NavGraph) -> Result<(), String> {
        let (Some(first), Some(last)) = (self.gt_path.first(), self.gt_path.last()) else {
            return Err(format!("{}: empty gt_path", self.id));
        };
        if !grid.is_traversable_at(self.start.position()) || !grid.is_traversable_at(self.goal) {
            return Err(format!("{}: start or goal not traversable", self.id));
        }
        let near_start = graph.nearest_node(self.start.position()).map(|i| graph.nodes[i]);
        let near_goal = graph.nearest_node(self.goal).map(|i| graph.nodes[i]);
        if near_start.map(|n| distance(n, *first)) > Some(1e-9) || near_goal.map(|n| distance(n, *last)) > Some(1e-9) {
            return Err(format!("{}: gt_path endpoints are not the nodes nearest start/goal", self.id));
        }
        for pair in self.gt_path.windows(2) {
            let (Some(a), Some(b)) = (graph.node_at(pair[0]), graph.node_at(pair[1])) else {
                return Err(format!("{}: gt_path point is not a graph node", self.id));
            };
            if !graph.neighbors(a).contains(&b) {
                return Err(format!("{}: gt_path nodes {a} and {b} share no edge", self.id));
            }
        }
        if self.instruction.last().map(String::as_str) != Some("stop") {
            return Err(format!("{}: instruction must end with stop", self.id));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpisodeParams {
    /// Lower bound on the graph path length.
    pub min_geodesic: f64,
    pub max_geodesic: Option<f64>,
    /// Lower bound on the straight-line start/goal distance.
    pub min_separation: f64,
}

impl Default for EpisodeParams {
    fn default() -> Self {
        Self { min_geodesic: 3.0, max_geodesic: None, min_separation: 0.0 }
    }
}

fn signed_turn(deg: f64) -> f64 {
    let h = normalize_heading(deg);
    if h > 180.0 {
        h - 360.0
    } else {
        h
    }
}

fn dominant_class(grid: &SemanticGrid, a: Point, b: Point) -> Option<String> {
    let step = grid.cell_size() / 4.0;
    let n = (distance(a, b) / step).ceil().max(1.0) as usize;
    let mut counts: BTreeMap<u16, usize> = BTreeMap::new();
    for k in 0..=n {
        let t = k as f64 / n as f64;
        if let Some(id) = grid.class_at_point([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]) {
            *counts.entry(id).or_default() += 1;
        }
    }
    // highest count, lowest id on ties
    let best = counts.iter().fold(None::<(u16, usize)>, |acc, (&id, &c)| match acc {
        Some((_, bc)) if bc >= c => acc,
        _ => Some((id, c)),
    });
    best.and_then(|(id, _)| grid.class_name(id).map(str::to_string))
}

/// Walks the path: a turn word when the bearing changes by more than 30°,
/// then `forward` and the dominant class of the segment; `stop` at the end.
pub fn synthesize_instruction(grid: &SemanticGrid, path: &[Point], start_heading: f64) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut prev = start_heading;
    for seg in path.windows(2) {
        let b = bearing(seg[0], seg[1]);
        let turn = signed_turn(b - prev);
        if turn > 30.0 && turn < 180.0 {
            tokens.push("right".to_string());
        } else if !(-30.0..180.0).contains(&turn) {
            tokens.push("left".to_string());
        }
        tokens.push("forward".to_string());
        if let Some(class) = dominant_class(grid, seg[0], seg[1]) {
            tokens.push(class);
        }
        prev = b;
    }
    tokens.push("stop".to_string());
    tokens
}

/// Samples `n` distinct start/goal node pairs; the agent starts on the start
/// node facing the first path segment (rounded to 15°).
pub fn make_episodes(
    grid: &SemanticGrid,
    graph: &NavGraph,
    map_id: &str,
    n: usize,
    seed: u64,
    params: &EpisodeParams,
) -> Result<Vec<Episode>, WorldError> {
    let comps = graph.components();
    let mut sizes = BTreeMap::new();
    for &c in &comps {
        *sizes.entry(c).or_insert(0usize) += 1;
    }
    if !sizes.values().any(|&s| s >= 2) {
        return Err(WorldError::Infeasible("navigation graph has no component with two nodes".into()));
    }
    let mut pairs = Vec::new();
    for s in 0..graph.nodes.len() {
        let (dist, _) = graph.shortest_from(s);
        for g in 0..graph.nodes.len() {
            let d = dist[g];
            if g == s || !d.is_finite() || d < params.min_geodesic {
                continue;
            }
            if params.max_geodesic.is_some_and(|m| d > m) {
                continue;
            }
            if distance(graph.nodes[s], graph.nodes[g]) < params.min_separation {
                continue;
            }
            pairs.push((s, g));
        }
    }
    if pairs.len() < n {
        return Err(WorldError::Infeasible(format!(
            "map {map_id}: only {} start/goal pairs satisfy the constraints, {n} requested",
            pairs.len()
        )));
    }
    let mut rng = rng::keyed_substream(seed, "episodes", map_id);
    pairs.shuffle(&mut rng);
    pairs
        .into_iter()
        .take(n)
        .enumerate()
        .map(|(k, (s, g))| {
            let idx = graph.shortest_path(s, g).expect("pair is connected");
            let gt_path: Vec<Point> = idx.iter().map(|&i| graph.nodes[i]).collect();
            let heading = normalize_heading((bearing(gt_path[0], gt_path[1]) / 15.0).round() * 15.0);
            let start = Pose::new(gt_path[0][0], gt_path[0][1], heading);
            debug_assert!(gt_path.windows(2).all(|w| segment_clear(grid, w[0], w[1])));
            Ok(Episode {
                id: format!("{map_id}-{k:04}"),
                map_id: map_id.to_string(),
                start,
                goal: graph.nodes[g],
                instruction: synthesize_instruction(grid, &gt_path, heading),
                gt_path,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{build_nav_graph, gen_world, LegendEntry, WorldParams, MAX_EDGE_M};

    fn corridor() -> (SemanticGrid, NavGraph) {
        // 6.5 m x 0.75 m corridor of floor inside walls
        let (w, h) = (28, 5);
        let cells = (0..w * h)
            .map(|i| {
                let (x, y) = (i % w, i / w);
                if x == 0 || y == 0 || x == w - 1 || y == h - 1 {
                    1
                } else {
                    0
                }
            })
            .collect();
        let legend = vec![
            LegendEntry { id: 0, name: "floor".into(), traversable: true },
            LegendEntry { id: 1, name: "wall".into(), traversable: false },
        ];
        let g = SemanticGrid::new(w, h, 0.25, cells, legend).unwrap();
        let nodes = (0..4).map(|k| [0.375 + 2.0 * k as f64, 0.625]).collect();
        let graph = NavGraph::with_nodes(&g, nodes);
        (g, graph)
    }

    #[test]
    fn straight_corridor_instruction() {
        let (g, graph) = corridor();
        let path: Vec<Point> = graph.nodes.clone();
        let words = synthesize_instruction(&g, &path, 0.0);
        assert!(words.contains(&"forward".to_string()));
        assert!(words.contains(&"floor".to_string()));
        assert!(!words.iter().any(|w| w == "left" || w == "right"));
        assert_eq!(words.last().unwrap(), "stop");
    }

    #[test]
    fn corridor_episodes() {
        let (g, graph) = corridor();
        let eps = make_episodes(&g, &graph, "corr", 3, 1, &EpisodeParams::default()).unwrap();
        for ep in &eps {
            ep.validate(&g, &graph).unwrap();
            assert!(ep.start.heading == 0.0 || ep.start.heading == 180.0);
        }
        assert!(make_episodes(&g, &graph, "corr", 100, 1, &EpisodeParams::default()).is_err());
    }

    #[test]
    fn generated_corpus_invariants() {
        let mut lengths = Vec::new();
        for seed in 0..4 {
            let g = gen_world(seed, &WorldParams::default()).unwrap();
            let graph = build_nav_graph(&g, 2.0).unwrap();
            let eps = make_episodes(&g, &graph, &format!("m{seed}"), 20, seed, &EpisodeParams::default()).unwrap();
            let again = make_episodes(&g, &graph, &format!("m{seed}"), 20, seed, &EpisodeParams::default()).unwrap();
            assert_eq!(eps, again);
            for ep in &eps {
                ep.validate(&g, &graph).unwrap();
                for w in ep.gt_path.windows(2) {
                    lengths.push(distance(w[0], w[1]));
                }
                let line = ep.to_json_line();
                let back = Episode::parse_lines(&line).unwrap();
                assert_eq!(back[0], *ep);
            }
        }
        assert!(lengths.iter().all(|&l| l <= MAX_EDGE_M));
    }
}
