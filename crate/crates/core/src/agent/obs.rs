use crate::waypoint::{ObstacleMask, Waypoint, WaypointSet};
use crate::world::{normalize_heading, LegendEntry, Panorama, Point, Pose, SemanticGrid, SECTORS};

/// Per sector: masked openness, mean depth, min depth (depths / range).
pub const OBS_DIM: usize = 3 * SECTORS;

pub fn observation_summary(pano: &Panorama, mask: &ObstacleMask) -> Vec<f64> {
    let r = pano.rays_per_sector as f64;
    let mut out = Vec::with_capacity(OBS_DIM);
    for (s, rays) in pano.sectors.iter().enumerate() {
        let open: f64 = (0..rays.len()).map(|i| mask.get(s, i) as f64).sum();
        let mean = rays.iter().map(|x| x.depth).sum::<f64>() / r;
        let min = rays.iter().map(|x| x.depth).fold(f64::INFINITY, f64::min);
        out.extend([open / r, mean / pano.max_range, min / pano.max_range]);
    }
    out
}

/// `[sin h, cos h, d / 3, sector openness, class one-hot (legend + off-grid)]`.
pub fn cand_dim(legend_len: usize) -> usize {
    4 + legend_len + 1
}

/// Waypoint candidates for one step; index 0 is the stop action and has
/// no feature row.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CandidateSet {
    pub waypoints: Vec<Waypoint>,
    pub features: Vec<Vec<f64>>,
}

impl CandidateSet {
    /// Number of choices including stop.
    pub fn len(&self) -> usize {
        self.waypoints.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// World position of choice `i`, or `None` for stop.
    pub fn world_point(&self, i: usize, pose: Pose) -> Option<Point> {
        i.checked_sub(1).map(|k| self.waypoints[k].world_point(pose))
    }
}

pub fn candidate_features(
    pano: &Panorama,
    mask: &ObstacleMask,
    waypoints: &WaypointSet,
    pose: Pose,
    grid: &SemanticGrid,
) -> CandidateSet {
    let n_legend = grid.legend().len();
    let r = pano.rays_per_sector as f64;
    let features = waypoints
        .waypoints
        .iter()
        .map(|w| {
            let mut row = vec![0.0; cand_dim(n_legend)];
            let rad = w.heading.to_radians();
            row[0] = rad.sin();
            row[1] = rad.cos();
            row[2] = w.distance / 3.0;
            let sector = ((normalize_heading(w.heading) / 30.0).round() as usize) % SECTORS;
            row[3] = (0..pano.rays_per_sector).map(|i| mask.get(sector, i) as f64).sum::<f64>() / r;
            let slot = grid.class_at_point(w.world_point(pose)).and_then(|id| grid.legend_slot(id)).unwrap_or(n_legend);
            row[4 + slot] = 1.0;
            row
        })
        .collect();
    CandidateSet { waypoints: waypoints.waypoints.clone(), features }
}

/// Instruction words: direction and control words, then legend class names.
#[derive(Debug, Clone, PartialEq)]
pub struct InstructionVocab {
    words: Vec<String>,
}

const CONTROL_WORDS: [&str; 5] = ["<unk>", "left", "right", "forward", "stop"];

impl InstructionVocab {
    pub fn from_legend(legend: &[LegendEntry]) -> Self {
        let mut words: Vec<String> = CONTROL_WORDS.iter().map(|s| s.to_string()).collect();
        words.extend(legend.iter().map(|e| e.name.clone()).filter(|n| !CONTROL_WORDS.contains(&n.as_str())));
        Self { words }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn id(&self, word: &str) -> usize {
        self.words.iter().position(|w| w == word).unwrap_or(0)
    }

    /// Splits the instruction into segments: a segment opens at a turn word,
    /// at a `forward` not preceded by a turn word, and at `stop`.
    pub fn encode(&self, tokens: &[String]) -> EncodedInstruction {
        let ids: Vec<usize> = tokens.iter().map(|t| self.id(t)).collect();
        let mut segments: Vec<Vec<usize>> = Vec::new();
        let mut after_turn = false;
        for t in tokens {
            let opens = match t.as_str() {
                "left" | "right" | "stop" => true,
                "forward" => !after_turn,
                _ => segments.is_empty(),
            };
            if opens {
                segments.push(Vec::new());
            }
            segments.last_mut().expect("segment opened").push(self.id(t));
            after_turn = matches!(t.as_str(), "left" | "right");
        }
        if segments.is_empty() {
            segments.push(vec![self.id("stop")]);
        }
        EncodedInstruction { tokens: ids, segments }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedInstruction {
    pub tokens: Vec<usize>,
    pub segments: Vec<Vec<usize>>,
}

impl EncodedInstruction {
    /// Segment in focus at step `t`; the last segment once exhausted.
    pub fn segment(&self, t: usize) -> &[usize] {
        &self.segments[t.min(self.segments.len() - 1)]
    }
}
