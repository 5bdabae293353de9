use serde::{Deserialize, Serialize};

use super::WaypointError;
use crate::jsonfmt::ser_vec_full;
use crate::world::normalize_heading;

pub const ANGLE_BINS: usize = 120;
pub const DIST_BINS: usize = 12;
pub const ANGLE_BIN_DEG: f64 = 3.0;
pub const DIST_BIN_M: f64 = 0.25;

const MIN_DIST: f64 = DIST_BIN_M;
const MAX_DIST: f64 = DIST_BIN_M * DIST_BINS as f64;
// tolerance for neighbors sitting on the range limits up to float noise
const RANGE_SLACK: f64 = 1e-9;

/// Quantizes a relative waypoint into heatmap bins.
pub fn bin_of(heading: f64, distance: f64) -> Result<(usize, usize), WaypointError> {
    if !heading.is_finite() || !(MIN_DIST - RANGE_SLACK..=MAX_DIST + RANGE_SLACK).contains(&distance) {
        return Err(WaypointError::DistanceOutOfRange(distance));
    }
    let a = ((normalize_heading(heading) / ANGLE_BIN_DEG).floor() as usize).min(ANGLE_BINS - 1);
    let d = ((distance / DIST_BIN_M).round() as i64 - 1).clamp(0, DIST_BINS as i64 - 1) as usize;
    Ok((a, d))
}

/// Bin center as `(degrees, meters)`.
pub fn center_of(angle_bin: usize, dist_bin: usize) -> (f64, f64) {
    (ANGLE_BIN_DEG * angle_bin as f64 + ANGLE_BIN_DEG / 2.0, DIST_BIN_M * (dist_bin + 1) as f64)
}

/// Absolute circular difference in degrees, in `[0, 180]`.
pub fn angle_diff(a: f64, b: f64) -> f64 {
    let d = normalize_heading(a - b);
    d.min(360.0 - d)
}

/// Non-negative scores, row-major by angle bin: index `a · 12 + d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    #[serde(serialize_with = "ser_vec_full")]
    scores: Vec<f64>,
}

impl Heatmap {
    pub fn zeros() -> Self {
        Self { scores: vec![0.0; ANGLE_BINS * DIST_BINS] }
    }

    pub fn from_scores(scores: Vec<f64>) -> Result<Self, WaypointError> {
        if scores.len() != ANGLE_BINS * DIST_BINS {
            return Err(WaypointError::Shape(format!(
                "heatmap needs {} scores, got {}",
                ANGLE_BINS * DIST_BINS,
                scores.len()
            )));
        }
        if scores.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(WaypointError::Shape("heatmap scores must be finite and non-negative".into()));
        }
        Ok(Self { scores })
    }

    pub fn get(&self, a: usize, d: usize) -> f64 {
        self.scores[a * DIST_BINS + d]
    }

    pub fn set(&mut self, a: usize, d: usize, v: f64) {
        self.scores[a * DIST_BINS + d] = v.max(0.0);
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    /// First bin holding the maximum score.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, &s) in self.scores.iter().enumerate() {
            if s > self.scores[best] {
                best = i;
            }
        }
        (best / DIST_BINS, best % DIST_BINS)
    }

    pub fn max(&self) -> f64 {
        self.scores.iter().copied().fold(0.0, f64::max)
    }

    /// Circular shift by `k` angle bins: output bin `a + k` takes bin `a`.
    pub fn rotated(&self, k: usize) -> Self {
        let mut out = Self::zeros();
        for a in 0..ANGLE_BINS {
            for d in 0..DIST_BINS {
                out.scores[((a + k) % ANGLE_BINS) * DIST_BINS + d] = self.get(a, d);
            }
        }
        out
    }

    pub fn mse(&self, other: &Heatmap) -> f64 {
        self.scores.iter().zip(&other.scores).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / self.scores.len() as f64
    }
}

/// Separable Gaussian bump widths, truncated at `truncation · σ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelParams {
    pub sigma_angle_deg: f64,
    pub sigma_dist_m: f64,
    pub truncation: f64,
}

impl Default for KernelParams {
    fn default() -> Self {
        Self { sigma_angle_deg: 15.0, sigma_dist_m: 1.75, truncation: 2.0 }
    }
}

impl KernelParams {
    /// Reads the widths as variances instead of standard deviations.
    pub fn from_variances(var_angle: f64, var_dist: f64) -> Self {
        Self { sigma_angle_deg: var_angle.sqrt(), sigma_dist_m: var_dist.sqrt(), ..Self::default() }
    }

    /// Bump height at the given offsets from the peak; zero past the cut.
    pub fn weight(&self, d_angle: f64, d_dist: f64) -> f64 {
        if d_angle.abs() > self.truncation * self.sigma_angle_deg || d_dist.abs() > self.truncation * self.sigma_dist_m
        {
            return 0.0;
        }
        let za = d_angle / self.sigma_angle_deg;
        let zd = d_dist / self.sigma_dist_m;
        (-0.5 * (za * za + zd * zd)).exp()
    }
}

/// One peak-1 bump per target bin, combined by elementwise max.
pub fn heatmap_from_bins(targets: &[(usize, usize)], kernel: &KernelParams) -> Heatmap {
    let mut hm = Heatmap::zeros();
    let reach_a = (kernel.truncation * kernel.sigma_angle_deg / ANGLE_BIN_DEG).floor() as i64;
    let reach_d = (kernel.truncation * kernel.sigma_dist_m / DIST_BIN_M).floor() as i64;
    for &(ta, td) in targets {
        for da in -reach_a.min(ANGLE_BINS as i64 / 2)..=reach_a.min(ANGLE_BINS as i64 / 2 - 1) {
            let a = (ta as i64 + da).rem_euclid(ANGLE_BINS as i64) as usize;
            for dd in -reach_d..=reach_d {
                let d = td as i64 + dd;
                if !(0..DIST_BINS as i64).contains(&d) {
                    continue;
                }
                let w = kernel.weight(da as f64 * ANGLE_BIN_DEG, dd as f64 * DIST_BIN_M);
                let i = a * DIST_BINS + d as usize;
                if w > hm.scores[i] {
                    hm.scores[i] = w;
                }
            }
        }
    }
    hm
}

/// Target heatmap for a graph node: its neighbors, seen from heading 0.
pub fn gt_heatmap(
    graph: &crate::world::NavGraph,
    node: usize,
    kernel: &KernelParams,
) -> Result<Heatmap, WaypointError> {
    let set = super::neighbor_waypoints(graph, node, 0.0);
    let bins = set.waypoints.iter().map(|w| bin_of(w.heading, w.distance)).collect::<Result<Vec<_>, _>>()?;
    Ok(heatmap_from_bins(&bins, kernel))
}
