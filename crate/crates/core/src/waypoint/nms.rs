use serde::{Deserialize, Serialize};

use super::heatmap::{angle_diff, center_of, Heatmap, ANGLE_BINS, DIST_BINS};
use crate::jsonfmt::{ser_f64_full, ser_point_meters};
use crate::world::{heading_vector, Point, Pose};

/// A waypoint relative to the sensing pose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    #[serde(serialize_with = "ser_f64_full")]
    pub heading: f64,
    #[serde(serialize_with = "ser_f64_full")]
    pub distance: f64,
    /// Cartesian offset in the agent frame (`+x` ahead, `+y` clockwise).
    #[serde(serialize_with = "ser_point_meters")]
    pub offset: Point,
}

impl Waypoint {
    pub fn new(heading: f64, distance: f64) -> Self {
        let (c, s) = heading_vector(heading);
        Self { heading, distance, offset: [distance * c, distance * s] }
    }

    pub fn world_point(&self, pose: Pose) -> Point {
        let (c, s) = heading_vector(pose.heading + self.heading);
        [pose.x + self.distance * c, pose.y + self.distance * s]
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct WaypointSet {
    pub waypoints: Vec<Waypoint>,
}

impl WaypointSet {
    pub fn len(&self) -> usize {
        self.waypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waypoints.is_empty()
    }

    pub fn offsets(&self) -> Vec<Point> {
        self.waypoints.iter().map(|w| w.offset).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NmsParams {
    pub k: usize,
    pub r_angle_deg: f64,
    pub r_dist_m: f64,
    pub threshold: f64,
}

impl Default for NmsParams {
    fn default() -> Self {
        Self { k: 5, r_angle_deg: 30.0, r_dist_m: 0.75, threshold: 0.35 }
    }
}

/// Greedy suppression in metric space. A bin is suppressed when it lies
/// strictly within both radii of a selected center. Ties go to the lowest
/// bin index.
pub fn nms_sample(hm: &Heatmap, p: &NmsParams) -> WaypointSet {
    let mut scores = hm.scores().to_vec();
    let mut out = WaypointSet::default();
    while out.len() < p.k {
        let mut best = None;
        for (i, &s) in scores.iter().enumerate() {
            if s >= p.threshold && best.is_none_or(|b: usize| s > scores[b]) {
                best = Some(i);
            }
        }
        let Some(i) = best else { break };
        let (ca, cd) = center_of(i / DIST_BINS, i % DIST_BINS);
        out.waypoints.push(Waypoint::new(ca, cd));
        for a in 0..ANGLE_BINS {
            for d in 0..DIST_BINS {
                let (ba, bd) = center_of(a, d);
                if angle_diff(ba, ca) < p.r_angle_deg && (bd - cd).abs() < p.r_dist_m {
                    scores[a * DIST_BINS + d] = f64::NEG_INFINITY;
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use rand::Rng as _;

    #[test]
    fn two_isolated_peaks() {
        let mut hm = Heatmap::zeros();
        hm.set(0, 3, 0.9);
        hm.set(30, 7, 0.8);
        let set = nms_sample(&hm, &NmsParams { k: 3, ..Default::default() });
        let got: Vec<(f64, f64)> = set.waypoints.iter().map(|w| (w.heading, w.distance)).collect();
        assert_eq!(got, vec![center_of(0, 3), center_of(30, 7)]);
    }

    #[test]
    fn empty_heatmap() {
        assert!(nms_sample(&Heatmap::zeros(), &NmsParams::default()).is_empty());
    }

    /// Straightforward restatement: repeatedly scan for the best surviving
    /// bin, keeping an explicit list of suppressed bins.
    fn oracle(hm: &Heatmap, p: &NmsParams) -> Vec<(usize, usize)> {
        let mut alive = vec![true; ANGLE_BINS * DIST_BINS];
        let mut picks = Vec::new();
        loop {
            if picks.len() == p.k {
                return picks;
            }
            let mut best: Option<(usize, usize)> = None;
            for a in 0..ANGLE_BINS {
                for d in 0..DIST_BINS {
                    let v = hm.get(a, d);
                    if alive[a * DIST_BINS + d] && v >= p.threshold && best.is_none_or(|(ba, bd)| v > hm.get(ba, bd)) {
                        best = Some((a, d));
                    }
                }
            }
            let Some((a, d)) = best else { return picks };
            picks.push((a, d));
            let (ca, cd) = center_of(a, d);
            for x in 0..ANGLE_BINS {
                for y in 0..DIST_BINS {
                    let (xa, yd) = center_of(x, y);
                    let mut da = (xa - ca).abs();
                    if da > 180.0 {
                        da = 360.0 - da;
                    }
                    if da < p.r_angle_deg && (yd - cd).abs() < p.r_dist_m {
                        alive[x * DIST_BINS + y] = false;
                    }
                }
            }
        }
    }

    #[test]
    fn clustered_peaks_match_oracle() {
        let mut rng = substream(41, "t");
        for _ in 0..200 {
            let mut hm = Heatmap::zeros();
            let ca = rng.gen_range(0..ANGLE_BINS);
            for _ in 0..rng.gen_range(1..30) {
                let a = (ca + rng.gen_range(0..25)) % ANGLE_BINS;
                hm.set(a, rng.gen_range(0..DIST_BINS), (rng.gen_range(0..8) as f64) / 8.0);
            }
            let p = NmsParams { k: rng.gen_range(1..8), ..Default::default() };
            let got: Vec<(f64, f64)> = nms_sample(&hm, &p).waypoints.iter().map(|w| (w.heading, w.distance)).collect();
            let want: Vec<(f64, f64)> = oracle(&hm, &p).into_iter().map(|(a, d)| center_of(a, d)).collect();
            assert_eq!(got, want);
        }
    }

    #[test]
    fn waypoint_geometry() {
        let w = Waypoint::new(0.0, 3.0);
        assert_eq!(w.offset, [3.0, 0.0]);
        let p = w.world_point(Pose::new(1.0, 1.0, 90.0));
        assert!((p[0] - 1.0).abs() < 1e-12 && (p[1] - 4.0).abs() < 1e-12);
    }
}
