//! Trajectory metrics: success, SPL, nDTW, and per-mode summaries.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::jsonfmt::ser_f64_full;
use crate::world::{distance, Point};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionMode {
    High,
    Low,
}

impl fmt::Display for ActionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::High => "high",
            Self::Low => "low",
        })
    }
}

impl std::str::FromStr for ActionMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "high" => Ok(Self::High),
            "low" => Ok(Self::Low),
            other => Err(format!("unknown mode {other:?}, expected high or low")),
        }
    }
}

/// Closed threshold: a final position exactly `d_th` away succeeds.
pub fn success(traj: &[Point], goal: Point, d_th: f64) -> bool {
    traj.last().is_some_and(|&p| distance(p, goal) <= d_th)
}

pub fn path_length(traj: &[Point]) -> f64 {
    traj.windows(2).map(|w| distance(w[0], w[1])).sum()
}

/// `S · ℓ* / max(ℓ, ℓ*)`; a zero-length shortest path yields `S`.
pub fn spl(success: bool, length: f64, shortest: f64) -> f64 {
    if !success {
        return 0.0;
    }
    if shortest <= 0.0 {
        return 1.0;
    }
    shortest / length.max(shortest)
}

/// Dynamic time warping with Euclidean cost, full table.
pub fn dtw(a: &[Point], b: &[Point]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return f64::INFINITY;
    }
    let m = b.len();
    let mut prev = vec![f64::INFINITY; m];
    let mut cur = vec![0.0; m];
    for (i, &p) in a.iter().enumerate() {
        for j in 0..m {
            let c = distance(p, b[j]);
            let best = match (i, j) {
                (0, 0) => 0.0,
                (0, _) => cur[j - 1],
                (_, 0) => prev[0],
                _ => prev[j].min(cur[j - 1]).min(prev[j - 1]),
            };
            cur[j] = c + best;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[m - 1]
}

/// `exp(−DTW / (|reference| · d_th))`.
pub fn ndtw(traj: &[Point], reference: &[Point], d_th: f64) -> f64 {
    if traj.is_empty() || reference.is_empty() {
        return 0.0;
    }
    (-dtw(traj, reference) / (reference.len() as f64 * d_th)).exp()
}

/// Resamples a polyline so consecutive points are at most `step` apart,
/// keeping every vertex.
pub fn densify(path: &[Point], step: f64) -> Vec<Point> {
    let mut out = Vec::with_capacity(path.len());
    for w in path.windows(2) {
        out.push(w[0]);
        let d = distance(w[0], w[1]);
        let n = (d / step).ceil() as usize;
        for k in 1..n {
            let t = k as f64 / n as f64;
            out.push([w[0][0] + t * (w[1][0] - w[0][0]), w[0][1] + t * (w[1][1] - w[0][1])]);
        }
    }
    out.extend(path.last());
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeResult {
    pub episode_id: String,
    pub success: bool,
    #[serde(serialize_with = "ser_f64_full")]
    pub path_length: f64,
    #[serde(serialize_with = "ser_f64_full")]
    pub shortest_path: f64,
    #[serde(serialize_with = "ser_f64_full")]
    pub ndtw: f64,
    #[serde(serialize_with = "ser_f64_full")]
    pub spl: f64,
    pub mode: ActionMode,
}

impl EpisodeResult {
    pub fn evaluate(
        episode_id: &str,
        mode: ActionMode,
        traj: &[Point],
        reference: &[Point],
        goal: Point,
        shortest: f64,
        d_th: f64,
    ) -> Self {
        let ok = success(traj, goal, d_th);
        let len = path_length(traj);
        Self {
            episode_id: episode_id.to_string(),
            success: ok,
            path_length: len,
            shortest_path: shortest,
            ndtw: ndtw(traj, reference, d_th),
            spl: spl(ok, len, shortest),
            mode,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mode: ActionMode,
    #[serde(rename = "SR", serialize_with = "ser_f64_full")]
    pub sr: f64,
    #[serde(rename = "SPL", serialize_with = "ser_f64_full")]
    pub spl: f64,
    #[serde(rename = "nDTW", serialize_with = "ser_f64_full")]
    pub ndtw: f64,
    pub n_episodes: usize,
}

impl Summary {
    pub fn table_header() -> &'static str {
        "mode  nDTW   SR     SPL    n"
    }

    pub fn table_row(&self) -> String {
        format!(
            "{:<5} {:.2}   {:.2}   {:.2}   {}",
            self.mode.to_string(),
            self.ndtw,
            self.sr,
            self.spl,
            self.n_episodes
        )
    }
}

/// Per-mode means, accumulated in episode-id order.
pub fn aggregate(results: &[EpisodeResult]) -> Vec<Summary> {
    let mut by_mode: BTreeMap<ActionMode, Vec<&EpisodeResult>> = BTreeMap::new();
    for r in results {
        by_mode.entry(r.mode).or_default().push(r);
    }
    by_mode
        .into_iter()
        .map(|(mode, mut rs)| {
            rs.sort_by(|a, b| a.episode_id.cmp(&b.episode_id));
            let n = rs.len() as f64;
            let mean = |f: &dyn Fn(&EpisodeResult) -> f64| rs.iter().map(|r| f(r)).sum::<f64>() / n;
            Summary {
                mode,
                sr: mean(&|r| r.success as u8 as f64),
                spl: mean(&|r| r.spl),
                ndtw: mean(&|r| r.ndtw),
                n_episodes: rs.len(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use proptest::prelude::*;
    use rand::Rng as _;

    fn rand_path(rng: &mut crate::rng::Rng, max_len: usize) -> Vec<Point> {
        let n = rng.gen_range(1..=max_len);
        (0..n).map(|_| [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)]).collect()
    }

    /// Minimum over every monotone alignment, enumerated recursively.
    fn brute_dtw(a: &[Point], b: &[Point]) -> f64 {
        fn go(a: &[Point], b: &[Point], i: usize, j: usize, acc: f64, best: &mut f64) {
            let acc = acc + distance(a[i], b[j]);
            if i + 1 == a.len() && j + 1 == b.len() {
                *best = best.min(acc);
                return;
            }
            if i + 1 < a.len() {
                go(a, b, i + 1, j, acc, best);
            }
            if j + 1 < b.len() {
                go(a, b, i, j + 1, acc, best);
            }
            if i + 1 < a.len() && j + 1 < b.len() {
                go(a, b, i + 1, j + 1, acc, best);
            }
        }
        let mut best = f64::INFINITY;
        go(a, b, 0, 0, 0.0, &mut best);
        best
    }

    #[test]
    fn success_threshold_is_closed() {
        assert!(success(&[[1.0, 1.0]], [1.0, 1.0], 3.0));
        assert!(success(&[[0.0, 0.0]], [3.0, 0.0], 3.0));
        assert!(!success(&[[0.0, 0.0]], [3.0 + 1e-9, 0.0], 3.0));
        assert!(!success(&[], [0.0, 0.0], 3.0));
    }

    #[test]
    fn spl_cases() {
        assert_eq!(spl(true, 4.0, 4.0), 1.0);
        assert_eq!(spl(false, 4.0, 4.0), 0.0);
        assert_eq!(spl(true, 8.0, 4.0), 0.5);
        assert_eq!(spl(true, 2.0, 4.0), 1.0);
        assert_eq!(spl(true, 1.0, 0.0), 1.0);
    }

    #[test]
    fn ndtw_cases() {
        let p = vec![[0.0, 0.0], [1.0, 0.5], [2.0, 2.0]];
        assert_eq!(ndtw(&p, &p, 3.0), 1.0);
        let v = ndtw(&[[0.0, 0.0]], &[[3.0, 0.0]], 3.0);
        assert!((v - (-1f64).exp()).abs() < 1e-15);
        assert!((v - 0.367879).abs() < 1e-6);
    }

    #[test]
    fn dtw_matches_enumeration() {
        let mut rng = substream(21, "t");
        for _ in 0..300 {
            let a = rand_path(&mut rng, 7);
            let b = rand_path(&mut rng, 7);
            assert_eq!(dtw(&a, &b), brute_dtw(&a, &b));
        }
    }

    #[test]
    fn densify_spacing() {
        let d = densify(&[[0.0, 0.0], [1.0, 0.0], [1.0, 0.6]], 0.25);
        assert_eq!(d.len(), 5 + 3);
        assert!(d.windows(2).all(|w| distance(w[0], w[1]) <= 0.25 + 1e-12));
        assert_eq!(densify(&[[2.0, 2.0]], 0.25), vec![[2.0, 2.0]]);
    }

    #[test]
    fn aggregate_cases() {
        let one = EpisodeResult::evaluate(
            "a",
            ActionMode::High,
            &[[0.0, 0.0], [2.0, 0.0]],
            &[[0.0, 0.0], [2.0, 0.0]],
            [2.0, 0.0],
            2.0,
            3.0,
        );
        let s = aggregate(std::slice::from_ref(&one));
        assert_eq!((s[0].sr, s[0].spl, s[0].ndtw), (1.0, 1.0, 1.0));

        let fail = EpisodeResult { episode_id: "b".into(), success: false, spl: 0.0, ..one.clone() };
        let s = aggregate(&[fail, one.clone()]);
        assert_eq!(s[0].sr, 0.5);
        assert_eq!(s[0].n_episodes, 2);

        let low = EpisodeResult { mode: ActionMode::Low, ..one };
        let s = aggregate(&[low]);
        assert_eq!(s[0].mode, ActionMode::Low);
    }

    #[test]
    fn summary_json_keys() {
        let s = Summary { mode: ActionMode::High, sr: 0.5, spl: 0.25, ndtw: 0.75, n_episodes: 2 };
        let v: serde_json::Value = serde_json::to_value(&s).unwrap();
        let mut keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        keys.sort();
        assert_eq!(keys, ["SPL", "SR", "mode", "nDTW", "n_episodes"]);
        assert_eq!(s.table_row(), "high  0.75   0.50   0.25   2");
    }

    fn transform(p: &[Point], theta: f64, t: Point) -> Vec<Point> {
        let (s, c) = theta.sin_cos();
        p.iter().map(|q| [c * q[0] - s * q[1] + t[0], s * q[0] + c * q[1] + t[1]]).collect()
    }

    proptest! {
        #[test]
        fn rigid_invariance(seed in 0u64..1000, theta in -3.2f64..3.2, tx in -10.0f64..10.0, ty in -10.0f64..10.0) {
            let mut rng = substream(seed, "rigid");
            let a = rand_path(&mut rng, 8);
            let b = rand_path(&mut rng, 8);
            let before = ndtw(&a, &b, 3.0);
            let after = ndtw(&transform(&a, theta, [tx, ty]), &transform(&b, theta, [tx, ty]), 3.0);
            prop_assert!((before - after).abs() < 1e-9);
        }

        #[test]
        fn growing_offset_decreases(seed in 0u64..1000, k in 0.01f64..3.0) {
            let mut rng = substream(seed, "offset");
            let r = rand_path(&mut rng, 8);
            let near: Vec<Point> = r.iter().map(|p| [p[0] + k, p[1]]).collect();
            let far: Vec<Point> = r.iter().map(|p| [p[0] + 2.0 * k, p[1]]).collect();
            prop_assert!(ndtw(&far, &r, 3.0) < ndtw(&near, &r, 3.0));
            prop_assert!(ndtw(&near, &r, 3.0) < 1.0);
        }

        #[test]
        fn reversal_symmetry(seed in 0u64..1000) {
            let mut rng = substream(seed, "rev");
            let a = rand_path(&mut rng, 8);
            let b = rand_path(&mut rng, 8);
            let ra: Vec<Point> = a.iter().rev().copied().collect();
            let rb: Vec<Point> = b.iter().rev().copied().collect();
            prop_assert!((dtw(&a, &b) - dtw(&ra, &rb)).abs() < 1e-9);
        }

        #[test]
        fn spl_never_exceeds_success(ok: bool, l in 0.0f64..50.0, s in 0.0f64..50.0) {
            let v = spl(ok, l, s);
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert!(v <= ok as u8 as f64);
        }
    }
}
