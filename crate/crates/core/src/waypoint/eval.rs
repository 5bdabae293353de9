use serde::{Deserialize, Serialize};

use super::nms::WaypointSet;
use super::WaypointError;
use crate::jsonfmt::ser_f64_full;
use crate::world::{distance, Point, Pose, SemanticGrid};

/// Distance charged for a panorama whose predicted or target set is empty.
pub const EMPTY_SET_DISTANCE: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaypointEvalReport {
    #[serde(serialize_with = "ser_f64_full")]
    pub delta: f64,
    #[serde(serialize_with = "ser_f64_full")]
    pub pct_open: f64,
    #[serde(rename = "d_C", serialize_with = "ser_f64_full")]
    pub d_c: f64,
    #[serde(rename = "d_H", serialize_with = "ser_f64_full")]
    pub d_h: f64,
}

fn directed<'a>(from: &'a [Point], to: &'a [Point]) -> impl Iterator<Item = f64> + 'a {
    from.iter().map(move |p| to.iter().map(|t| distance(*p, *t)).fold(f64::INFINITY, f64::min))
}

/// Symmetric-mean Chamfer (halved) and Hausdorff distances between two
/// point sets.
pub fn set_distances(p: &[Point], t: &[Point]) -> (f64, f64) {
    if p.is_empty() || t.is_empty() {
        return (EMPTY_SET_DISTANCE, EMPTY_SET_DISTANCE);
    }
    let pt: Vec<f64> = directed(p, t).collect();
    let tp: Vec<f64> = directed(t, p).collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let max = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
    (0.5 * (mean(&pt) + mean(&tp)), max(&pt).max(max(&tp)))
}

/// Set metrics averaged over panoramas. `%Open` is the share of predicted
/// waypoints that land on a traversable cell; it is 0 when nothing was
/// predicted at all.
pub fn eval_waypoints(
    pred: &[WaypointSet],
    target: &[WaypointSet],
    grid: &SemanticGrid,
    poses: &[Pose],
) -> Result<WaypointEvalReport, WaypointError> {
    eval_waypoints_multi(pred, target, &vec![grid; pred.len()], poses)
}

/// [`eval_waypoints`] over panoramas drawn from several maps.
pub fn eval_waypoints_multi(
    pred: &[WaypointSet],
    target: &[WaypointSet],
    grids: &[&SemanticGrid],
    poses: &[Pose],
) -> Result<WaypointEvalReport, WaypointError> {
    if pred.len() != target.len() || pred.len() != poses.len() || pred.len() != grids.len() {
        return Err(WaypointError::Misaligned(format!(
            "{} predictions, {} targets, {} poses, {} grids",
            pred.len(),
            target.len(),
            poses.len(),
            grids.len()
        )));
    }
    if pred.is_empty() {
        return Err(WaypointError::Misaligned("no panoramas".into()));
    }
    let n = pred.len() as f64;
    let (mut delta, mut dc, mut dh) = (0.0, 0.0, 0.0);
    let (mut open, mut total) = (0usize, 0usize);
    for (((p, t), pose), grid) in pred.iter().zip(target).zip(poses).zip(grids) {
        delta += (p.len() as f64 - t.len() as f64).abs();
        let (c, h) = set_distances(&p.offsets(), &t.offsets());
        dc += c;
        dh += h;
        for w in &p.waypoints {
            total += 1;
            open += grid.is_traversable_at(w.world_point(*pose)) as usize;
        }
    }
    Ok(WaypointEvalReport {
        delta: delta / n,
        pct_open: if total == 0 { 0.0 } else { open as f64 / total as f64 },
        d_c: dc / n,
        d_h: dh / n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use crate::waypoint::Waypoint;
    use crate::world::LegendEntry;
    use rand::Rng as _;

    fn grid() -> SemanticGrid {
        let legend = vec![
            LegendEntry { id: 0, name: "floor".into(), traversable: true },
            LegendEntry { id: 1, name: "wall".into(), traversable: false },
        ];
        let mut cells = vec![0; 400];
        for r in 0..20 {
            cells[r * 20 + 15] = 1;
        }
        SemanticGrid::new(20, 20, 0.25, cells, legend).unwrap()
    }

    fn set_of(points: &[(f64, f64)]) -> WaypointSet {
        WaypointSet { waypoints: points.iter().map(|&(h, d)| Waypoint::new(h, d)).collect() }
    }

    #[test]
    fn identical_sets() {
        let s = set_of(&[(0.0, 1.0), (90.0, 2.0)]);
        let r = eval_waypoints(std::slice::from_ref(&s), std::slice::from_ref(&s), &grid(), &[Pose::new(1.0, 1.0, 0.0)]).unwrap();
        assert_eq!((r.delta, r.d_c, r.d_h), (0.0, 0.0, 0.0));
    }

    #[test]
    fn unit_offset() {
        assert_eq!(set_distances(&[[1.0, 0.0]], &[[0.0, 0.0]]), (1.0, 1.0));
    }

    #[test]
    fn empty_sets_and_open_share() {
        let g = grid();
        let pose = Pose::new(2.5, 2.5, 0.0);
        // 1.3 m ahead lands in the wall column [3.75, 4.0)
        let pred = vec![set_of(&[(0.0, 0.5), (0.0, 1.3)]), WaypointSet::default()];
        let target = vec![set_of(&[(0.0, 0.5)]), set_of(&[(0.0, 0.5)])];
        let r = eval_waypoints(&pred, &target, &g, &[pose, pose]).unwrap();
        assert_eq!(r.delta, 1.0);
        assert_eq!(r.pct_open, 0.5);
        assert!(r.d_h >= r.d_c);
        let (c0, h0) = set_distances(&pred[0].offsets(), &target[0].offsets());
        assert!((r.d_c - 0.5 * (c0 + 3.0)).abs() < 1e-12);
        assert!((r.d_h - 0.5 * (h0 + 3.0)).abs() < 1e-12);
        assert!(eval_waypoints(&pred, &target[..1], &g, &[pose]).is_err());
    }

    #[test]
    fn matches_pairwise_brute_force() {
        let mut rng = substream(51, "t");
        for _ in 0..1000 {
            let mk = |rng: &mut crate::rng::Rng| -> Vec<Point> {
                (0..rng.gen_range(1..=5)).map(|_| [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)]).collect()
            };
            let (p, t) = (mk(&mut rng), mk(&mut rng));
            let mut d = vec![vec![0.0; t.len()]; p.len()];
            for i in 0..p.len() {
                for j in 0..t.len() {
                    d[i][j] = distance(p[i], t[j]);
                }
            }
            let row_min: Vec<f64> = d.iter().map(|r| r.iter().copied().fold(f64::INFINITY, f64::min)).collect();
            let col_min: Vec<f64> =
                (0..t.len()).map(|j| d.iter().map(|r| r[j]).fold(f64::INFINITY, f64::min)).collect();
            let chamfer =
                0.5 * (row_min.iter().sum::<f64>() / p.len() as f64 + col_min.iter().sum::<f64>() / t.len() as f64);
            let haus = row_min.iter().chain(&col_min).copied().fold(0.0, f64::max);
            assert_eq!(set_distances(&p, &t), (chamfer, haus));
        }
    }

    #[test]
    fn report_keys() {
        let r = WaypointEvalReport { delta: 0.0, pct_open: 1.0, d_c: 0.0, d_h: 0.0 };
        let v = serde_json::to_value(&r).unwrap();
        let mut keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        keys.sort();
        assert_eq!(keys, ["d_C", "d_H", "delta", "pct_open"]);
    }
}
