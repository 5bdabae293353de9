use super::obs::CandidateSet;
use crate::dualact::{compile_waypoint, execute_sequence, smaller_rotation};
use crate::waypoint::Waypoint;
use crate::world::{distance, DistanceField, Point, Pose, SemanticGrid};

/// Index of the gt node to head for: one past the last node (from `k` on)
/// within `reach` of `position`, capped at the final node.
pub fn advance_progress(gt_path: &[Point], position: Point, k: usize, reach: f64) -> usize {
    let last = gt_path.len().saturating_sub(1);
    match (k..gt_path.len()).rev().find(|&j| distance(gt_path[j], position) <= reach) {
        Some(j) => (j + 1).min(last),
        None => k.min(last),
    }
}

/// Where the compiled action sequence for `w` leaves the agent.
pub fn landing_pose(grid: &SemanticGrid, pose: Pose, w: &Waypoint) -> Pose {
    match compile_waypoint(smaller_rotation(w.heading), w.distance) {
        Ok(seq) => execute_sequence(grid, pose, &seq).final_pose,
        Err(_) => pose,
    }
}

/// Geodesic teacher. Stops within `success_threshold` of the goal.
/// Otherwise, from gt node `progress` on, picks the candidate whose landing
/// point is geodesically closest to that node, provided it gets closer than
/// the agent already is; a node no candidate improves on counts as visited
/// and the next one is tried. `fields[j]` is the distance field of
/// `gt_path[j]`. Ties go to the lowest index; stop when nothing helps.
pub fn teacher_action(
    grid: &SemanticGrid,
    gt_path: &[Point],
    fields: &[DistanceField],
    progress: usize,
    pose: Pose,
    cands: &CandidateSet,
    success_threshold: f64,
) -> usize {
    teacher_choice(grid, gt_path, fields, progress, pose, cands, success_threshold).0
}

/// As [`teacher_action`], also returning the gt node aimed for, so callers
/// can keep skipped nodes visited.
pub fn teacher_choice(
    grid: &SemanticGrid,
    gt_path: &[Point],
    fields: &[DistanceField],
    progress: usize,
    pose: Pose,
    cands: &CandidateSet,
    success_threshold: f64,
) -> (usize, usize) {
    let Some(&goal) = gt_path.last() else { return (0, progress) };
    if distance(pose.position(), goal) <= success_threshold {
        return (0, progress);
    }
    let landings: Vec<Point> = cands.waypoints.iter().map(|w| landing_pose(grid, pose, w).position()).collect();
    for (k, field) in fields.iter().enumerate().take(gt_path.len()).skip(progress) {
        let mut best = (field.at(pose.position()), 0);
        for (i, p) in landings.iter().enumerate() {
            let d = field.at(*p);
            if d < best.0 {
                best = (d, i + 1);
            }
        }
        if best.1 != 0 {
            return (best.1, k);
        }
    }
    (0, progress)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{distance_field, LegendEntry};

    fn open_room() -> SemanticGrid {
        let legend = vec![
            LegendEntry { id: 0, name: "floor".into(), traversable: true },
            LegendEntry { id: 1, name: "wall".into(), traversable: false },
        ];
        SemanticGrid::new(40, 40, 0.25, vec![0; 1600], legend).unwrap()
    }

    fn cands(ws: &[(f64, f64)]) -> CandidateSet {
        CandidateSet { waypoints: ws.iter().map(|&(h, d)| Waypoint::new(h, d)).collect(), features: vec![] }
    }

    #[test]
    fn progress_skips_reached_nodes() {
        let path = [[0.0, 0.0], [2.0, 0.0], [4.0, 0.0], [6.0, 0.0]];
        assert_eq!(advance_progress(&path, [0.1, 0.0], 0, 1.0), 1);
        assert_eq!(advance_progress(&path, [3.5, 0.0], 1, 1.0), 3);
        assert_eq!(advance_progress(&path, [3.0, 5.0], 1, 1.0), 1);
        assert_eq!(advance_progress(&path, [6.0, 0.0], 2, 1.0), 3);
        // never moves backwards
        assert_eq!(advance_progress(&path, [0.0, 0.0], 2, 1.0), 2);
    }

    #[test]
    fn stops_near_goal() {
        let g = open_room();
        let path = [[8.0, 5.0]];
        let fields = [distance_field(&g, path[0]).unwrap()];
        let c = cands(&[(0.0, 2.0)]);
        let pose = Pose::new(5.0, 5.0, 0.0);
        assert_eq!(teacher_action(&g, &path, &fields, 0, pose, &c, 3.0), 0);
        assert_eq!(teacher_action(&g, &path, &fields, 0, pose, &c, 2.9), 1);
    }

    #[test]
    fn picks_geodesically_closest_landing() {
        let g = open_room();
        let path = [[9.0, 1.0], [9.5, 9.5]];
        let fields: Vec<_> = path.iter().map(|&p| distance_field(&g, p).unwrap()).collect();
        // behind, ahead, right (down the rows)
        let c = cands(&[(180.0, 2.0), (0.0, 2.0), (90.0, 2.0)]);
        let pose = Pose::new(2.0, 1.0, 0.0);
        assert_eq!(teacher_action(&g, &path, &fields, 0, pose, &c, 1.0), 2);
        // once the first node counts as visited, the goal pulls rightward
        assert_eq!(teacher_action(&g, &path, &fields, 1, pose, &c, 1.0), 3);
        // equal landings tie to the lower index
        let twins = cands(&[(0.0, 2.0), (0.0, 2.0)]);
        assert_eq!(teacher_action(&g, &path, &fields, 0, pose, &twins, 1.0), 1);
        // no candidates: stop
        assert_eq!(teacher_action(&g, &path, &fields, 0, pose, &cands(&[]), 1.0), 0);
        // only a backward move: no progress on any node, stop
        assert_eq!(teacher_action(&g, &path, &fields, 0, pose, &cands(&[(180.0, 1.0)]), 1.0), 0);
    }

    #[test]
    fn landing_matches_compiled_motion() {
        let g = open_room();
        let p = landing_pose(&g, Pose::new(2.0, 2.0, 0.0), &Waypoint::new(90.0, 1.0));
        assert!((p.x - 2.0).abs() < 1e-12 && (p.y - 3.0).abs() < 1e-12);
        assert_eq!(p.heading, 90.0);
    }
}
