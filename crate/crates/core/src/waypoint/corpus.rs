use super::heatmap::{gt_heatmap, Heatmap, KernelParams};
use super::nms::{Waypoint, WaypointSet};
use super::WaypointError;
use crate::world::{bearing, distance, raycast_panorama, NavGraph, Panorama, Pose, SemanticGrid};

/// Graph neighbors of `node` as waypoints relative to a pose there facing
/// `heading`, in adjacency order.
pub fn neighbor_waypoints(graph: &NavGraph, node: usize, heading: f64) -> WaypointSet {
    let here = graph.nodes[node];
    let waypoints = graph
        .neighbors(node)
        .iter()
        .map(|&j| {
            let there = graph.nodes[j];
            Waypoint::new(crate::world::normalize_heading(bearing(here, there) - heading), distance(here, there))
        })
        .collect();
    WaypointSet { waypoints }
}

/// One predictor training example, taken at a graph node facing 0°.
#[derive(Debug, Clone)]
pub struct PanoramaSample {
    pub map_id: String,
    pub node: usize,
    pub pose: Pose,
    pub panorama: Panorama,
    pub target: WaypointSet,
    pub gt: Heatmap,
}

/// Panoramas at every graph node of one map.
pub fn collect_samples(
    grid: &SemanticGrid,
    graph: &NavGraph,
    map_id: &str,
    rays_per_sector: usize,
    max_range: f64,
    kernel: &KernelParams,
) -> Result<Vec<PanoramaSample>, WaypointError> {
    (0..graph.nodes.len())
        .map(|node| {
            let [x, y] = graph.nodes[node];
            let pose = Pose::new(x, y, 0.0);
            let panorama = raycast_panorama(grid, pose, rays_per_sector, max_range)
                .map_err(|e| WaypointError::Invalid(e.to_string()))?;
            Ok(PanoramaSample {
                map_id: map_id.to_string(),
                node,
                pose,
                panorama,
                target: neighbor_waypoints(graph, node, 0.0),
                gt: gt_heatmap(graph, node, kernel)?,
            })
        })
        .collect()
}
