//! The continuous 2D environment.
//!
//! World frame: `x` grows with the column index, `y` grows with the row index,
//! headings are degrees measured clockwise from `+x` (so `RIGHT` adds 15°).
//! Cell `(col, row)` covers `[col·s, (col+1)·s) × [row·s, (row+1)·s)`.

mod episode;
mod generate;
mod geodesic;
mod grid;
mod navgraph;
mod pose;
mod raycast;

pub use episode::{make_episodes, synthesize_instruction, Episode, EpisodeParams};
pub use generate::{gen_world, standard_legend, WorldParams, STANDARD_CLASSES};
pub use geodesic::{distance_field, geodesic_distance, DistanceField};
pub use grid::{load_map, ClassId, LegendEntry, MapDocument, SemanticGrid};
pub use navgraph::{build_nav_graph, segment_clear, NavGraph, MAX_EDGE_M, MIN_EDGE_M};
pub use pose::{heading_vector, normalize_heading, step_low, LowAction, Pose, FORWARD_M, TURN_DEG};
pub use raycast::{cast_ray, raycast_panorama, Hit, Panorama, Ray, SECTORS, SECTOR_DEG};

use thiserror::Error;

/// World position in meters.
pub type Point = [f64; 2];

pub const DEFAULT_CELL_SIZE: f64 = 0.25;
pub const DEFAULT_RAYS_PER_SECTOR: usize = 7;
pub const DEFAULT_MAX_RANGE: f64 = 3.0;
pub const DEFAULT_NODE_SPACING: f64 = 2.0;

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("malformed map document: {0}")]
    Malformed(String),
    #[error("cell {index} references class id {id} absent from the legend")]
    UnknownClass { index: usize, id: ClassId },
    #[error("map has no traversable cell")]
    NoTraversable,
    #[error("position ({0:.3}, {1:.3}) is outside the grid")]
    OffGrid(f64, f64),
    #[error("position ({0:.3}, {1:.3}) is not on a traversable cell")]
    NotTraversable(f64, f64),
    #[error("infeasible parameters: {0}")]
    Infeasible(String),
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
}

pub fn distance(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Bearing of `to` as seen from `from`, degrees in `[0, 360)`.
pub fn bearing(from: Point, to: Point) -> f64 {
    normalize_heading((to[1] - from[1]).atan2(to[0] - from[0]).to_degrees())
}
