use serde::{Deserialize, Serialize};

use super::{Point, SemanticGrid};

pub const TURN_DEG: f64 = 15.0;
pub const FORWARD_M: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LowAction {
    Left,
    Right,
    Forward,
    Stop,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    #[serde(serialize_with = "crate::jsonfmt::ser_meters")]
    pub x: f64,
    #[serde(serialize_with = "crate::jsonfmt::ser_meters")]
    pub y: f64,
    /// Degrees in `[0, 360)`, clockwise from `+x`.
    pub heading: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self { x, y, heading: normalize_heading(heading) }
    }

    pub fn position(&self) -> Point {
        [self.x, self.y]
    }
}

pub fn normalize_heading(deg: f64) -> f64 {
    let h = deg.rem_euclid(360.0);
    // rem_euclid can round up to exactly 360 for tiny negative inputs
    if h >= 360.0 {
        0.0
    } else {
        h
    }
}

/// Unit direction for a heading. Multiples of 90° are exact so axis-aligned
/// motion never drifts across cell boundaries.
pub fn heading_vector(deg: f64) -> (f64, f64) {
    let h = normalize_heading(deg);
    if h == 0.0 {
        (1.0, 0.0)
    } else if h == 90.0 {
        (0.0, 1.0)
    } else if h == 180.0 {
        (-1.0, 0.0)
    } else if h == 270.0 {
        (0.0, -1.0)
    } else {
        let r = h.to_radians();
        (r.cos(), r.sin())
    }
}

/// Applies one low-level action. A blocked FORWARD leaves the pose unchanged
/// and reports a collision; there is no sliding.
pub fn step_low(grid: &SemanticGrid, pose: Pose, action: LowAction) -> (Pose, bool) {
    match action {
        LowAction::Left => (Pose { heading: normalize_heading(pose.heading - TURN_DEG), ..pose }, false),
        LowAction::Right => (Pose { heading: normalize_heading(pose.heading + TURN_DEG), ..pose }, false),
        LowAction::Stop => (pose, false),
        LowAction::Forward => {
            let (dx, dy) = heading_vector(pose.heading);
            // point agent: the swept segment is sampled every cell_size / 4
            let step = grid.cell_size() / 4.0;
            let n = (FORWARD_M / step).ceil().max(1.0) as usize;
            for k in 1..=n {
                let t = (k as f64 * step).min(FORWARD_M);
                if !grid.is_traversable_at([pose.x + t * dx, pose.y + t * dy]) {
                    return (pose, true);
                }
            }
            (Pose { x: pose.x + FORWARD_M * dx, y: pose.y + FORWARD_M * dy, heading: pose.heading }, false)
        }
    }
}
