use serde::{Deserialize, Serialize};

use super::{heading_vector, ClassId, Point, Pose, SemanticGrid, WorldError};

pub const SECTORS: usize = 12;
pub const SECTOR_DEG: f64 = 30.0;

/// What a ray ran into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Hit {
    /// Nothing within range.
    Open,
    /// First non-traversable cell.
    Class(ClassId),
    /// Left the grid before hitting anything.
    OutOfBounds,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ray {
    pub depth: f64,
    pub hit: Hit,
}

/// Twelve 30° sectors of rays; sector `i` is centered on relative heading `i·30°`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Panorama {
    pub max_range: f64,
    pub rays_per_sector: usize,
    pub sectors: Vec<Vec<Ray>>,
}

impl Panorama {
    /// Relative bearing of ray `r` in sector `s`.
    pub fn ray_bearing(&self, sector: usize, ray: usize) -> f64 {
        ray_offset(sector, ray, self.rays_per_sector)
    }

    pub fn rays(&self) -> impl Iterator<Item = &Ray> {
        self.sectors.iter().flatten()
    }
}

fn ray_offset(sector: usize, ray: usize, per_sector: usize) -> f64 {
    sector as f64 * SECTOR_DEG - SECTOR_DEG / 2.0 + SECTOR_DEG * (ray as f64 + 0.5) / per_sector as f64
}

pub fn raycast_panorama(
    grid: &SemanticGrid,
    pose: Pose,
    rays_per_sector: usize,
    max_range: f64,
) -> Result<Panorama, WorldError> {
    if rays_per_sector == 0 {
        return Err(WorldError::InvalidParam("rays_per_sector must be positive".into()));
    }
    if !(max_range.is_finite() && max_range > 0.0) {
        return Err(WorldError::InvalidParam(format!("max_range {max_range} must be positive")));
    }
    grid.require_traversable(pose.position())?;
    let sectors = (0..SECTORS)
        .map(|s| {
            (0..rays_per_sector)
                .map(|r| cast_ray(grid, pose.position(), pose.heading + ray_offset(s, r, rays_per_sector), max_range))
                .collect()
        })
        .collect();
    Ok(Panorama { max_range, rays_per_sector, sectors })
}

/// Exact grid traversal. Boundary crossings are computed directly from the
/// boundary coordinate, not accumulated, so axis-aligned depths are exact.
pub fn cast_ray(grid: &SemanticGrid, origin: Point, bearing_deg: f64, max_range: f64) -> Ray {
    let (dx, dy) = heading_vector(bearing_deg);
    let s = grid.cell_size();
    let (mut cx, mut cy) = grid.cell_coords(origin);
    let step_x: i64 = if dx > 0.0 {
        1
    } else if dx < 0.0 {
        -1
    } else {
        0
    };
    let step_y: i64 = if dy > 0.0 {
        1
    } else if dy < 0.0 {
        -1
    } else {
        0
    };
    let blocked = |c: i64, r: i64| -> Option<Hit> {
        if !grid.in_bounds(c, r) {
            Some(Hit::OutOfBounds)
        } else {
            let id = grid.class_at(c as usize, r as usize);
            (!grid.is_traversable_class(id)).then_some(Hit::Class(id))
        }
    };
    loop {
        let tx = match step_x {
            1 => ((cx + 1) as f64 * s - origin[0]) / dx,
            -1 => (cx as f64 * s - origin[0]) / dx,
            _ => f64::INFINITY,
        };
        let ty = match step_y {
            1 => ((cy + 1) as f64 * s - origin[1]) / dy,
            -1 => (cy as f64 * s - origin[1]) / dy,
            _ => f64::INFINITY,
        };
        let t = tx.min(ty).max(0.0);
        if t > max_range {
            return Ray { depth: max_range, hit: Hit::Open };
        }
        if tx < ty {
            cx += step_x;
        } else if ty < tx {
            cy += step_y;
        } else {
            // exact corner: either side cell blocks the ray
            if let Some(hit) = blocked(cx + step_x, cy).or_else(|| blocked(cx, cy + step_y)) {
                return Ray { depth: t, hit };
            }
            cx += step_x;
            cy += step_y;
        }
        if let Some(hit) = blocked(cx, cy) {
            return Ray { depth: t, hit };
        }
    }
}
