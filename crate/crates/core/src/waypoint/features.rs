use super::heatmap::{center_of, ANGLE_BINS};
use super::mask::ObstacleMask;
use super::WaypointError;
use crate::world::{Hit, Panorama, SemanticGrid, SECTOR_DEG};

/// Per angle bin, with `S = legend size + 2` class slots (legend order,
/// then OPEN, then out-of-bounds):
///
/// | column      | value                                          |
/// |-------------|------------------------------------------------|
/// | 0           | masked openness of the bin's sector, `Σm / R`  |
/// | 1, 2        | min and mean sector depth / max range          |
/// | 3           | depth of the ray covering the bin / max range  |
/// | 4 .. 4+S    | sector histogram of first hits, masked, `/ R`  |
/// | 4+S .. 4+2S | one-hot first hit of the covering ray, masked  |
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    pub cols: usize,
    pub data: Vec<f64>,
}

impl FeatureTensor {
    pub fn rows(&self) -> usize {
        ANGLE_BINS
    }

    pub fn row(&self, a: usize) -> &[f64] {
        &self.data[a * self.cols..(a + 1) * self.cols]
    }

    /// Circular shift by `k` rows: output row `a + k` takes row `a`.
    pub fn rotated(&self, k: usize) -> Self {
        let mut data = vec![0.0; self.data.len()];
        for a in 0..ANGLE_BINS {
            let to = (a + k) % ANGLE_BINS;
            data[to * self.cols..(to + 1) * self.cols].copy_from_slice(self.row(a));
        }
        Self { cols: self.cols, data }
    }
}

pub fn feature_width(legend_len: usize) -> usize {
    4 + 2 * (legend_len + 2)
}

/// `(sector, ray)` whose angular span holds the center of angle bin `a`.
pub fn ray_of_bin(a: usize, rays_per_sector: usize) -> (usize, usize) {
    let (deg, _) = center_of(a, 0);
    let span = SECTOR_DEG / rays_per_sector as f64;
    let g = (((deg + SECTOR_DEG / 2.0) % 360.0) / span).floor() as usize % (12 * rays_per_sector);
    (g / rays_per_sector, g % rays_per_sector)
}

fn slot(grid: &SemanticGrid, hit: Hit) -> usize {
    let n = grid.legend().len();
    match hit {
        Hit::Class(id) => grid.legend_slot(id).unwrap_or(n + 1),
        Hit::Open => n,
        Hit::OutOfBounds => n + 1,
    }
}

/// Masking multiplies the class evidence of each ray by its mask value;
/// depth columns are left unmasked.
pub fn features(pano: &Panorama, mask: &ObstacleMask, grid: &SemanticGrid) -> Result<FeatureTensor, WaypointError> {
    let r = pano.rays_per_sector;
    if mask.rays_per_sector != r || mask.values.len() != pano.sectors.len() * r || pano.sectors.len() != 12 {
        return Err(WaypointError::Shape("mask does not match panorama".into()));
    }
    let s_slots = grid.legend().len() + 2;
    let cols = 4 + 2 * s_slots;
    let range = pano.max_range;

    let sector_rows: Vec<Vec<f64>> = pano
        .sectors
        .iter()
        .enumerate()
        .map(|(s, rays)| {
            let mut row = vec![0.0; 3 + s_slots];
            let mut open = 0.0;
            let mut min_d = f64::INFINITY;
            let mut sum_d = 0.0;
            for (i, ray) in rays.iter().enumerate() {
                let m = mask.get(s, i) as f64;
                open += m;
                min_d = min_d.min(ray.depth);
                sum_d += ray.depth;
                row[3 + slot(grid, ray.hit)] += m / r as f64;
            }
            row[0] = open / r as f64;
            row[1] = min_d / range;
            row[2] = sum_d / r as f64 / range;
            row
        })
        .collect();

    let mut data = vec![0.0; ANGLE_BINS * cols];
    for a in 0..ANGLE_BINS {
        let (s, i) = ray_of_bin(a, r);
        let out = &mut data[a * cols..(a + 1) * cols];
        let sec = &sector_rows[s];
        out[..3].copy_from_slice(&sec[..3]);
        out[4..4 + s_slots].copy_from_slice(&sec[3..]);
        let ray = pano.sectors[s][i];
        out[3] = ray.depth / range;
        out[4 + s_slots + slot(grid, ray.hit)] = mask.get(s, i) as f64;
    }
    Ok(FeatureTensor { cols, data })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::waypoint::{obstacle_mask, OpenVocabulary, DEFAULT_OPEN_VOCAB};
    use crate::world::{gen_world, raycast_panorama, standard_legend, Pose, Ray, WorldParams};

    fn world() -> SemanticGrid {
        gen_world(7, &WorldParams::default()).unwrap()
    }

    fn sample_pano(grid: &SemanticGrid) -> Panorama {
        let (c, r) = (0..grid.height())
            .flat_map(|r| (0..grid.width()).map(move |c| (c, r)))
            .find(|&(c, r)| grid.is_traversable_cell(c as i64, r as i64) && grid.class_at(c, r) == 0)
            .unwrap();
        raycast_panorama(grid, Pose::new(grid.cell_center(c, r)[0], grid.cell_center(c, r)[1], 0.0), 7, 3.0).unwrap()
    }

    #[test]
    fn bins_map_onto_rays() {
        assert_eq!(ray_of_bin(0, 7), (0, 3));
        assert_eq!(ray_of_bin(119, 7), (0, 3));
        assert_eq!(ray_of_bin(4, 7), (0, 6));
        assert_eq!(ray_of_bin(5, 7), (1, 0));
        assert_eq!(ray_of_bin(10, 7), (1, 3));
        // every ray's own bearing falls in a bin that maps back to it
        for s in 0..12 {
            for r in 0..7 {
                let b = s as f64 * 30.0 - 15.0 + 30.0 * (r as f64 + 0.5) / 7.0;
                let a = (crate::world::normalize_heading(b) / 3.0).floor() as usize;
                assert_eq!(ray_of_bin(a, 7), (s, r));
            }
        }
    }

    #[test]
    fn all_masked_and_all_ones() {
        let g = world();
        let p = sample_pano(&g);
        let ones = features(&p, &ObstacleMask::ones(&p), &g).unwrap();
        let zeros = features(&p, &ObstacleMask { rays_per_sector: 7, values: vec![0; 84] }, &g).unwrap();
        assert_eq!(ones.cols, feature_width(g.legend().len()));
        for a in 0..ANGLE_BINS {
            let (o, z) = (ones.row(a), zeros.row(a));
            assert_eq!(z[0], 0.0);
            assert_eq!(&o[1..4], &z[1..4]);
            assert!(z[4..].iter().all(|&v| v == 0.0));
            assert_eq!(o[0], 1.0);
            assert!((o[4..4 + 10].iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(o.iter().all(|v| v.is_finite()) && o[1..4].iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn half_masked_sector_counts() {
        let g = world();
        let legend = standard_legend();
        let sectors = (0..12).map(|_| vec![Ray { depth: 2.0, hit: Hit::Class(1) }; 4]).collect();
        let p = Panorama { max_range: 3.0, rays_per_sector: 4, sectors };
        let mut values = vec![1u8; 48];
        values[4 * 3] = 0;
        values[4 * 3 + 2] = 0;
        let f = features(&p, &ObstacleMask { rays_per_sector: 4, values }, &g).unwrap();
        for a in 0..ANGLE_BINS {
            let (s, _) = ray_of_bin(a, 4);
            let expect = if s == 3 { 0.5 } else { 1.0 };
            assert_eq!(f.row(a)[0], expect);
            let wall = 4 + g.legend_slot(legend[1].id).unwrap();
            assert_eq!(f.row(a)[wall], expect);
        }
    }

    #[test]
    fn vocabulary_covering_all_hits_is_identity() {
        let g = world();
        let p = sample_pano(&g);
        let names: Vec<&str> = g.legend().iter().map(|e| e.name.as_str()).collect();
        let full = OpenVocabulary::new(&names, g.legend()).unwrap();
        assert_eq!(
            features(&p, &obstacle_mask(&p, &full), &g).unwrap(),
            features(&p, &ObstacleMask::ones(&p), &g).unwrap()
        );
        let default = OpenVocabulary::new(&DEFAULT_OPEN_VOCAB, g.legend()).unwrap();
        let masked = features(&p, &obstacle_mask(&p, &default), &g).unwrap();
        assert!(masked.data.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn mismatched_mask_rejected() {
        let g = world();
        let p = sample_pano(&g);
        assert!(features(&p, &ObstacleMask { rays_per_sector: 3, values: vec![1; 36] }, &g).is_err());
    }
}
