use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{Point, SemanticGrid, WorldError};

/// Shortest-path lengths from one source cell to every cell.
#[derive(Debug, Clone)]
pub struct DistanceField {
    width: usize,
    height: usize,
    cell_size: f64,
    dist: Vec<f64>,
}

impl DistanceField {
    /// `INFINITY` off the grid, on blocked cells, or when disconnected.
    pub fn at(&self, p: Point) -> f64 {
        if !(p[0].is_finite() && p[1].is_finite()) {
            return f64::INFINITY;
        }
        let c = (p[0] / self.cell_size).floor();
        let r = (p[1] / self.cell_size).floor();
        if c < 0.0 || r < 0.0 || c as usize >= self.width || r as usize >= self.height {
            return f64::INFINITY;
        }
        self.dist[r as usize * self.width + c as usize]
    }

    pub fn at_cell(&self, col: usize, row: usize) -> f64 {
        self.dist[row * self.width + col]
    }
}

#[derive(Clone, Copy, PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

const NEIGHBORS: [(i64, i64); 8] = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)];

/// Dijkstra over traversable cell centers, 8-connected. Diagonal moves may
/// not cut a blocked corner.
pub fn distance_field(grid: &SemanticGrid, source: Point) -> Result<DistanceField, WorldError> {
    let (sc, sr) = grid.cell_of(source).ok_or(WorldError::OffGrid(source[0], source[1]))?;
    let (w, h) = (grid.width(), grid.height());
    let s = grid.cell_size();
    let mut dist = vec![f64::INFINITY; w * h];
    if !grid.is_traversable_cell(sc as i64, sr as i64) {
        return Ok(DistanceField { width: w, height: h, cell_size: s, dist });
    }
    let diag = s * std::f64::consts::SQRT_2;
    let start = grid.index(sc, sr);
    dist[start] = 0.0;
    let mut heap = BinaryHeap::new();
    heap.push(Entry(0.0, start));
    while let Some(Entry(d, i)) = heap.pop() {
        if d > dist[i] {
            continue;
        }
        let (c, r) = ((i % w) as i64, (i / w) as i64);
        for (dc, dr) in NEIGHBORS {
            let (nc, nr) = (c + dc, r + dr);
            if !grid.is_traversable_cell(nc, nr) {
                continue;
            }
            let cost = if dc != 0 && dr != 0 {
                if !grid.is_traversable_cell(c + dc, r) || !grid.is_traversable_cell(c, r + dr) {
                    continue;
                }
                diag
            } else {
                s
            };
            let j = grid.index(nc as usize, nr as usize);
            let nd = d + cost;
            if nd < dist[j] {
                dist[j] = nd;
                heap.push(Entry(nd, j));
            }
        }
    }
    Ok(DistanceField { width: w, height: h, cell_size: s, dist })
}

/// Geodesic distance in meters; `INFINITY` when disconnected.
pub fn geodesic_distance(grid: &SemanticGrid, a: Point, b: Point) -> Result<f64, WorldError> {
    grid.cell_of(a).ok_or(WorldError::OffGrid(a[0], a[1]))?;
    Ok(distance_field(grid, b)?.at(a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::LegendEntry;
    use rand::{Rng, SeedableRng};

    fn legend() -> Vec<LegendEntry> {
        vec![
            LegendEntry { id: 0, name: "floor".into(), traversable: true },
            LegendEntry { id: 1, name: "wall".into(), traversable: false },
        ]
    }

    /// Bellman-Ford relaxation to a fixed point over the same move set.
    fn relaxation_oracle(grid: &SemanticGrid, src: (usize, usize)) -> Vec<f64> {
        let (w, h) = (grid.width() as i64, grid.height() as i64);
        let s = grid.cell_size();
        let mut d = vec![f64::INFINITY; (w * h) as usize];
        d[src.1 * w as usize + src.0] = 0.0;
        loop {
            let mut changed = false;
            for r in 0..h {
                for c in 0..w {
                    if !grid.is_traversable_cell(c, r) {
                        continue;
                    }
                    for dr in -1..=1i64 {
                        for dc in -1..=1i64 {
                            if (dr, dc) == (0, 0) || !grid.is_traversable_cell(c + dc, r + dr) {
                                continue;
                            }
                            let diagonal = dr != 0 && dc != 0;
                            if diagonal && !(grid.is_traversable_cell(c + dc, r) && grid.is_traversable_cell(c, r + dr))
                            {
                                continue;
                            }
                            let step = if diagonal { s * 2f64.sqrt() } else { s };
                            let from = d[((r + dr) * w + c + dc) as usize];
                            let i = (r * w + c) as usize;
                            if from + step < d[i] - 1e-15 {
                                d[i] = from + step;
                                changed = true;
                            }
                        }
                    }
                }
            }
            if !changed {
                return d;
            }
        }
    }

    #[test]
    fn straight_corridor() {
        let g = SemanticGrid::new(12, 1, 0.5, vec![0; 12], legend()).unwrap();
        let d = geodesic_distance(&g, g.cell_center(1, 0), g.cell_center(10, 0)).unwrap();
        assert_eq!(d, 4.5);
    }

    #[test]
    fn open_room_diagonal_matches_oracle() {
        let g = SemanticGrid::new(10, 10, 0.25, vec![0; 100], legend()).unwrap();
        let d = geodesic_distance(&g, g.cell_center(0, 0), g.cell_center(9, 9)).unwrap();
        let oracle = relaxation_oracle(&g, (9, 9))[0];
        assert!((d - oracle).abs() < 1e-12);
        assert!((d - 9.0 * 0.25 * 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn cluttered_rooms_match_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let cells: Vec<u16> = (0..144).map(|_| if rng.gen_bool(0.25) { 1 } else { 0 }).collect();
            let mut cells = cells;
            cells[0] = 0;
            let g = SemanticGrid::new(12, 12, 0.25, cells, legend()).unwrap();
            let field = distance_field(&g, g.cell_center(0, 0)).unwrap();
            let oracle = relaxation_oracle(&g, (0, 0));
            for r in 0..12 {
                for c in 0..12 {
                    let (a, b) = (field.at_cell(c, r), oracle[r * 12 + c]);
                    assert!(a == b || (a - b).abs() < 1e-12, "({c},{r}) {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn disconnected_rooms_are_infinite() {
        // column 1 is a wall: two one-cell-wide rooms
        let cells = (0..9).map(|i| if i % 3 == 1 { 1 } else { 0 }).collect();
        let g = SemanticGrid::new(3, 3, 0.25, cells, legend()).unwrap();
        let d = geodesic_distance(&g, g.cell_center(0, 0), g.cell_center(2, 2)).unwrap();
        assert!(d.is_infinite());
        assert!(geodesic_distance(&g, [-1.0, 0.0], g.cell_center(2, 2)).is_err());
    }

    #[test]
    fn symmetric_and_triangle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let cells: Vec<u16> = (0..400).map(|_| if rng.gen_bool(0.2) { 1 } else { 0 }).collect();
        let g = SemanticGrid::new(20, 20, 0.25, cells, legend()).unwrap();
        let free: Vec<_> = (0..400).filter(|&i| g.cells()[i] == 0).map(|i| g.cell_center(i % 20, i / 20)).collect();
        for _ in 0..200 {
            let a = free[rng.gen_range(0..free.len())];
            let b = free[rng.gen_range(0..free.len())];
            let c = free[rng.gen_range(0..free.len())];
            let ab = geodesic_distance(&g, a, b).unwrap();
            let ba = geodesic_distance(&g, b, a).unwrap();
            let bc = geodesic_distance(&g, b, c).unwrap();
            let ac = geodesic_distance(&g, a, c).unwrap();
            assert!(ab == ba || (ab - ba).abs() < 1e-9);
            if ab.is_finite() && bc.is_finite() {
                assert!(ac <= ab + bc + 1e-9);
            }
        }
    }
}
