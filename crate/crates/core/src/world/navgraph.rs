use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use super::{distance, Point, SemanticGrid, WorldError};

pub const MIN_EDGE_M: f64 = 0.25;
pub const MAX_EDGE_M: f64 = 3.0;

/// Undirected visibility graph over sampled traversable positions.
#[derive(Debug, Clone, PartialEq)]
pub struct NavGraph {
    pub nodes: Vec<Point>,
    /// `(i, j)` with `i < j`, sorted.
    pub edges: Vec<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
}

/// True when every sample of the segment (every `cell_size / 4`, endpoints
/// included) lies on a traversable cell.
pub fn segment_clear(grid: &SemanticGrid, a: Point, b: Point) -> bool {
    let len = distance(a, b);
    let step = grid.cell_size() / 4.0;
    let n = (len / step).ceil().max(1.0) as usize;
    (0..=n).all(|k| {
        let t = k as f64 / n as f64;
        grid.is_traversable_at([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])])
    })
}

impl NavGraph {
    /// Connects every pair of nodes within `[0.25, 3.0]` m that see each other.
    pub fn with_nodes(grid: &SemanticGrid, nodes: Vec<Point>) -> Self {
        let mut edges = Vec::new();
        for i in 0..nodes.len() {
            for j in i + 1..nodes.len() {
                let d = distance(nodes[i], nodes[j]);
                if (MIN_EDGE_M..=MAX_EDGE_M).contains(&d) && segment_clear(grid, nodes[i], nodes[j]) {
                    edges.push((i, j));
                }
            }
        }
        let mut adjacency = vec![Vec::new(); nodes.len()];
        for &(i, j) in &edges {
            adjacency[i].push(j);
            adjacency[j].push(i);
        }
        Self { nodes, edges, adjacency }
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.adjacency[node]
    }

    /// Index of a node at exactly this position (within 1e-9 m).
    pub fn node_at(&self, p: Point) -> Option<usize> {
        self.nodes.iter().position(|n| distance(*n, p) <= 1e-9)
    }

    pub fn nearest_node(&self, p: Point) -> Option<usize> {
        (0..self.nodes.len()).min_by(|&a, &b| distance(self.nodes[a], p).total_cmp(&distance(self.nodes[b], p)))
    }

    pub fn components(&self) -> Vec<usize> {
        let mut label = vec![usize::MAX; self.nodes.len()];
        let mut next = 0;
        for s in 0..self.nodes.len() {
            if label[s] != usize::MAX {
                continue;
            }
            label[s] = next;
            let mut queue = VecDeque::from([s]);
            while let Some(i) = queue.pop_front() {
                for &j in &self.adjacency[i] {
                    if label[j] == usize::MAX {
                        label[j] = next;
                        queue.push_back(j);
                    }
                }
            }
            next += 1;
        }
        label
    }

    /// Dijkstra over edge lengths: `(distance, predecessor)` per node.
    pub fn shortest_from(&self, source: usize) -> (Vec<f64>, Vec<Option<usize>>) {
        #[derive(PartialEq)]
        struct E(f64, usize);
        impl Eq for E {}
        impl Ord for E {
            fn cmp(&self, o: &Self) -> Ordering {
                o.0.total_cmp(&self.0).then_with(|| o.1.cmp(&self.1))
            }
        }
        impl PartialOrd for E {
            fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
                Some(self.cmp(o))
            }
        }
        let n = self.nodes.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut prev = vec![None; n];
        dist[source] = 0.0;
        let mut heap = BinaryHeap::from([E(0.0, source)]);
        while let Some(E(d, i)) = heap.pop() {
            if d > dist[i] {
                continue;
            }
            for &j in &self.adjacency[i] {
                let nd = d + distance(self.nodes[i], self.nodes[j]);
                if nd < dist[j] {
                    dist[j] = nd;
                    prev[j] = Some(i);
                    heap.push(E(nd, j));
                }
            }
        }
        (dist, prev)
    }

    /// Node indices of the shortest path, inclusive of both ends.
    pub fn shortest_path(&self, from: usize, to: usize) -> Option<Vec<usize>> {
        let (dist, prev) = self.shortest_from(from);
        if !dist[to].is_finite() {
            return None;
        }
        let mut path = vec![to];
        let mut cur = to;
        while let Some(p) = prev[cur] {
            path.push(p);
            cur = p;
        }
        path.reverse();
        Some(path)
    }
}

/// Chebyshev distance, in cells, from each cell to the nearest blocked cell
/// or the grid edge.
fn clearance(grid: &SemanticGrid) -> Vec<u32> {
    let (w, h) = (grid.width(), grid.height());
    let mut c = vec![u32::MAX; w * h];
    let mut queue = VecDeque::new();
    for r in 0..h {
        for col in 0..w {
            let i = grid.index(col, r);
            if !grid.is_traversable_cell(col as i64, r as i64) {
                c[i] = 0;
                queue.push_back(i);
            } else if col == 0 || r == 0 || col == w - 1 || r == h - 1 {
                c[i] = 1;
                queue.push_back(i);
            }
        }
    }
    while let Some(i) = queue.pop_front() {
        let (x, y) = ((i % w) as i64, (i / w) as i64);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (nx, ny) = (x + dx, y + dy);
                if grid.in_bounds(nx, ny) {
                    let j = grid.index(nx as usize, ny as usize);
                    if c[j] > c[i] + 1 {
                        c[j] = c[i] + 1;
                        queue.push_back(j);
                    }
                }
            }
        }
    }
    c
}

/// Grows nodes outward from the most open cell: each new node is the cell
/// geodesically closest to the current node set among those at least
/// `spacing` (straight-line) from every node, preferring cells that see a
/// node within edge range and cells clear of obstacles. A final pass adds
/// bridge nodes between graph components that the grid connects.
pub fn build_nav_graph(grid: &SemanticGrid, spacing: f64) -> Result<NavGraph, WorldError> {
    if !(0.5..=3.0).contains(&spacing) {
        return Err(WorldError::InvalidParam(format!("node spacing {spacing} outside [0.5, 3.0]")));
    }
    let clear = clearance(grid);
    let mut eligible: Vec<bool> = clear.iter().map(|&c| c > 0).collect();
    if !eligible.iter().any(|&e| e) {
        return Err(WorldError::NoTraversable);
    }
    let w = grid.width();
    let centers: Vec<Point> = (0..clear.len()).map(|i| grid.cell_center(i % w, i / w)).collect();
    let mut reach = vec![f64::INFINITY; clear.len()];
    let mut nodes: Vec<Point> = Vec::new();
    loop {
        // (unlinked, hugs an obstacle, geodesic to node set, clearance, index); smaller is better
        type Key = (bool, bool, f64, u32, usize);
        let cmp = |a: &Key, b: &Key| {
            a.0.cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.total_cmp(&b.2)).then(a.3.cmp(&b.3)).then(a.4.cmp(&b.4))
        };
        let mut best: Option<Key> = None;
        for i in 0..clear.len() {
            if !eligible[i] || nodes.iter().any(|n| distance(*n, centers[i]) < spacing) {
                continue;
            }
            let hugs = clear[i] < 2;
            if best.is_some_and(|b| !b.0 && (hugs, reach[i]) > (b.1, b.2)) {
                continue;
            }
            let linked =
                nodes.iter().any(|n| distance(*n, centers[i]) <= MAX_EDGE_M && segment_clear(grid, *n, centers[i]));
            let key = (!linked, hugs, reach[i], u32::MAX - clear[i], i);
            if best.is_none_or(|b| cmp(&key, &b).is_lt()) {
                best = Some(key);
            }
        }
        let Some((_, _, _, _, i)) = best else { break };
        nodes.push(centers[i]);
        eligible[i] = false;
        let field = super::distance_field(grid, centers[i])?;
        for (j, r) in reach.iter_mut().enumerate() {
            *r = r.min(field.at_cell(j % w, j / w));
        }
    }
    // bridge graph components that the grid connects; bridges may sit as
    // close as spacing / 2
    loop {
        let graph = NavGraph::with_nodes(grid, nodes.clone());
        let comps = graph.components();
        let mut best: Option<(f64, usize)> = None;
        for i in 0..clear.len() {
            if clear[i] == 0 {
                continue;
            }
            let gap = nodes.iter().map(|n| distance(*n, centers[i])).fold(f64::INFINITY, f64::min);
            if gap < spacing / 2.0 || best.is_some_and(|b| gap <= b.0) {
                continue;
            }
            let mut seen = None;
            let joins = nodes.iter().enumerate().any(|(k, n)| {
                if distance(*n, centers[i]) > MAX_EDGE_M || !segment_clear(grid, *n, centers[i]) {
                    return false;
                }
                match seen {
                    None => {
                        seen = Some(comps[k]);
                        false
                    }
                    Some(c) => c != comps[k],
                }
            });
            if joins {
                best = Some((gap, i));
            }
        }
        let Some((_, i)) = best else { return Ok(graph) };
        nodes.push(centers[i]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{gen_world, LegendEntry, WorldParams};

    fn legend() -> Vec<LegendEntry> {
        vec![
            LegendEntry { id: 0, name: "floor".into(), traversable: true },
            LegendEntry { id: 1, name: "wall".into(), traversable: false },
        ]
    }

    #[test]
    fn one_meter_room_gets_one_node() {
        // 4x4 floor cells inside a wall ring
        let cells = (0..36).map(|i| {
            let (x, y) = (i % 6, i / 6);
            if x == 0 || y == 0 || x == 5 || y == 5 {
                1
            } else {
                0
            }
        });
        let g = SemanticGrid::new(6, 6, 0.25, cells.collect(), legend()).unwrap();
        let graph = build_nav_graph(&g, 2.0).unwrap();
        assert_eq!(graph.nodes.len(), 1);
        assert!(graph.edges.is_empty());
    }

    #[test]
    fn visibility_edges() {
        let open = SemanticGrid::new(12, 4, 0.25, vec![0; 48], legend()).unwrap();
        let a = open.cell_center(1, 1);
        let b = open.cell_center(9, 1);
        assert_eq!(NavGraph::with_nodes(&open, vec![a, b]).edges, vec![(0, 1)]);

        let mut cells = vec![0; 48];
        for r in 0..4 {
            cells[r * 12 + 5] = 1;
        }
        let walled = SemanticGrid::new(12, 4, 0.25, cells, legend()).unwrap();
        assert!(NavGraph::with_nodes(&walled, vec![a, b]).edges.is_empty());
    }

    #[test]
    fn spacing_is_validated() {
        let g = SemanticGrid::new(4, 4, 0.25, vec![0; 16], legend()).unwrap();
        assert!(build_nav_graph(&g, 0.1).is_err());
        assert!(build_nav_graph(&g, 3.5).is_err());
    }

    #[test]
    fn generated_graph_invariants() {
        for seed in 0..5 {
            let g = gen_world(seed, &WorldParams::default()).unwrap();
            let graph = build_nav_graph(&g, 2.0).unwrap();
            assert!(graph.nodes.len() > 4);
            assert!(graph.components().iter().all(|&c| c == 0), "seed {seed} graph is split");
            for (i, n) in graph.nodes.iter().enumerate() {
                assert!(g.is_traversable_at(*n));
                for m in &graph.nodes[i + 1..] {
                    assert!(distance(*n, *m) >= 1.0);
                }
            }
            for &(i, j) in &graph.edges {
                let d = distance(graph.nodes[i], graph.nodes[j]);
                assert!((MIN_EDGE_M..=MAX_EDGE_M).contains(&d));
                assert!(graph.neighbors(j).contains(&i));
            }
        }
    }
}
