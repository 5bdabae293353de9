use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ClassId, LegendEntry, SemanticGrid, WorldError, DEFAULT_CELL_SIZE};
use crate::rng;

/// `(name, traversable)` indexed by class id.
pub const STANDARD_CLASSES: [(&str, bool); 8] = [
    ("floor", true),
    ("wall", false),
    ("door", true),
    ("stairs", true),
    ("sofa", false),
    ("table", false),
    ("bed", false),
    ("fireplace", false),
];

const FLOOR: ClassId = 0;
const WALL: ClassId = 1;
const DOOR: ClassId = 2;
const STAIRS: ClassId = 3;
const FURNITURE: [ClassId; 4] = [4, 5, 6, 7];

pub fn standard_legend() -> Vec<LegendEntry> {
    STANDARD_CLASSES
        .iter()
        .enumerate()
        .map(|(id, (name, traversable))| LegendEntry {
            id: id as ClassId,
            name: (*name).to_string(),
            traversable: *traversable,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldParams {
    pub width: usize,
    pub height: usize,
    pub cell_size: f64,
    pub rooms: usize,
    /// Corridors beyond the chain that links consecutive rooms.
    pub extra_corridors: usize,
    pub furniture: usize,
    pub stair_patches: usize,
    pub min_room: usize,
    pub max_room: usize,
    pub corridor_width: usize,
}

impl Default for WorldParams {
    fn default() -> Self {
        Self {
            width: 48,
            height: 48,
            cell_size: DEFAULT_CELL_SIZE,
            rooms: 4,
            extra_corridors: 1,
            furniture: 6,
            stair_patches: 1,
            min_room: 10,
            max_room: 18,
            corridor_width: 3,
        }
    }
}

impl WorldParams {
    fn validate(&self) -> Result<(), WorldError> {
        if self.rooms == 0 || self.min_room == 0 || self.corridor_width == 0 {
            return Err(WorldError::InvalidParam("room count, room size and corridor width must be positive".into()));
        }
        if !(self.cell_size.is_finite() && self.cell_size > 0.0) {
            return Err(WorldError::InvalidParam("cell size must be positive".into()));
        }
        if self.min_room > self.max_room {
            return Err(WorldError::InvalidParam("min_room exceeds max_room".into()));
        }
        if self.min_room + 2 > self.width || self.min_room + 2 > self.height {
            return Err(WorldError::Infeasible(format!(
                "rooms of {} cells do not fit a {}x{} grid",
                self.min_room, self.width, self.height
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Rect {
    x: usize,
    y: usize,
    w: usize,
    h: usize,
}

impl Rect {
    fn overlaps_with_margin(&self, o: &Rect, margin: usize) -> bool {
        self.x < o.x + o.w + margin
            && o.x < self.x + self.w + margin
            && self.y < o.y + o.h + margin
            && o.y < self.y + self.h + margin
    }

    fn center(&self) -> (usize, usize) {
        (self.x + self.w / 2, self.y + self.h / 2)
    }
}

struct Builder {
    w: usize,
    h: usize,
    cells: Vec<ClassId>,
    room: Vec<bool>,
    corridor: Vec<bool>,
}

impl Builder {
    fn traversable(id: ClassId) -> bool {
        STANDARD_CLASSES[id as usize].1
    }

    fn brush(&mut self, cx: usize, cy: usize, width: usize) {
        let lo = (width as i64 - 1) / 2;
        let hi = width as i64 / 2;
        for dy in -lo..=hi {
            for dx in -lo..=hi {
                let (x, y) = (cx as i64 + dx, cy as i64 + dy);
                if x < 1 || y < 1 || x >= self.w as i64 - 1 || y >= self.h as i64 - 1 {
                    continue;
                }
                let i = y as usize * self.w + x as usize;
                if self.cells[i] == WALL {
                    self.cells[i] = FLOOR;
                    self.corridor[i] = true;
                }
            }
        }
    }

    fn corridor(&mut self, a: (usize, usize), b: (usize, usize), horizontal_first: bool, width: usize) {
        let corner = if horizontal_first { (b.0, a.1) } else { (a.0, b.1) };
        for (from, to) in [(a, corner), (corner, b)] {
            let (mut x, mut y) = from;
            loop {
                self.brush(x, y, width);
                if (x, y) == to {
                    break;
                }
                if x != to.0 {
                    x = if to.0 > x { x + 1 } else { x - 1 };
                } else {
                    y = if to.1 > y { y + 1 } else { y - 1 };
                }
            }
        }
    }

    fn connected(&self) -> bool {
        let total = self.cells.iter().filter(|&&c| Self::traversable(c)).count();
        let Some(start) = self.cells.iter().position(|&c| Self::traversable(c)) else {
            return false;
        };
        let mut seen = vec![false; self.cells.len()];
        let mut stack = vec![start];
        seen[start] = true;
        let mut count = 0;
        while let Some(i) = stack.pop() {
            count += 1;
            let (x, y) = (i % self.w, i / self.w);
            let mut visit = |j: usize| {
                if !seen[j] && Self::traversable(self.cells[j]) {
                    seen[j] = true;
                    stack.push(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < self.w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - self.w);
            }
            if y + 1 < self.h {
                visit(i + self.w);
            }
        }
        count == total
    }

    fn near_door(&self, x: usize, y: usize, radius: usize) -> bool {
        let (x0, y0) = (x.saturating_sub(radius), y.saturating_sub(radius));
        let (x1, y1) = ((x + radius).min(self.w - 1), (y + radius).min(self.h - 1));
        (y0..=y1).any(|yy| (x0..=x1).any(|xx| self.cells[yy * self.w + xx] == DOOR))
    }
}

/// Rooms joined by corridors, with doors, stair patches and furniture.
/// Furniture is only kept when the traversable area stays connected.
pub fn gen_world(seed: u64, params: &WorldParams) -> Result<SemanticGrid, WorldError> {
    params.validate()?;
    let mut rng = rng::substream(seed, "world");
    let (w, h) = (params.width, params.height);
    let mut b = Builder { w, h, cells: vec![WALL; w * h], room: vec![false; w * h], corridor: vec![false; w * h] };

    let max_side_w = params.max_room.min(w - 2);
    let max_side_h = params.max_room.min(h - 2);
    let mut rooms: Vec<Rect> = Vec::new();
    let mut attempts = 0;
    while rooms.len() < params.rooms {
        attempts += 1;
        if attempts > 500 * params.rooms {
            return Err(WorldError::Infeasible(format!(
                "placed only {} of {} rooms in a {}x{} grid",
                rooms.len(),
                params.rooms,
                w,
                h
            )));
        }
        let rw = rng.gen_range(params.min_room.min(max_side_w)..=max_side_w);
        let rh = rng.gen_range(params.min_room.min(max_side_h)..=max_side_h);
        let r = Rect { x: rng.gen_range(1..=w - 1 - rw), y: rng.gen_range(1..=h - 1 - rh), w: rw, h: rh };
        if rooms.iter().any(|o| o.overlaps_with_margin(&r, 3)) {
            continue;
        }
        rooms.push(r);
    }
    for r in &rooms {
        for y in r.y..r.y + r.h {
            for x in r.x..r.x + r.w {
                b.cells[y * w + x] = FLOOR;
                b.room[y * w + x] = true;
            }
        }
    }

    let mut links: Vec<(usize, usize)> = (1..rooms.len()).map(|i| (i - 1, i)).collect();
    if rooms.len() > 1 {
        for _ in 0..params.extra_corridors {
            let a = rng.gen_range(0..rooms.len());
            let mut c = rng.gen_range(0..rooms.len() - 1);
            if c >= a {
                c += 1;
            }
            links.push((a, c));
        }
    }
    for (a, c) in links {
        let horizontal_first = rng.gen_bool(0.5);
        b.corridor(rooms[a].center(), rooms[c].center(), horizontal_first, params.corridor_width);
    }

    // doors: corridor cells touching a room interior
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let i = y * w + x;
            if b.corridor[i] && [i - 1, i + 1, i - w, i + w].iter().any(|&j| b.room[j]) {
                b.cells[i] = DOOR;
            }
        }
    }

    let plain_corridor: Vec<usize> = (0..w * h).filter(|&i| b.corridor[i] && b.cells[i] == FLOOR).collect();
    for _ in 0..params.stair_patches {
        let Some(&center) = plain_corridor.choose(&mut rng) else { break };
        let (cx, cy) = (center % w, center / w);
        for y in cy.saturating_sub(1)..=(cy + 1).min(h - 1) {
            for x in cx.saturating_sub(1)..=(cx + 1).min(w - 1) {
                let i = y * w + x;
                if b.corridor[i] && b.cells[i] == FLOOR {
                    b.cells[i] = STAIRS;
                }
            }
        }
    }

    let mut placed = 0;
    let mut attempts = 0;
    while placed < params.furniture {
        attempts += 1;
        if attempts > 200 * params.furniture.max(1) {
            return Err(WorldError::Infeasible(format!(
                "placed only {placed} of {} furniture items",
                params.furniture
            )));
        }
        let r = rooms[rng.gen_range(0..rooms.len())];
        let class = FURNITURE[rng.gen_range(0..FURNITURE.len())];
        let min_side = if class == 6 { 2 } else { 1 };
        let fw = rng.gen_range(min_side..=3);
        let fh = rng.gen_range(min_side..=3);
        if r.w < fw + 2 || r.h < fh + 2 {
            continue;
        }
        let x0 = rng.gen_range(r.x + 1..=r.x + r.w - 1 - fw);
        let y0 = rng.gen_range(r.y + 1..=r.y + r.h - 1 - fh);
        let footprint: Vec<usize> = (y0..y0 + fh).flat_map(|y| (x0..x0 + fw).map(move |x| y * w + x)).collect();
        if footprint.iter().any(|&i| b.cells[i] != FLOOR || !b.room[i] || b.near_door(i % w, i / w, 2)) {
            continue;
        }
        for &i in &footprint {
            b.cells[i] = class;
        }
        if b.connected() {
            placed += 1;
        } else {
            for &i in &footprint {
                b.cells[i] = FLOOR;
            }
        }
    }

    SemanticGrid::new(w, h, params.cell_size, b.cells, standard_legend())
}
