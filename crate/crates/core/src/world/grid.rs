use serde::{Deserialize, Serialize};

use super::{Point, WorldError};

pub type ClassId = u16;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LegendEntry {
    pub id: ClassId,
    pub name: String,
    pub traversable: bool,
}

/// On-disk map layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapDocument {
    pub cell_size_m: f64,
    pub width: usize,
    pub height: usize,
    pub legend: Vec<LegendEntry>,
    pub cells: Vec<ClassId>,
}

/// Row-major semantic occupancy grid. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticGrid {
    width: usize,
    height: usize,
    cell_size: f64,
    cells: Vec<ClassId>,
    legend: Vec<LegendEntry>,
    // indexed by class id
    lookup: Vec<Option<usize>>,
}

pub fn load_map(document: &str) -> Result<SemanticGrid, WorldError> {
    let doc: MapDocument = serde_json::from_str(document).map_err(|e| WorldError::Malformed(e.to_string()))?;
    SemanticGrid::from_document(doc)
}

impl SemanticGrid {
    pub fn new(
        width: usize,
        height: usize,
        cell_size: f64,
        cells: Vec<ClassId>,
        legend: Vec<LegendEntry>,
    ) -> Result<Self, WorldError> {
        if !(cell_size.is_finite() && cell_size > 0.0) {
            return Err(WorldError::Malformed(format!("cell size {cell_size} must be positive")));
        }
        if width == 0 || height == 0 {
            return Err(WorldError::Malformed("grid dimensions must be non-zero".into()));
        }
        if width.checked_mul(height) != Some(cells.len()) {
            return Err(WorldError::Malformed(format!(
                "{}x{} grid needs {} cells, got {}",
                width,
                height,
                width.saturating_mul(height),
                cells.len()
            )));
        }
        let max_id = legend.iter().map(|e| e.id as usize).max().unwrap_or(0);
        let mut lookup = vec![None; max_id + 1];
        for (i, e) in legend.iter().enumerate() {
            if lookup[e.id as usize].replace(i).is_some() {
                return Err(WorldError::Malformed(format!("duplicate legend id {}", e.id)));
            }
        }
        let mut any_traversable = false;
        for (index, &id) in cells.iter().enumerate() {
            match lookup.get(id as usize).copied().flatten() {
                Some(i) => any_traversable |= legend[i].traversable,
                None => return Err(WorldError::UnknownClass { index, id }),
            }
        }
        if !any_traversable {
            return Err(WorldError::NoTraversable);
        }
        Ok(Self { width, height, cell_size, cells, legend, lookup })
    }

    pub fn from_document(doc: MapDocument) -> Result<Self, WorldError> {
        Self::new(doc.width, doc.height, doc.cell_size_m, doc.cells, doc.legend)
    }

    pub fn to_document(&self) -> MapDocument {
        MapDocument {
            cell_size_m: self.cell_size,
            width: self.width,
            height: self.height,
            legend: self.legend.clone(),
            cells: self.cells.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_document()).expect("map document serializes")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn cells(&self) -> &[ClassId] {
        &self.cells
    }

    pub fn legend(&self) -> &[LegendEntry] {
        &self.legend
    }

    pub fn index(&self, col: usize, row: usize) -> usize {
        row * self.width + col
    }

    pub fn class_at(&self, col: usize, row: usize) -> ClassId {
        self.cells[self.index(col, row)]
    }

    pub fn entry(&self, id: ClassId) -> Option<&LegendEntry> {
        self.lookup.get(id as usize).copied().flatten().map(|i| &self.legend[i])
    }

    /// Position of a class in the legend.
    pub fn legend_slot(&self, id: ClassId) -> Option<usize> {
        self.lookup.get(id as usize).copied().flatten()
    }

    pub fn class_name(&self, id: ClassId) -> Option<&str> {
        self.entry(id).map(|e| e.name.as_str())
    }

    pub fn class_by_name(&self, name: &str) -> Option<ClassId> {
        self.legend.iter().find(|e| e.name == name).map(|e| e.id)
    }

    pub fn is_traversable_class(&self, id: ClassId) -> bool {
        self.entry(id).is_some_and(|e| e.traversable)
    }

    /// Signed cell coordinates of a point; may lie outside the grid.
    pub fn cell_coords(&self, p: Point) -> (i64, i64) {
        ((p[0] / self.cell_size).floor() as i64, (p[1] / self.cell_size).floor() as i64)
    }

    pub fn in_bounds(&self, col: i64, row: i64) -> bool {
        col >= 0 && row >= 0 && (col as usize) < self.width && (row as usize) < self.height
    }

    pub fn cell_of(&self, p: Point) -> Option<(usize, usize)> {
        if !(p[0].is_finite() && p[1].is_finite()) {
            return None;
        }
        let (c, r) = self.cell_coords(p);
        self.in_bounds(c, r).then_some((c as usize, r as usize))
    }

    pub fn is_traversable_cell(&self, col: i64, row: i64) -> bool {
        self.in_bounds(col, row) && self.is_traversable_class(self.class_at(col as usize, row as usize))
    }

    /// False off the grid.
    pub fn is_traversable_at(&self, p: Point) -> bool {
        self.cell_of(p).is_some_and(|(c, r)| self.is_traversable_class(self.class_at(c, r)))
    }

    pub fn class_at_point(&self, p: Point) -> Option<ClassId> {
        self.cell_of(p).map(|(c, r)| self.class_at(c, r))
    }

    pub fn cell_center(&self, col: usize, row: usize) -> Point {
        [(col as f64 + 0.5) * self.cell_size, (row as f64 + 0.5) * self.cell_size]
    }

    pub fn traversable_count(&self) -> usize {
        self.cells.iter().filter(|&&id| self.is_traversable_class(id)).count()
    }

    /// Checks that `p` is on the grid and traversable.
    pub fn require_traversable(&self, p: Point) -> Result<(usize, usize), WorldError> {
        let (c, r) = self.cell_of(p).ok_or(WorldError::OffGrid(p[0], p[1]))?;
        if !self.is_traversable_class(self.class_at(c, r)) {
            return Err(WorldError::NotTraversable(p[0], p[1]));
        }
        Ok((c, r))
    }

    /// Labels of the 4-connected traversable components (flood fill).
    pub fn component_labels(&self) -> Vec<Option<usize>> {
        let mut labels = vec![None; self.cells.len()];
        let mut next = 0;
        let mut stack = Vec::new();
        for start in 0..self.cells.len() {
            if labels[start].is_some() || !self.is_traversable_class(self.cells[start]) {
                continue;
            }
            labels[start] = Some(next);
            stack.push(start);
            while let Some(i) = stack.pop() {
                let (c, r) = ((i % self.width) as i64, (i / self.width) as i64);
                for (dc, dr) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
                    let (nc, nr) = (c + dc, r + dr);
                    if self.is_traversable_cell(nc, nr) {
                        let j = self.index(nc as usize, nr as usize);
                        if labels[j].is_none() {
                            labels[j] = Some(next);
                            stack.push(j);
                        }
                    }
                }
            }
            next += 1;
        }
        labels
    }
}
