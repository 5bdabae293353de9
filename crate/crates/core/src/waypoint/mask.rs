use std::collections::BTreeSet;

use super::WaypointError;
use crate::world::{Hit, LegendEntry, Panorama};

/// Vocabulary name matching rays that reached max range.
pub const OPEN_SENTINEL: &str = "OPEN";

pub const DEFAULT_OPEN_VOCAB: [&str; 3] = ["floor", "stairs", "door"];

/// Class names treated as open area, resolved against a legend.
#[derive(Debug, Clone, PartialEq)]
pub struct OpenVocabulary {
    names: BTreeSet<String>,
    // indexed by class id
    allowed: Vec<bool>,
}

impl OpenVocabulary {
    pub fn new<S: AsRef<str>>(names: &[S], legend: &[LegendEntry]) -> Result<Self, WaypointError> {
        let max_id = legend.iter().map(|e| e.id as usize).max().unwrap_or(0);
        let mut allowed = vec![false; max_id + 1];
        let mut set = BTreeSet::new();
        for n in names {
            let n = n.as_ref().trim();
            if n.is_empty() {
                continue;
            }
            if n != OPEN_SENTINEL {
                let e =
                    legend.iter().find(|e| e.name == n).ok_or_else(|| WaypointError::UnknownVocab(n.to_string()))?;
                allowed[e.id as usize] = true;
            }
            set.insert(n.to_string());
        }
        Ok(Self { names: set, allowed })
    }

    /// Parses a comma-separated list such as `floor,stairs,door`.
    pub fn parse(list: &str, legend: &[LegendEntry]) -> Result<Self, WaypointError> {
        Self::new(&list.split(',').collect::<Vec<_>>(), legend)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(String::as_str)
    }

    pub fn admits(&self, hit: Hit) -> bool {
        match hit {
            Hit::Open => true,
            Hit::Class(id) => self.allowed.get(id as usize).copied().unwrap_or(false),
            Hit::OutOfBounds => false,
        }
    }
}

/// Per-ray 0/1 values laid out like the panorama, sector-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ObstacleMask {
    pub rays_per_sector: usize,
    pub values: Vec<u8>,
}

impl ObstacleMask {
    /// The mask that leaves features unchanged.
    pub fn ones(pano: &Panorama) -> Self {
        Self { rays_per_sector: pano.rays_per_sector, values: vec![1; pano.sectors.len() * pano.rays_per_sector] }
    }

    pub fn get(&self, sector: usize, ray: usize) -> u8 {
        self.values[sector * self.rays_per_sector + ray]
    }
}

pub fn obstacle_mask(pano: &Panorama, vocab: &OpenVocabulary) -> ObstacleMask {
    ObstacleMask {
        rays_per_sector: pano.rays_per_sector,
        values: pano.rays().map(|r| vocab.admits(r.hit) as u8).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{standard_legend, Ray};

    fn pano_of(hits: &[Hit]) -> Panorama {
        let sectors = (0..12).map(|s| vec![Ray { depth: 1.0, hit: hits[s % hits.len()] }]).collect();
        Panorama { max_range: 3.0, rays_per_sector: 1, sectors }
    }

    #[test]
    fn vocabulary_examples() {
        let legend = standard_legend();
        let id = |n: &str| legend.iter().find(|e| e.name == n).unwrap().id;
        let v = OpenVocabulary::new(&DEFAULT_OPEN_VOCAB, &legend).unwrap();
        let m = obstacle_mask(
            &pano_of(&[Hit::Class(id("sofa")), Hit::Class(id("floor")), Hit::Open, Hit::OutOfBounds]),
            &v,
        );
        assert_eq!(&m.values[..4], &[0, 1, 1, 0]);

        let empty = OpenVocabulary::new::<&str>(&[], &legend).unwrap();
        let m = obstacle_mask(&pano_of(&[Hit::Class(id("floor")), Hit::Class(id("wall")), Hit::Open]), &empty);
        assert_eq!(&m.values[..3], &[0, 0, 1]);
    }

    #[test]
    fn parse_and_validate() {
        let legend = standard_legend();
        let v = OpenVocabulary::parse("floor, door,OPEN", &legend).unwrap();
        assert_eq!(v.names().collect::<Vec<_>>(), ["OPEN", "door", "floor"]);
        assert_eq!(
            OpenVocabulary::parse("floor,lava", &legend).unwrap_err(),
            WaypointError::UnknownVocab("lava".into())
        );
    }
}
