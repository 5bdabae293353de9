use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use dualnav_core::world::{build_nav_graph, load_map, Episode, NavGraph, SemanticGrid};
use rayon::prelude::*;

/// A map together with its navigation graph.
pub struct MapEntry {
    pub grid: SemanticGrid,
    pub graph: NavGraph,
}

/// Maps keyed by file stem, in name order.
pub struct MapSet {
    pub maps: BTreeMap<String, MapEntry>,
}

impl MapSet {
    pub fn load(dir: &Path, spacing: f64) -> Result<Self> {
        let mut paths = Vec::new();
        for entry in fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
            let path = entry.with_context(|| format!("listing {}", dir.display()))?.path();
            if path.extension().is_some_and(|e| e == "json") {
                paths.push(path);
            }
        }
        paths.sort();
        if paths.is_empty() {
            bail!("no map files in {}", dir.display());
        }
        let mut maps = BTreeMap::new();
        for path in paths {
            let id = path.file_stem().and_then(|s| s.to_str()).context("map file name is not UTF-8")?.to_string();
            let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            let grid = load_map(&text).with_context(|| format!("loading {}", path.display()))?;
            maps.insert(id, grid);
        }
        let built: Vec<(String, Result<MapEntry>)> = maps
            .into_par_iter()
            .map(|(id, grid)| {
                let graph = build_nav_graph(&grid, spacing).map_err(|e| anyhow!("map {id}: {e}"));
                let entry = graph.map(|graph| MapEntry { grid, graph });
                (id, entry)
            })
            .collect();
        let mut maps = BTreeMap::new();
        for (id, entry) in built {
            maps.insert(id, entry?);
        }
        Ok(Self { maps })
    }

    pub fn get(&self, id: &str) -> Result<&MapEntry> {
        self.maps.get(id).ok_or_else(|| anyhow!("episode references unknown map {id:?}"))
    }
}

pub fn load_episodes(path: &Path, maps: &MapSet) -> Result<Vec<Episode>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let episodes = Episode::parse_lines(&text).with_context(|| format!("parsing {}", path.display()))?;
    if episodes.is_empty() {
        bail!("{} holds no episodes", path.display());
    }
    for ep in &episodes {
        let m = maps.get(&ep.map_id)?;
        ep.validate(&m.grid, &m.graph).map_err(|e| anyhow!("invalid episode: {e}"))?;
    }
    Ok(episodes)
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {what} {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {what} {}", path.display()))
}

/// Writes `text`, creating missing parent directories.
pub fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// One JSON document per line, newline-terminated.
pub fn json_lines<T: serde::Serialize>(items: &[T]) -> Result<String> {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item)?);
        out.push('\n');
    }
    Ok(out)
}
