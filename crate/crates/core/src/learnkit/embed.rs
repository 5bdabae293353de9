use serde::{Deserialize, Serialize};

use super::{uniform_init, LearnError, Params};
use crate::jsonfmt::ser_vec_full;
use crate::rng::Rng;

/// Lookup table, row-major `vocab × dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Embedding {
    pub vocab: usize,
    pub dim: usize,
    #[serde(serialize_with = "ser_vec_full")]
    pub table: Vec<f64>,
}

impl Embedding {
    pub fn zeros(vocab: usize, dim: usize) -> Self {
        Self { vocab, dim, table: vec![0.0; vocab * dim] }
    }

    /// Uniform in `±1/√dim`.
    pub fn init(vocab: usize, dim: usize, rng: &mut Rng) -> Self {
        Self { vocab, dim, table: uniform_init(rng, vocab * dim, dim) }
    }

    pub fn row(&self, id: usize) -> Result<&[f64], LearnError> {
        if id >= self.vocab {
            return Err(LearnError::OutOfRange { index: id, len: self.vocab });
        }
        Ok(&self.table[id * self.dim..(id + 1) * self.dim])
    }

    pub fn accumulate(&mut self, id: usize, g: &[f64], scale: f64) {
        let row = &mut self.table[id * self.dim..(id + 1) * self.dim];
        for (r, v) in row.iter_mut().zip(g) {
            *r += scale * v;
        }
    }
}

impl Params for Embedding {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        f(&self.table)
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        f(&mut self.table)
    }
}
