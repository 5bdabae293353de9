use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Deserializer, Serialize};

use super::{check_len, uniform_init, LearnError, Params};
use crate::jsonfmt::ser_vec_full;
use crate::rng::Rng;

// Every parameter state gets a process-unique stamp, so a cache can be
// matched to the exact weights that produced it.
static STAMPS: AtomicU64 = AtomicU64::new(1);

fn fresh_stamp() -> u64 {
    STAMPS.fetch_add(1, Ordering::Relaxed)
}

/// Affine map `y = W x + b` with `W` stored row-major, `outputs × inputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    #[serde(serialize_with = "ser_vec_full")]
    pub weights: Vec<f64>,
    #[serde(serialize_with = "ser_vec_full")]
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self { inputs, outputs, weights: vec![0.0; inputs * outputs], bias: vec![0.0; outputs] }
    }

    pub fn init(inputs: usize, outputs: usize, rng: &mut Rng) -> Self {
        Self {
            inputs,
            outputs,
            weights: uniform_init(rng, inputs * outputs, inputs),
            bias: uniform_init(rng, outputs, inputs),
        }
    }

    pub fn validate(&self) -> Result<(), LearnError> {
        check_len(self.inputs * self.outputs, self.weights.len())?;
        check_len(self.outputs, self.bias.len())
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.bias.clone();
        for (o, yo) in y.iter_mut().enumerate() {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            *yo += super::dot(row, x);
        }
        y
    }

    /// Accumulates `dW += dy xᵀ`, `db += dy` into `grad` and returns `Wᵀ dy`.
    pub fn backprop(&self, x: &[f64], dy: &[f64], grad: &mut Dense) -> Vec<f64> {
        let mut dx = vec![0.0; self.inputs];
        for (o, &g) in dy.iter().enumerate() {
            grad.bias[o] += g;
            if g == 0.0 {
                continue;
            }
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            let grow = &mut grad.weights[o * self.inputs..(o + 1) * self.inputs];
            for i in 0..self.inputs {
                grow[i] += g * x[i];
                dx[i] += g * row[i];
            }
        }
        dx
    }
}

impl Params for Dense {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        f(&self.weights);
        f(&self.bias);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        f(&mut self.weights);
        f(&mut self.bias);
    }
}

/// Affine layers with tanh between them; the last layer stays affine.
#[derive(Debug, Clone, Serialize)]
pub struct Mlp {
    layers: Vec<Dense>,
    #[serde(skip)]
    stamp: u64,
}

impl PartialEq for Mlp {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

impl<'de> Deserialize<'de> for Mlp {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            layers: Vec<Dense>,
        }
        let raw = Raw::deserialize(d)?;
        Mlp::from_layers(raw.layers).map_err(serde::de::Error::custom)
    }
}

/// Per-layer inputs recorded by [`Mlp::forward`].
#[derive(Debug, Clone)]
pub struct MlpCache {
    stamp: u64,
    inputs: Vec<Vec<f64>>,
}

impl Mlp {
    /// `sizes = [in, hidden.., out]`, seeded uniform init.
    pub fn new(sizes: &[usize], rng: &mut Rng) -> Self {
        let layers = sizes.windows(2).map(|w| Dense::init(w[0], w[1], rng)).collect();
        Self { layers, stamp: fresh_stamp() }
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        let layers = sizes.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect();
        Self { layers, stamp: fresh_stamp() }
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self, LearnError> {
        if layers.is_empty() {
            return Err(LearnError::Invalid("network needs at least one layer".into()));
        }
        for l in &layers {
            l.validate()?;
        }
        for w in layers.windows(2) {
            check_len(w[0].outputs, w[1].inputs)?;
        }
        Ok(Self { layers, stamp: fresh_stamp() })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    /// Replaces one layer, keeping shapes.
    pub fn set_layer(&mut self, i: usize, layer: Dense) -> Result<(), LearnError> {
        layer.validate()?;
        check_len(self.layers[i].inputs, layer.inputs)?;
        check_len(self.layers[i].outputs, layer.outputs)?;
        self.layers[i] = layer;
        self.stamp = fresh_stamp();
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, MlpCache), LearnError> {
        check_len(self.input_dim(), x.len())?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x.to_vec();
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let mut y = layer.apply(&h);
            if k < last {
                y.iter_mut().for_each(|v| *v = v.tanh());
            }
            inputs.push(std::mem::replace(&mut h, y));
        }
        Ok((h, MlpCache { stamp: self.stamp, inputs }))
    }

    /// Output only; skips recording the cache.
    pub fn infer(&self, x: &[f64]) -> Result<Vec<f64>, LearnError> {
        check_len(self.input_dim(), x.len())?;
        let mut h = x.to_vec();
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            h = layer.apply(&h);
            if k < last {
                h.iter_mut().for_each(|v| *v = v.tanh());
            }
        }
        Ok(h)
    }

    /// Accumulates parameter gradients into `grad` and returns `∂L/∂x`.
    pub fn backward(&self, cache: &MlpCache, dy: &[f64], grad: &mut Mlp) -> Result<Vec<f64>, LearnError> {
        if cache.stamp != self.stamp || cache.inputs.len() != self.layers.len() {
            return Err(LearnError::StaleCache);
        }
        check_len(self.output_dim(), dy.len())?;
        if grad.layers.len() != self.layers.len() {
            return Err(LearnError::Shape { expected: self.layers.len(), got: grad.layers.len() });
        }
        let mut g = dy.to_vec();
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            let mut dx = layer.backprop(&cache.inputs[k], &g, &mut grad.layers[k]);
            if k > 0 {
                // the input of layer k is tanh output of layer k-1
                for (d, &a) in dx.iter_mut().zip(&cache.inputs[k]) {
                    *d *= 1.0 - a * a;
                }
            }
            g = dx;
        }
        Ok(g)
    }
}

impl Params for Mlp {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        self.layers.iter().for_each(|l| l.visit(f));
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        self.stamp = fresh_stamp();
        self.layers.iter_mut().for_each(|l| l.visit_mut(f));
    }
}
