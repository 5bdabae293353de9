use serde::{Deserialize, Serialize};

use super::{LearnError, Params};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 3e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Adam with bias correction. Moments are flat vectors in visit order.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(config: AdamConfig, num_params: usize) -> Self {
        Self { config, step: 0, m: vec![0.0; num_params], v: vec![0.0; num_params] }
    }

    pub fn update<P: Params>(&mut self, params: &mut P, grads: &P) -> Result<(), LearnError> {
        let g = grads.flatten();
        super::check_len(self.m.len(), g.len())?;
        if g.iter().any(|x| !x.is_finite()) {
            return Err(LearnError::NonFinite("gradient"));
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        if lr == 0.0 {
            // still advance the moments so state stays consistent
            self.advance(&g);
            return Ok(());
        }
        self.advance(&g);
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        let (m, v) = (&self.m, &self.v);
        let mut at = 0;
        params.visit_mut(&mut |b| {
            for x in b.iter_mut() {
                let mh = m[at] / c1;
                let vh = v[at] / c2;
                *x -= lr * mh / (vh.sqrt() + eps);
                at += 1;
            }
        });
        Ok(())
    }

    fn advance(&mut self, g: &[f64]) {
        let AdamConfig { beta1, beta2, .. } = self.config;
        for ((m, v), &gi) in self.m.iter_mut().zip(self.v.iter_mut()).zip(g) {
            *m = beta1 * *m + (1.0 - beta1) * gi;
            *v = beta2 * *v + (1.0 - beta2) * gi * gi;
        }
    }
}
