//! Small dense networks with hand-written reverse mode.
//!
//! Everything here is double precision and single-threaded; reductions run
//! in a fixed order so training is bit-reproducible.

mod embed;
mod gradcheck;
mod loss;
mod mlp;
mod optim;

pub use embed::Embedding;
pub use gradcheck::{grad_check, relative_error, GRAD_CHECK_FLOOR};
pub use loss::{log_softmax, softmax, softmax_ce, Target};
pub use mlp::{Dense, Mlp, MlpCache};
pub use optim::{Adam, AdamConfig};

use rand::Rng as _;
use thiserror::Error;

use crate::rng::Rng;

#[derive(Debug, Error, PartialEq)]
pub enum LearnError {
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("cache was produced by a different parameter state")]
    StaleCache,
    #[error("empty logits")]
    EmptyLogits,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("index {index} out of range for {len} entries")]
    OutOfRange { index: usize, len: usize },
    #[error("invalid argument: {0}")]
    Invalid(String),
}

/// A bundle of `f64` parameter blocks, walked in a fixed order.
///
/// Gradients are stored in a value of the same type, so optimizers and
/// the gradient checker can pair blocks positionally.
pub trait Params: Clone {
    fn visit(&self, f: &mut dyn FnMut(&[f64]));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64]));

    fn num_params(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |b| n += b.len());
        n
    }

    fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        self.visit(&mut |b| out.extend_from_slice(b));
        out
    }

    /// Overwrites all parameters from a flat vector in visit order.
    fn assign(&mut self, flat: &[f64]) {
        let mut at = 0;
        self.visit_mut(&mut |b| {
            b.copy_from_slice(&flat[at..at + b.len()]);
            at += b.len();
        });
        debug_assert_eq!(at, flat.len());
    }

    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.visit_mut(&mut |b| b.fill(0.0));
        z
    }

    fn scale(&mut self, s: f64) {
        self.visit_mut(&mut |b| b.iter_mut().for_each(|x| *x *= s));
    }

    /// `self += s · other`, blockwise.
    fn add_scaled(&mut self, other: &Self, s: f64) {
        let flat = other.flatten();
        let mut at = 0;
        self.visit_mut(&mut |b| {
            for x in b.iter_mut() {
                *x += s * flat[at];
                at += 1;
            }
        });
    }

    fn all_finite(&self) -> bool {
        let mut ok = true;
        self.visit(&mut |b| ok &= b.iter().all(|x| x.is_finite()));
        ok
    }
}

/// Uniform draws in `±1/√fan_in`.
pub(crate) fn uniform_init(rng: &mut Rng, n: usize, fan_in: usize) -> Vec<f64> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    (0..n).map(|_| rng.gen_range(-bound..=bound)).collect()
}

pub(crate) fn check_len(expected: usize, got: usize) -> Result<(), LearnError> {
    if expected == got {
        Ok(())
    } else {
        Err(LearnError::Shape { expected, got })
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl Params for Vec<f64> {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        f(self)
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        f(self)
    }
}

impl<A: Params, B: Params> Params for (A, B) {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        self.0.visit(f);
        self.1.visit(f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        self.0.visit_mut(f);
        self.1.visit_mut(f);
    }
}
