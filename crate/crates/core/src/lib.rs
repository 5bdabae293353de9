//! Grid-world instruction following with an obstacle-aware waypoint predictor
//! and a dual-action navigator.
//!
//! The crate is split along the pipeline:
//!
//! - [`world`]: semantic occupancy grids, panoramic ray sensing, low-level
//!   motion, geodesics, procedural maps and episodes.
//! - [`waypoint`]: heatmap geometry, Gaussian targets, obstacle masking,
//!   the windowed predictor network, NMS sampling and set metrics.
//! - [`dualact`]: compilation of a selected waypoint into LEFT/RIGHT/FORWARD
//!   tokens and back.
//! - [`learnkit`]: dense networks, softmax cross-entropy, Adam, gradient checks.
//! - [`agent`]: candidate scoring, the low-level decoder, IL+RL training and
//!   rollouts in both action modes.
//! - [`metrics`]: SR, SPL, nDTW and aggregation.

pub mod agent;
pub mod dualact;
pub mod jsonfmt;
pub mod learnkit;
pub mod metrics;
pub mod rng;
pub mod waypoint;
pub mod world;
