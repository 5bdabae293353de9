//! Obstacle-aware waypoint prediction over a 120 × 12 polar heatmap.
//!
//! Angles are relative to the sensing pose heading (clockwise positive),
//! distances in meters. Angle bin `a` covers `[3a, 3a + 3)` degrees and
//! distance bin `d` is centered at `0.25 (d + 1)` m.

mod corpus;
mod eval;
mod features;
mod heatmap;
mod mask;
mod nms;
mod predictor;

pub use corpus::{collect_samples, neighbor_waypoints, PanoramaSample};
pub use eval::{eval_waypoints, eval_waypoints_multi, set_distances, WaypointEvalReport, EMPTY_SET_DISTANCE};
pub use features::{feature_width, features, ray_of_bin, FeatureTensor};
pub use heatmap::{
    angle_diff, bin_of, center_of, gt_heatmap, heatmap_from_bins, Heatmap, KernelParams, ANGLE_BINS, ANGLE_BIN_DEG,
    DIST_BINS, DIST_BIN_M,
};
pub use mask::{obstacle_mask, ObstacleMask, OpenVocabulary, DEFAULT_OPEN_VOCAB, OPEN_SENTINEL};
pub use nms::{nms_sample, NmsParams, Waypoint, WaypointSet};
pub use predictor::{train_predictor, PredictorHyper, TrainReport, WaypointPredictor};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum WaypointError {
    #[error("distance {0} m outside [0.25, 3.0]")]
    DistanceOutOfRange(f64),
    #[error("unknown vocabulary name {0:?}")]
    UnknownVocab(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite predictor parameter")]
    NonFiniteParams,
    #[error("training diverged at epoch {epoch}, step {step}")]
    Divergence { epoch: usize, step: usize },
    #[error("empty training corpus")]
    EmptyCorpus,
    #[error("misaligned inputs: {0}")]
    Misaligned(String),
    #[error("invalid parameter: {0}")]
    Invalid(String),
}

impl From<crate::learnkit::LearnError> for WaypointError {
    fn from(e: crate::learnkit::LearnError) -> Self {
        match e {
            crate::learnkit::LearnError::NonFinite(_) => WaypointError::NonFiniteParams,
            other => WaypointError::Shape(other.to_string()),
        }
    }
}
