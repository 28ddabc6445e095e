//! Visual front-end: oracle feature tracking, corner scoring at the range
//! finder boresight and the range-feature trigger.

pub mod corner;
pub mod image;
pub mod tracker;
pub mod trigger;

use thiserror::Error;

pub use corner::{min_eig_score, spatial_gradient_matrix};
pub use image::{render_image, render_window, GrayImage, Shading};
pub use tracker::{FeatureMatch, OracleTracker, TrackerOutput};
pub use trigger::{range_feature_trigger, TriggerDecision, TriggerState};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FrontendError {
    #[error("window [{x0}, {x1}] x [{y0}, {y1}] (with derivative margin) leaves the {width}x{height} image")]
    WindowOutOfBounds {
        x0: i64,
        x1: i64,
        y0: i64,
        y1: i64,
        width: usize,
        height: usize,
    },
    #[error("image data length {len} does not match {width}x{height}")]
    BadDimensions {
        width: usize,
        height: usize,
        len: usize,
    },
    #[error("invalid trigger parameters: {0}")]
    InvalidTrigger(&'static str),
    #[error("pgm: {0}")]
    Pgm(String),
}
