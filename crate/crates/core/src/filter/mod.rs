//! Error-state EKF with inverse-depth SLAM features.

pub mod estimator;
pub mod init;
pub mod measurement;
pub mod propagate;
pub mod state;
pub mod update;
pub mod window;

use thiserror::Error;

pub use estimator::{Estimator, FilterConfig, FilterMode, PlaneSource, StepRecord};
pub use init::{init_range_feature, init_slam_feature_planar, PlanarInitParams, RhoSigmaMapping};
pub use measurement::PlanePrior;
pub use propagate::{propagate, ProcessNoise};
pub use state::{Covariance, FilterState, ImuState, PoseClone, SlamFeature};
pub use update::{ekf_update, facet_range_update, slam_update, SlamUpdateStats};
pub use window::manage_window;

/// Squared Mahalanobis gate at 95% for 2 dof.
pub const CHI2_2DOF_95: f64 = 5.991464547107979;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FilterError {
    #[error("propagation fault: {0}")]
    Propagation(String),
    #[error("update fault: {0}")]
    Update(String),
    #[error("innovation covariance is not positive definite")]
    NotPositiveDefinite,
    #[error("feature is behind the camera")]
    BehindCamera,
    #[error("inverse depth is not positive")]
    NonPositiveDepth,
    #[error("degenerate facet")]
    DegenerateFacet,
    #[error("feature budget is full")]
    BudgetFull,
    #[error("sliding window is empty")]
    EmptyWindow,
    #[error("feature {feature} references missing anchor frame {anchor}")]
    MissingAnchor { feature: u64, anchor: usize },
    #[error("invalid filter configuration: {0}")]
    Config(String),
}
