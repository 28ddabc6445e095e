//! Synthetic Mars descent world: heightfield terrain, constant-velocity
//! trajectories and IMU / laser range finder sampling.

mod noise;
pub mod sensors;
pub mod terrain;
pub mod texture;
pub mod trajectory;

use thiserror::Error;

pub use sensors::{
    sample_imu, sample_lrf, sample_wind_velocity, CameraFrame, ImuParams, ImuSample, ImuStream,
    RangeSeed, SensorFrame,
};
pub use terrain::{ProceduralTerrain, Terrain};
pub use texture::{Albedo, Texture};
pub use trajectory::{generate_trajectory, TrajectoryPlan, TruthSample};

/// Mars surface gravity (m/s^2).
pub const MARS_GRAVITY: f64 = 3.71;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("query ({x:.3}, {y:.3}) is outside the terrain extent")]
    OutOfExtent { x: f64, y: f64 },
    #[error("ray does not hit the terrain within its extent")]
    RayMiss,
    #[error("ray origin is below the terrain surface")]
    BelowSurface,
    #[error("invalid terrain: {0}")]
    InvalidTerrain(String),
    #[error("invalid trajectory plan: {0}")]
    InvalidPlan(String),
    #[error("io error: {0}")]
    Io(String),
}
