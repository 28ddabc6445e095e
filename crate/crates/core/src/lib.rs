//! Terrain-invariant range-visual-inertial odometry.
//!
//! An EKF fusing IMU, monocular feature tracks and a single-beam laser
//! range finder, without assuming the terrain is planar, plus the synthetic
//! Mars descent world and Monte-Carlo harness used to evaluate it.

pub mod filter;
pub mod frontend;
pub mod geometry;
pub mod harness;
pub mod simworld;
