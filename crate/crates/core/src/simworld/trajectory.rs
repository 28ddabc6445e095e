//! Straight constant-velocity, constant-attitude trajectories.

use nalgebra::{UnitQuaternion, Vector3};

use crate::geometry::Pose;

use super::{SimError, Terrain};

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPlan {
    pub start_position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    /// World-to-body orientation, held for the whole run.
    pub attitude: UnitQuaternion<f64>,
    pub duration: f64,
    /// The trajectory may not get closer to the ground than this (m AGL).
    pub min_agl: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthSample {
    pub t: f64,
    pub pose: Pose,
    pub velocity: Vector3<f64>,
}

/// Samples the plan every `dt` seconds, `round(duration / dt) + 1` poses.
///
/// Positions are evaluated in closed form (`p0 + v t`), not accumulated.
pub fn generate_trajectory(
    plan: &TrajectoryPlan,
    dt: f64,
    terrain: &Terrain,
) -> Result<Vec<TruthSample>, SimError> {
    if !(dt > 0.0) || !(plan.duration >= 0.0) {
        return Err(SimError::InvalidPlan(format!(
            "dt {dt} and duration {} must be positive",
            plan.duration
        )));
    }
    let steps = (plan.duration / dt).round() as usize;
    let mut samples = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        let t = k as f64 * dt;
        let position = plan.start_position + plan.velocity * t;
        let ground = terrain.elevation_at(position.x, position.y).map_err(|_| {
            SimError::InvalidPlan(format!(
                "trajectory leaves the terrain extent at t = {t:.2} s"
            ))
        })?;
        // Tolerance keeps the exact end point of a landing profile valid.
        if position.z - ground < plan.min_agl - 1e-6 {
            return Err(SimError::InvalidPlan(format!(
                "trajectory drops to {:.1} m AGL at t = {t:.2} s (minimum {})",
                position.z - ground,
                plan.min_agl
            )));
        }
        samples.push(TruthSample {
            t,
            pose: Pose::new(position, plan.attitude),
            velocity: plan.velocity,
        });
    }
    Ok(samples)
}
