//! Strapdown inertial propagation with first-order error-state covariance.

use nalgebra::{Matrix3, SMatrix, Vector3};

use super::state::{Covariance, FilterState, DBA, DBG, DP, DTHETA, DV, IMU_DIM};
use super::FilterError;
use crate::geometry::skew;
use crate::simworld::ImuParams;

pub type Matrix15 = SMatrix<f64, 15, 15>;

/// Continuous-time noise densities driving the inertial error block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProcessNoise {
    pub gyro_noise_density: f64,
    pub accel_noise_density: f64,
    pub gyro_bias_walk: f64,
    pub accel_bias_walk: f64,
}

impl From<&ImuParams> for ProcessNoise {
    fn from(p: &ImuParams) -> Self {
        Self {
            gyro_noise_density: p.gyro_noise_density,
            accel_noise_density: p.accel_noise_density,
            gyro_bias_walk: p.gyro_bias_walk,
            accel_bias_walk: p.accel_bias_walk,
        }
    }
}

/// Error-state transition `I + F dt` for one IMU interval.
pub fn transition(
    state: &FilterState,
    gyro: &Vector3<f64>,
    accel: &Vector3<f64>,
    dt: f64,
) -> Matrix15 {
    let r = state.imu.pose().body_to_world();
    let w = gyro - state.imu.gyro_bias;
    let a = accel - state.imu.accel_bias;
    let mut f = Matrix15::zeros();
    f.fixed_view_mut::<3, 3>(DP, DV)
        .copy_from(&Matrix3::identity());
    f.fixed_view_mut::<3, 3>(DV, DTHETA)
        .copy_from(&(-r * skew(&a)));
    f.fixed_view_mut::<3, 3>(DV, DBA).copy_from(&(-r));
    f.fixed_view_mut::<3, 3>(DTHETA, DTHETA)
        .copy_from(&(-skew(&w)));
    f.fixed_view_mut::<3, 3>(DTHETA, DBG)
        .copy_from(&(-Matrix3::identity()));
    Matrix15::identity() + f * dt
}

pub fn discrete_noise(noise: &ProcessNoise, dt: f64) -> Matrix15 {
    let mut q = Matrix15::zeros();
    let blocks = [
        (DV, noise.accel_noise_density),
        (DTHETA, noise.gyro_noise_density),
        (DBG, noise.gyro_bias_walk),
        (DBA, noise.accel_bias_walk),
    ];
    for (o, density) in blocks {
        for i in 0..3 {
            q[(o + i, o + i)] = density * density * dt;
        }
    }
    q
}

/// Advances the state by one IMU interval of length `dt` using the
/// bias-corrected readings, and the covariance to first order.
pub fn propagate(
    state: &mut FilterState,
    cov: &mut Covariance,
    gyro: &Vector3<f64>,
    accel: &Vector3<f64>,
    dt: f64,
    gravity: &Vector3<f64>,
    noise: &ProcessNoise,
) -> Result<(), FilterError> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(FilterError::Propagation(format!("dt = {dt}")));
    }
    if !gyro.iter().chain(accel.iter()).all(|x| x.is_finite()) {
        return Err(FilterError::Propagation("non-finite IMU sample".into()));
    }
    let phi = transition(state, gyro, accel, dt);

    let imu = &mut state.imu;
    let r = imu.pose().body_to_world();
    let w = gyro - imu.gyro_bias;
    let acc_w = r * (accel - imu.accel_bias) + gravity;
    imu.position += imu.velocity * dt + 0.5 * acc_w * dt * dt;
    imu.velocity += acc_w * dt;
    imu.orientation = nalgebra::UnitQuaternion::from_scaled_axis(-w * dt) * imu.orientation;

    let n = cov.dim();
    let p = &mut cov.0;
    let pii = p.fixed_view::<15, 15>(0, 0).into_owned();
    let pii = phi * pii * phi.transpose() + discrete_noise(noise, dt);
    p.fixed_view_mut::<15, 15>(0, 0).copy_from(&pii);
    if n > IMU_DIM {
        let pix = &phi * p.view((0, IMU_DIM), (IMU_DIM, n - IMU_DIM));
        p.view_mut((0, IMU_DIM), (IMU_DIM, n - IMU_DIM))
            .copy_from(&pix);
        p.view_mut((IMU_DIM, 0), (n - IMU_DIM, IMU_DIM))
            .copy_from(&pix.transpose());
    }
    cov.symmetrize();
    if !state.is_finite() || !cov.is_finite() {
        return Err(FilterError::Propagation("non-finite result".into()));
    }
    Ok(())
}
