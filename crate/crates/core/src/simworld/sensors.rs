//! IMU, laser range finder and wind sampling.

use nalgebra::Vector3;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::frontend::FeatureMatch;
use crate::geometry::{log_so3, Pose};

use super::{Terrain, TruthSample};

/// Shortest and longest ranges the range finder reports (m).
pub const LRF_MIN_RANGE: f64 = 10.0;
pub const LRF_MAX_RANGE: f64 = 14000.0;

/// 45 m/s at three sigma on each horizontal wind component.
pub const WIND_SIGMA: f64 = 45.0 / 3.0;
/// Vertical velocity at parachute terminal descent (m/s, world z up).
pub const TERMINAL_DESCENT_VELOCITY: f64 = -56.0;

/// Continuous-time IMU error model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuParams {
    /// rad/s/sqrt(Hz)
    pub gyro_noise_density: f64,
    /// rad/s^2/sqrt(Hz)
    pub gyro_bias_walk: f64,
    /// m/s^2/sqrt(Hz)
    pub accel_noise_density: f64,
    /// m/s^3/sqrt(Hz)
    pub accel_bias_walk: f64,
    /// Sample rate (Hz).
    pub rate: f64,
    /// One-sigma turn-on bias per axis (rad/s).
    pub gyro_bias_init_sigma: f64,
    /// One-sigma turn-on bias per axis (m/s^2).
    pub accel_bias_init_sigma: f64,
}

impl ImuParams {
    /// MPU-9250 class noise figures at 100 Hz.
    pub fn mpu9250() -> Self {
        Self {
            gyro_noise_density: 0.0013,
            gyro_bias_walk: 0.00013,
            accel_noise_density: 0.0083,
            accel_bias_walk: 0.00083,
            rate: 100.0,
            gyro_bias_init_sigma: 0.0,
            accel_bias_init_sigma: 0.0,
        }
    }

    pub fn noiseless(rate: f64) -> Self {
        Self {
            gyro_noise_density: 0.0,
            gyro_bias_walk: 0.0,
            accel_noise_density: 0.0,
            accel_bias_walk: 0.0,
            rate,
            gyro_bias_init_sigma: 0.0,
            accel_bias_init_sigma: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let all = [
            self.gyro_noise_density,
            self.gyro_bias_walk,
            self.accel_noise_density,
            self.accel_bias_walk,
            self.gyro_bias_init_sigma,
            self.accel_bias_init_sigma,
        ];
        if all.iter().any(|v| !(*v >= 0.0)) {
            return Err("IMU noise parameters must be non-negative".into());
        }
        if !(self.rate > 0.0) {
            return Err("IMU rate must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    pub t: f64,
    /// Body-frame angular rate (rad/s).
    pub gyro: Vector3<f64>,
    /// Body-frame specific force (m/s^2).
    pub accel: Vector3<f64>,
}

/// IMU measurements plus the true bias histories behind them.
#[derive(Debug, Clone, PartialEq)]
pub struct ImuStream {
    pub samples: Vec<ImuSample>,
    pub gyro_bias: Vec<Vector3<f64>>,
    pub accel_bias: Vec<Vector3<f64>>,
}

fn gaussian3<R: Rng + ?Sized>(rng: &mut R, sigma: f64) -> Vector3<f64> {
    if sigma == 0.0 {
        return Vector3::zeros();
    }
    Vector3::from_fn(|_, _| sigma * Distribution::<f64>::sample(&StandardNormal, rng))
}

/// Samples IMU readings along a uniformly sampled ground-truth trajectory.
///
/// Sample `k` measures the motion over `[t_k, t_{k+1})`: specific force
/// `C_k (a_w - g_w)` and the body rate rotating `C_k` into `C_{k+1}`, plus
/// bias and white noise of standard deviation `density * sqrt(rate)`.
/// Biases follow random walks with per-step sigma `walk * sqrt(dt)`.
pub fn sample_imu<R: Rng + ?Sized>(
    traj: &[TruthSample],
    params: &ImuParams,
    gravity: f64,
    rng: &mut R,
) -> ImuStream {
    let dt = 1.0 / params.rate;
    let g_world = Vector3::new(0.0, 0.0, -gravity);
    let gyro_sigma = params.gyro_noise_density * params.rate.sqrt();
    let accel_sigma = params.accel_noise_density * params.rate.sqrt();
    let gyro_walk = params.gyro_bias_walk * dt.sqrt();
    let accel_walk = params.accel_bias_walk * dt.sqrt();

    let mut bg = gaussian3(rng, params.gyro_bias_init_sigma);
    let mut ba = gaussian3(rng, params.accel_bias_init_sigma);
    let mut stream = ImuStream {
        samples: Vec::with_capacity(traj.len()),
        gyro_bias: Vec::with_capacity(traj.len()),
        accel_bias: Vec::with_capacity(traj.len()),
    };
    for (k, s) in traj.iter().enumerate() {
        let (accel_world, rate) = match traj.get(k + 1) {
            Some(next) => {
                let a = (next.velocity - s.velocity) / dt;
                let rel = s.pose.world_to_body() * next.pose.body_to_world();
                (a, log_so3(&rel) / dt)
            }
            None => (Vector3::zeros(), Vector3::zeros()),
        };
        let specific_force = s.pose.world_to_body() * (accel_world - g_world);
        let gyro = rate + bg + gaussian3(rng, gyro_sigma);
        let accel = specific_force + ba + gaussian3(rng, accel_sigma);
        stream.samples.push(ImuSample {
            t: s.t,
            gyro,
            accel,
        });
        stream.gyro_bias.push(bg);
        stream.accel_bias.push(ba);
        bg += gaussian3(rng, gyro_walk);
        ba += gaussian3(rng, accel_walk);
    }
    stream
}

/// Noisy range along the camera optical axis, or `None` when the beam misses
/// the terrain or the true range is outside the device span.
pub fn sample_lrf<R: Rng + ?Sized>(
    pose: &Pose,
    terrain: &Terrain,
    sigma: f64,
    rng: &mut R,
) -> Option<f64> {
    let range = terrain
        .ray_intersect(&pose.position, &pose.boresight_world())
        .ok()?;
    if !(LRF_MIN_RANGE..=LRF_MAX_RANGE).contains(&range) {
        return None;
    }
    let noise: f64 = if sigma > 0.0 {
        sigma * rng.sample::<f64, _>(StandardNormal)
    } else {
        0.0
    };
    Some((range + noise).clamp(LRF_MIN_RANGE, LRF_MAX_RANGE))
}

/// Descent velocity `vertical` with lateral wind drift of standard deviation
/// `sigma` per horizontal axis.
pub fn sample_wind_velocity<R: Rng + ?Sized>(
    rng: &mut R,
    sigma: f64,
    vertical: f64,
) -> Vector3<f64> {
    let vx: f64 = rng.sample(StandardNormal);
    let vy: f64 = rng.sample(StandardNormal);
    Vector3::new(sigma * vx, sigma * vy, vertical)
}

/// A range-feature candidate confirmed by the corner-score trigger: the
/// tracked feature `feature_id` was at the optical axis of frame
/// `frame_index`, where the range finder read `range`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeSeed {
    pub feature_id: u64,
    pub frame_index: usize,
    pub range: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CameraFrame {
    pub frame_index: usize,
    pub matches: Vec<FeatureMatch>,
    pub range_seeds: Vec<RangeSeed>,
}

/// One time-stamped record of the sensor log.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorFrame {
    pub t: f64,
    pub gyro: Vector3<f64>,
    pub accel: Vector3<f64>,
    pub lrf_range: Option<f64>,
    pub camera: Option<CameraFrame>,
}
