//! Step interface: consumes sensor records in time order and runs the
//! selected filter mode.

use std::collections::HashMap;

use nalgebra::{DMatrix, Matrix3, UnitQuaternion, Vector3};

use super::init::{
    init_range_feature, init_slam_feature_planar, remove_feature, PlanarInitParams, RhoSigmaMapping,
};
use super::measurement::PlanePrior;
use super::propagate::{propagate, ProcessNoise};
use super::state::{Covariance, FilterState, ImuState, DV, IMU_DIM};
use super::update::{facet_range_update, slam_update};
use super::window::manage_window;
use super::{FilterError, CHI2_2DOF_95};
use crate::simworld::{CameraFrame, ImuParams, SensorFrame, MARS_GRAVITY};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FilterMode {
    /// Planar-initialized SLAM features only.
    Vision,
    /// Vision plus the range-facet update on every camera frame.
    Facet,
    /// Vision plus range-features seeded at the range finder boresight.
    Range,
}

impl FilterMode {
    pub const ALL: [FilterMode; 3] = [Self::Vision, Self::Facet, Self::Range];

    pub fn name(self) -> &'static str {
        match self {
            Self::Vision => "vision",
            Self::Facet => "facet",
            Self::Range => "range",
        }
    }
}

impl std::str::FromStr for FilterMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "vision" => Ok(Self::Vision),
            "facet" => Ok(Self::Facet),
            "range" => Ok(Self::Range),
            other => Err(format!("unknown mode '{other}' (vision|facet|range)")),
        }
    }
}

/// Plane used for planar depth initialization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlaneSource {
    /// Horizontal plane at `prior_elevation`.
    Prior,
    /// Horizontal plane at the range finder hit, falling back to the prior
    /// without a return.
    RangeFinder,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterConfig {
    pub mode: FilterMode,
    pub window_size: usize,
    pub max_features: usize,
    pub min_track_length: usize,
    /// Normalized image coordinate std.
    pub sigma_v: f64,
    /// Range finder std (m).
    pub lrf_sigma: f64,
    pub rho_sigma_mapping: RhoSigmaMapping,
    /// Per-feature squared Mahalanobis gate; `None` disables gating.
    pub gate: Option<f64>,
    pub plane_source: PlaneSource,
    pub prior_elevation: f64,
    pub rho_sigma_ratio: f64,
    pub default_depth: f64,
    pub process_noise: ProcessNoise,
    pub gravity: f64,
}

impl FilterConfig {
    pub fn new(mode: FilterMode, sigma_v: f64, prior_elevation: f64) -> Self {
        Self {
            mode,
            window_size: 5,
            max_features: 15,
            min_track_length: 5,
            sigma_v,
            lrf_sigma: 1.0,
            rho_sigma_mapping: RhoSigmaMapping::FirstOrder,
            gate: Some(CHI2_2DOF_95),
            plane_source: if mode == FilterMode::Range {
                PlaneSource::RangeFinder
            } else {
                PlaneSource::Prior
            },
            prior_elevation,
            rho_sigma_ratio: 0.5,
            default_depth: 1000.0,
            process_noise: ProcessNoise::from(&ImuParams::mpu9250()),
            gravity: MARS_GRAVITY,
        }
    }

    pub fn validate(&self) -> Result<(), FilterError> {
        let bad = |m: &str| Err(FilterError::Config(m.into()));
        if self.window_size < 2 {
            return bad("window_size must be at least 2");
        }
        if self.max_features == 0 {
            return bad("max_features must be positive");
        }
        if !(self.sigma_v > 0.0) || !(self.lrf_sigma > 0.0) {
            return bad("measurement noise must be positive");
        }
        if !(self.rho_sigma_ratio > 0.0) || !(self.default_depth > 0.0) {
            return bad("planar init parameters must be positive");
        }
        Ok(())
    }
}

/// Per-step estimate with the inertial covariance diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
    pub covariance_diagonal: [f64; IMU_DIM],
    pub velocity_covariance: Matrix3<f64>,
    pub camera: Option<CameraReport>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CameraReport {
    pub frame_index: usize,
    /// Features the filter removed on its own (eviction, failed re-anchor,
    /// invalid depth); the tracker should drop them.
    pub removed: Vec<u64>,
    pub updated: usize,
    pub gated: usize,
    pub range_features_added: usize,
    pub facet_used: bool,
}

#[derive(Debug, Clone)]
pub struct Estimator {
    cfg: FilterConfig,
    state: FilterState,
    cov: Covariance,
    t: f64,
    last_imu: Option<(Vector3<f64>, Vector3<f64>)>,
    pending: HashMap<u64, usize>,
}

impl Estimator {
    pub fn new(
        cfg: FilterConfig,
        initial: ImuState,
        p0: DMatrix<f64>,
        t0: f64,
    ) -> Result<Self, FilterError> {
        cfg.validate()?;
        if p0.nrows() != IMU_DIM || p0.ncols() != IMU_DIM {
            return Err(FilterError::Config(
                "initial covariance must be 15x15".into(),
            ));
        }
        Ok(Self {
            cfg,
            state: FilterState::new(initial),
            cov: Covariance(p0),
            t: t0,
            last_imu: None,
            pending: HashMap::new(),
        })
    }

    pub fn state(&self) -> &FilterState {
        &self.state
    }

    pub fn covariance(&self) -> &Covariance {
        &self.cov
    }

    pub fn config(&self) -> &FilterConfig {
        &self.cfg
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    /// Consumes one sensor record. IMU readings in a record describe the
    /// interval that starts at its timestamp, so the state is first
    /// propagated with the previous reading.
    pub fn step(&mut self, frame: &SensorFrame) -> Result<StepRecord, FilterError> {
        if let Some((gyro, accel)) = self.last_imu {
            let dt = frame.t - self.t;
            let g = Vector3::new(0.0, 0.0, -self.cfg.gravity);
            propagate(
                &mut self.state,
                &mut self.cov,
                &gyro,
                &accel,
                dt,
                &g,
                &self.cfg.process_noise,
            )?;
        }
        self.t = frame.t;
        self.last_imu = Some((frame.gyro, frame.accel));
        let camera = match &frame.camera {
            Some(cam) => Some(self.camera_update(cam, frame.lrf_range)?),
            None => None,
        };
        Ok(self.record(camera))
    }

    fn record(&self, camera: Option<CameraReport>) -> StepRecord {
        let p = &self.cov.0;
        let imu = &self.state.imu;
        StepRecord {
            t: self.t,
            position: imu.position,
            velocity: imu.velocity,
            orientation: imu.orientation,
            covariance_diagonal: std::array::from_fn(|i| p[(i, i)]),
            velocity_covariance: p.fixed_view::<3, 3>(DV, DV).into_owned(),
            camera,
        }
    }

    fn plane_prior(&self, lrf_range: Option<f64>) -> PlanePrior {
        match (self.cfg.plane_source, lrf_range) {
            (PlaneSource::RangeFinder, Some(r)) => PlanePrior::BelowCamera(r),
            _ => PlanePrior::Elevation(self.cfg.prior_elevation),
        }
    }

    fn camera_update(
        &mut self,
        cam: &CameraFrame,
        lrf_range: Option<f64>,
    ) -> Result<CameraReport, FilterError> {
        let cfg = self.cfg.clone();
        let mut report = CameraReport {
            frame_index: cam.frame_index,
            ..Default::default()
        };
        let window = manage_window(
            &mut self.state,
            &mut self.cov,
            cam.frame_index,
            cfg.window_size,
        )?;
        report.removed.extend(window.dropped);

        // Features without a measurement this frame are gone for good.
        let seen: std::collections::HashSet<u64> =
            cam.matches.iter().map(|m| m.feature_id).collect();
        let mut slot = 0;
        while slot < self.state.features.len() {
            if seen.contains(&self.state.features[slot].id) {
                slot += 1;
            } else {
                remove_feature(&mut self.state, &mut self.cov, slot);
            }
        }

        if cfg.mode == FilterMode::Range {
            for seed in &cam.range_seeds {
                if self.state.feature_slot(seed.feature_id).is_some() {
                    continue;
                }
                let sigma_rho = cfg.rho_sigma_mapping.sigma_rho(cfg.lrf_sigma, seed.range);
                match init_range_feature(
                    &mut self.state,
                    &mut self.cov,
                    seed.feature_id,
                    seed.frame_index,
                    seed.range,
                    sigma_rho,
                    cfg.sigma_v,
                    cfg.max_features,
                ) {
                    Ok(evicted) => {
                        report.removed.extend(evicted);
                        report.range_features_added += 1;
                        self.pending.remove(&seed.feature_id);
                    }
                    Err(FilterError::MissingAnchor { .. }) => {}
                    Err(e) => return Err(e),
                }
            }
        }

        let stats = slam_update(
            &mut self.state,
            &mut self.cov,
            &cam.matches,
            cfg.sigma_v,
            cfg.gate,
        )?;
        report.updated = stats.used;
        report.gated = stats.gated.len();
        for id in stats.invalid {
            if let Some(slot) = self.state.feature_slot(id) {
                remove_feature(&mut self.state, &mut self.cov, slot);
                report.removed.push(id);
            }
        }

        if cfg.mode == FilterMode::Facet {
            if let Some(range) = lrf_range {
                report.facet_used =
                    facet_range_update(&mut self.state, &mut self.cov, range, cfg.lrf_sigma)?
                        .is_some();
            }
        }

        let plane = self.plane_prior(lrf_range);
        let params = PlanarInitParams {
            sigma_v: cfg.sigma_v,
            rho_sigma_ratio: cfg.rho_sigma_ratio,
            default_depth: cfg.default_depth,
            max_features: cfg.max_features,
        };
        self.pending.retain(|id, _| seen.contains(id));
        for m in &cam.matches {
            if self.state.feature_slot(m.feature_id).is_some() {
                continue;
            }
            let len = self.pending.entry(m.feature_id).or_insert(0);
            *len += 1;
            if *len >= cfg.min_track_length && self.state.features.len() < cfg.max_features {
                init_slam_feature_planar(&mut self.state, &mut self.cov, m, plane, &params)?;
                self.pending.remove(&m.feature_id);
            }
        }

        let mut slot = 0;
        while slot < self.state.features.len() {
            if self.state.features[slot].param.rho > 0.0 {
                slot += 1;
            } else {
                report.removed.push(self.state.features[slot].id);
                remove_feature(&mut self.state, &mut self.cov, slot);
            }
        }
        Ok(report)
    }
}
