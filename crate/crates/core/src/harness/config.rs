//! Flat `key = value` experiment configuration.
//!
//! Blank lines and `#` comments are ignored. Unknown keys are errors. Every
//! key and its default is listed in [`KEYS`].

use std::path::{Path, PathBuf};

use super::HarnessError;
use crate::filter::{PlaneSource, RhoSigmaMapping};

#[derive(Debug, Clone, PartialEq)]
pub enum TerrainKind {
    Flat,
    Procedural,
    File(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VelocityModel {
    /// Vertical descent at `descent_velocity` with Gaussian horizontal wind;
    /// runs from `start_agl` down to `end_agl`.
    Descent,
    /// Constant `velocity_{x,y,z}` for `duration` seconds from `start_agl`.
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitErrorModel {
    /// Position off by `init_position_fraction * AGL` in a random direction,
    /// random attitude error, velocity fixed to `init_velocity_*`.
    Random,
    /// Position and velocity scaled by `1 + init_scale_error` about the
    /// ground point below the vehicle.
    Scale,
    /// Position, velocity and attitude errors drawn from the estimator prior.
    Gaussian,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub terrain: TerrainKind,
    pub terrain_elevation: f64,
    pub terrain_relief: f64,
    pub terrain_seed: u64,
    pub terrain_wavelength: f64,
    pub terrain_half_extent: f64,
    pub terrain_cell_size: f64,
    pub albedo_seed: u64,

    pub velocity_model: VelocityModel,
    pub start_agl: f64,
    pub end_agl: f64,
    pub descent_velocity: f64,
    pub wind_sigma: f64,
    pub velocity: [f64; 3],
    pub duration: f64,
    pub landing_radius: f64,
    pub full_profile_start_agl: f64,

    pub imu_rate: f64,
    pub camera_rate: f64,
    pub gyro_noise_density: f64,
    pub gyro_bias_walk: f64,
    pub accel_noise_density: f64,
    pub accel_bias_walk: f64,
    pub pixel_sigma: f64,
    pub lrf_sigma: f64,
    pub camera_fov_deg: f64,
    pub camera_width: usize,
    pub camera_height: usize,
    pub tracker_budget: usize,

    pub window_size: usize,
    pub max_features: usize,
    pub min_track_length: usize,
    pub chi2_gate: f64,
    pub rho_sigma_mapping: RhoSigmaMapping,
    pub rho_sigma_ratio: f64,
    pub default_depth: f64,
    pub plane_source: Option<PlaneSource>,

    pub trigger_threshold: f64,
    pub trigger_lookahead: usize,
    pub trigger_peaks_only: bool,
    pub trigger_half_window: usize,

    pub init_error_model: InitErrorModel,
    pub init_attitude_sigma_deg: f64,
    pub init_position_fraction: f64,
    /// Estimator prior position sigma per axis as a fraction of AGL;
    /// negative means matched to the injected error.
    pub init_position_sigma_fraction: f64,
    pub init_velocity: [f64; 3],
    pub init_velocity_sigma_xy: f64,
    pub init_velocity_sigma_z: f64,
    pub init_scale_error: f64,
    /// Estimator prior sigma of the scale model, as a fraction of AGL and
    /// of speed.
    pub init_scale_sigma_fraction: f64,
    pub init_gyro_bias_sigma: f64,
    pub init_accel_bias_sigma: f64,

    pub divergence_threshold: f64,
    pub divergence_duration: f64,
    pub final_window: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            terrain: TerrainKind::Procedural,
            terrain_elevation: 0.0,
            terrain_relief: 2500.0,
            terrain_seed: 1,
            terrain_wavelength: 2000.0,
            terrain_half_extent: 12000.0,
            terrain_cell_size: 50.0,
            albedo_seed: 7,
            velocity_model: VelocityModel::Descent,
            start_agl: 3000.0,
            end_agl: 200.0,
            descent_velocity: -56.0,
            wind_sigma: 15.0,
            velocity: [0.0, 0.0, 0.0],
            duration: 60.0,
            landing_radius: 4000.0,
            full_profile_start_agl: 12000.0,
            imu_rate: 100.0,
            camera_rate: 10.0,
            gyro_noise_density: 0.0013,
            gyro_bias_walk: 0.00013,
            accel_noise_density: 0.0083,
            accel_bias_walk: 0.00083,
            pixel_sigma: 1.0,
            lrf_sigma: 1.0,
            camera_fov_deg: 90.0,
            camera_width: 640,
            camera_height: 480,
            tracker_budget: 15,
            window_size: 5,
            max_features: 15,
            min_track_length: 5,
            chi2_gate: crate::filter::CHI2_2DOF_95,
            rho_sigma_mapping: RhoSigmaMapping::FirstOrder,
            rho_sigma_ratio: 0.5,
            default_depth: 3000.0,
            plane_source: None,
            trigger_threshold: 1e-3,
            trigger_lookahead: 3,
            trigger_peaks_only: true,
            trigger_half_window: 4,
            init_error_model: InitErrorModel::Random,
            init_attitude_sigma_deg: 1.0 / 3.0,
            init_position_fraction: 0.2,
            init_position_sigma_fraction: -1.0,
            init_velocity: [0.0, 0.0, -56.0],
            init_velocity_sigma_xy: 15.0,
            init_velocity_sigma_z: 5.0,
            init_scale_error: 0.2,
            init_scale_sigma_fraction: 0.02,
            init_gyro_bias_sigma: 1e-4,
            init_accel_bias_sigma: 5e-3,
            divergence_threshold: 10.0,
            divergence_duration: 5.0,
            final_window: 10.0,
        }
    }
}

/// `(key, default, meaning)` for every recognized key.
pub const KEYS: &[(&str, &str, &str)] = &[
    (
        "terrain",
        "procedural",
        "flat | procedural | path to an ASCII grid file",
    ),
    ("terrain_elevation", "0", "elevation of flat terrain (m)"),
    ("terrain_relief", "2500", "procedural max-min elevation (m)"),
    ("terrain_seed", "1", "procedural terrain seed"),
    (
        "terrain_wavelength",
        "2000",
        "procedural coarsest wavelength (m)",
    ),
    (
        "terrain_half_extent",
        "12000",
        "generated terrain half size (m)",
    ),
    (
        "terrain_cell_size",
        "50",
        "generated terrain grid spacing (m)",
    ),
    ("albedo_seed", "7", "surface texture seed"),
    ("velocity_model", "descent", "descent | fixed"),
    ("start_agl", "3000", "initial height above the ground (m)"),
    ("end_agl", "200", "descent stops at this height (m)"),
    (
        "descent_velocity",
        "-56",
        "vertical velocity of the descent (m/s)",
    ),
    ("wind_sigma", "15", "horizontal wind std per axis (m/s)"),
    ("velocity_x", "0", "fixed-model velocity x (m/s)"),
    ("velocity_y", "0", "fixed-model velocity y (m/s)"),
    ("velocity_z", "0", "fixed-model velocity z (m/s)"),
    ("duration", "60", "fixed-model trial length (s)"),
    (
        "landing_radius",
        "4000",
        "landing points are drawn within this radius of the origin (m)",
    ),
    (
        "full_profile_start_agl",
        "12000",
        "start height used with --full-profile (m)",
    ),
    ("imu_rate", "100", "IMU rate (Hz)"),
    ("camera_rate", "10", "camera and range finder rate (Hz)"),
    ("gyro_noise_density", "0.0013", "rad/s/sqrt(Hz)"),
    ("gyro_bias_walk", "0.00013", "rad/s^2/sqrt(Hz)"),
    ("accel_noise_density", "0.0083", "m/s^2/sqrt(Hz)"),
    ("accel_bias_walk", "0.00083", "m/s^3/sqrt(Hz)"),
    ("pixel_sigma", "1", "feature measurement noise (px)"),
    ("lrf_sigma", "1", "range finder noise (m)"),
    ("camera_fov_deg", "90", "horizontal field of view (deg)"),
    ("camera_width", "640", "image width (px)"),
    ("camera_height", "480", "image height (px)"),
    ("tracker_budget", "15", "simultaneous feature tracks"),
    ("window_size", "5", "pose clones kept in the window"),
    ("max_features", "15", "SLAM features kept in the state"),
    (
        "min_track_length",
        "5",
        "frames before a planar feature is initialized",
    ),
    (
        "chi2_gate",
        "5.991464547107979",
        "per-feature gate; 0 disables",
    ),
    ("rho_sigma_mapping", "first_order", "first_order | literal"),
    (
        "rho_sigma_ratio",
        "0.5",
        "planar init inverse-depth std / inverse depth",
    ),
    (
        "default_depth",
        "3000",
        "depth used when a ray misses the plane (m)",
    ),
    (
        "plane_source",
        "auto",
        "auto | prior | lrf (auto: lrf in range mode)",
    ),
    ("trigger_threshold", "1e-3", "corner score threshold"),
    (
        "trigger_lookahead",
        "3",
        "frames a score must stay a maximum",
    ),
    (
        "trigger_peaks_only",
        "true",
        "also require a rise from the previous frame",
    ),
    (
        "trigger_half_window",
        "4",
        "half size of the corner score window (px)",
    ),
    ("init_error_model", "random", "random | scale | gaussian"),
    (
        "init_attitude_sigma_deg",
        "0.3333333333333333",
        "attitude error std per axis (deg)",
    ),
    (
        "init_position_fraction",
        "0.2",
        "position error magnitude / AGL",
    ),
    (
        "init_position_sigma_fraction",
        "-1",
        "estimator position sigma / AGL (negative: fraction / sqrt 3)",
    ),
    ("init_velocity_x", "0", "initial velocity estimate x (m/s)"),
    ("init_velocity_y", "0", "initial velocity estimate y (m/s)"),
    (
        "init_velocity_z",
        "-56",
        "initial velocity estimate z (m/s)",
    ),
    (
        "init_velocity_sigma_xy",
        "15",
        "initial velocity std x, y (m/s)",
    ),
    ("init_velocity_sigma_z", "5", "initial velocity std z (m/s)"),
    ("init_scale_error", "0.2", "scale model error"),
    (
        "init_scale_sigma_fraction",
        "0.02",
        "scale model prior sigma / AGL and / speed",
    ),
    (
        "init_gyro_bias_sigma",
        "1e-4",
        "initial gyro bias std (rad/s)",
    ),
    (
        "init_accel_bias_sigma",
        "5e-3",
        "initial accel bias std (m/s^2)",
    ),
    (
        "divergence_threshold",
        "10",
        "velocity error norm that counts as diverging (m/s)",
    ),
    (
        "divergence_duration",
        "5",
        "time above the threshold to flag divergence (s)",
    ),
    ("final_window", "10", "trailing window of the final RMS (s)"),
];

fn num(key: &str, v: &str) -> Result<f64, HarnessError> {
    v.parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| HarnessError::Config(format!("{key}: '{v}' is not a number")))
}

fn count(key: &str, v: &str) -> Result<usize, HarnessError> {
    v.parse::<usize>()
        .map_err(|_| HarnessError::Config(format!("{key}: '{v}' is not a count")))
}

fn seed(key: &str, v: &str) -> Result<u64, HarnessError> {
    v.parse::<u64>()
        .map_err(|_| HarnessError::Config(format!("{key}: '{v}' is not a seed")))
}

impl SimConfig {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let mut cfg = Self::parse(&text)?;
        if let TerrainKind::File(p) = &cfg.terrain {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    cfg.terrain = TerrainKind::File(dir.join(p));
                }
            }
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| {
                    HarnessError::Config(format!("line {}: expected key = value", n + 1))
                })?;
            cfg.set(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<(), HarnessError> {
        match key {
            "terrain" => {
                self.terrain = match v {
                    "flat" => TerrainKind::Flat,
                    "procedural" => TerrainKind::Procedural,
                    path => TerrainKind::File(PathBuf::from(path)),
                }
            }
            "terrain_elevation" => self.terrain_elevation = num(key, v)?,
            "terrain_relief" => self.terrain_relief = num(key, v)?,
            "terrain_seed" => self.terrain_seed = seed(key, v)?,
            "terrain_wavelength" => self.terrain_wavelength = num(key, v)?,
            "terrain_half_extent" => self.terrain_half_extent = num(key, v)?,
            "terrain_cell_size" => self.terrain_cell_size = num(key, v)?,
            "albedo_seed" => self.albedo_seed = seed(key, v)?,
            "velocity_model" => {
                self.velocity_model = match v {
                    "descent" => VelocityModel::Descent,
                    "fixed" => VelocityModel::Fixed,
                    _ => {
                        return Err(HarnessError::Config(format!(
                            "velocity_model: '{v}' (descent|fixed)"
                        )))
                    }
                }
            }
            "start_agl" => self.start_agl = num(key, v)?,
            "end_agl" => self.end_agl = num(key, v)?,
            "descent_velocity" => self.descent_velocity = num(key, v)?,
            "wind_sigma" => self.wind_sigma = num(key, v)?,
            "velocity_x" => self.velocity[0] = num(key, v)?,
            "velocity_y" => self.velocity[1] = num(key, v)?,
            "velocity_z" => self.velocity[2] = num(key, v)?,
            "duration" => self.duration = num(key, v)?,
            "landing_radius" => self.landing_radius = num(key, v)?,
            "full_profile_start_agl" => self.full_profile_start_agl = num(key, v)?,
            "imu_rate" => self.imu_rate = num(key, v)?,
            "camera_rate" => self.camera_rate = num(key, v)?,
            "gyro_noise_density" => self.gyro_noise_density = num(key, v)?,
            "gyro_bias_walk" => self.gyro_bias_walk = num(key, v)?,
            "accel_noise_density" => self.accel_noise_density = num(key, v)?,
            "accel_bias_walk" => self.accel_bias_walk = num(key, v)?,
            "pixel_sigma" => self.pixel_sigma = num(key, v)?,
            "lrf_sigma" => self.lrf_sigma = num(key, v)?,
            "camera_fov_deg" => self.camera_fov_deg = num(key, v)?,
            "camera_width" => self.camera_width = count(key, v)?,
            "camera_height" => self.camera_height = count(key, v)?,
            "tracker_budget" => self.tracker_budget = count(key, v)?,
            "window_size" => self.window_size = count(key, v)?,
            "max_features" => self.max_features = count(key, v)?,
            "min_track_length" => self.min_track_length = count(key, v)?,
            "chi2_gate" => self.chi2_gate = num(key, v)?,
            "rho_sigma_mapping" => {
                self.rho_sigma_mapping = match v {
                    "first_order" => RhoSigmaMapping::FirstOrder,
                    "literal" => RhoSigmaMapping::Literal,
                    _ => {
                        return Err(HarnessError::Config(format!(
                            "rho_sigma_mapping: '{v}' (first_order|literal)"
                        )))
                    }
                }
            }
            "rho_sigma_ratio" => self.rho_sigma_ratio = num(key, v)?,
            "default_depth" => self.default_depth = num(key, v)?,
            "plane_source" => {
                self.plane_source = match v {
                    "auto" => None,
                    "prior" => Some(PlaneSource::Prior),
                    "lrf" => Some(PlaneSource::RangeFinder),
                    _ => {
                        return Err(HarnessError::Config(format!(
                            "plane_source: '{v}' (auto|prior|lrf)"
                        )))
                    }
                }
            }
            "trigger_threshold" => self.trigger_threshold = num(key, v)?,
            "trigger_lookahead" => self.trigger_lookahead = count(key, v)?,
            "trigger_peaks_only" => {
                self.trigger_peaks_only = v
                    .parse::<bool>()
                    .map_err(|_| HarnessError::Config(format!("{key}: '{v}' is not true|false")))?
            }
            "trigger_half_window" => self.trigger_half_window = count(key, v)?,
            "init_error_model" => {
                self.init_error_model = match v {
                    "random" => InitErrorModel::Random,
                    "scale" => InitErrorModel::Scale,
                    "gaussian" => InitErrorModel::Gaussian,
                    _ => {
                        return Err(HarnessError::Config(format!(
                            "init_error_model: '{v}' (random|scale|gaussian)"
                        )))
                    }
                }
            }
            "init_attitude_sigma_deg" => self.init_attitude_sigma_deg = num(key, v)?,
            "init_position_fraction" => self.init_position_fraction = num(key, v)?,
            "init_position_sigma_fraction" => self.init_position_sigma_fraction = num(key, v)?,
            "init_velocity_x" => self.init_velocity[0] = num(key, v)?,
            "init_velocity_y" => self.init_velocity[1] = num(key, v)?,
            "init_velocity_z" => self.init_velocity[2] = num(key, v)?,
            "init_velocity_sigma_xy" => self.init_velocity_sigma_xy = num(key, v)?,
            "init_velocity_sigma_z" => self.init_velocity_sigma_z = num(key, v)?,
            "init_scale_error" => self.init_scale_error = num(key, v)?,
            "init_scale_sigma_fraction" => self.init_scale_sigma_fraction = num(key, v)?,
            "init_gyro_bias_sigma" => self.init_gyro_bias_sigma = num(key, v)?,
            "init_accel_bias_sigma" => self.init_accel_bias_sigma = num(key, v)?,
            "divergence_threshold" => self.divergence_threshold = num(key, v)?,
            "divergence_duration" => self.divergence_duration = num(key, v)?,
            "final_window" => self.final_window = num(key, v)?,
            _ => return Err(HarnessError::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let err = |m: String| Err(HarnessError::Config(m));
        let positive = [
            ("terrain_half_extent", self.terrain_half_extent),
            ("terrain_cell_size", self.terrain_cell_size),
            ("imu_rate", self.imu_rate),
            ("camera_rate", self.camera_rate),
            ("pixel_sigma", self.pixel_sigma),
            ("lrf_sigma", self.lrf_sigma),
            ("start_agl", self.start_agl),
            ("trigger_threshold", self.trigger_threshold),
            ("divergence_threshold", self.divergence_threshold),
            ("rho_sigma_ratio", self.rho_sigma_ratio),
            ("default_depth", self.default_depth),
        ];
        for (k, v) in positive {
            if !(v > 0.0) {
                return err(format!("{k} must be positive"));
            }
        }
        let ratio = self.imu_rate / self.camera_rate;
        if (ratio - ratio.round()).abs() > 1e-9 || ratio < 1.0 {
            return err("imu_rate must be an integer multiple of camera_rate".into());
        }
        if self.trigger_lookahead == 0 || self.trigger_lookahead >= self.window_size {
            return err("trigger_lookahead must be in [1, window_size)".into());
        }
        match self.velocity_model {
            VelocityModel::Descent => {
                if !(self.descent_velocity < 0.0) || !(self.end_agl < self.start_agl) {
                    return err("descent needs descent_velocity < 0 and end_agl < start_agl".into());
                }
            }
            VelocityModel::Fixed => {
                if !(self.duration > 0.0) {
                    return err("duration must be positive".into());
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn listed_defaults_reproduce_the_default_config() {
        let mut cfg = SimConfig::default();
        cfg.terrain = TerrainKind::Flat;
        cfg.trigger_threshold = 0.5;
        for (key, default, _) in KEYS {
            cfg.set(key, default)
                .unwrap_or_else(|e| panic!("{key}: {e}"));
        }
        assert_eq!(cfg, SimConfig::default());
    }

    #[test]
    fn parse_skips_comments_and_blank_lines() {
        let cfg = SimConfig::parse(
            "# descent\n\nterrain = flat   # no relief\nstart_agl=1500\ninit_error_model = scale\n",
        )
        .unwrap();
        assert_eq!(cfg.terrain, TerrainKind::Flat);
        assert_eq!(cfg.start_agl, 1500.0);
        assert_eq!(cfg.init_error_model, InitErrorModel::Scale);
        assert_eq!(cfg.end_agl, SimConfig::default().end_agl);
    }

    #[test]
    fn errors_name_the_offending_key_or_line() {
        let e = SimConfig::parse("start_agl = high")
            .unwrap_err()
            .to_string();
        assert!(e.contains("start_agl"), "{e}");
        let e = SimConfig::parse("bogus_key = 1").unwrap_err().to_string();
        assert!(e.contains("bogus_key"), "{e}");
        let e = SimConfig::parse("terrain = flat\njust words")
            .unwrap_err()
            .to_string();
        assert!(e.contains("line 2"), "{e}");
        let e = SimConfig::parse("plane_source = laser")
            .unwrap_err()
            .to_string();
        assert!(e.contains("plane_source"), "{e}");
        assert!(SimConfig::parse("camera_width = -3").is_err());
    }

    #[test]
    fn validation_rejects_inconsistent_values() {
        for text in [
            "trigger_lookahead = 5",
            "trigger_lookahead = 0",
            "imu_rate = 100\ncamera_rate = 30",
            "start_agl = 100\nend_agl = 200",
            "pixel_sigma = 0",
        ] {
            assert!(SimConfig::parse(text).is_err(), "{text}");
        }
    }

    #[test]
    fn relative_terrain_path_resolves_against_the_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "terrain = dem.txt\n").unwrap();
        let cfg = SimConfig::load(&path).unwrap();
        assert_eq!(cfg.terrain, TerrainKind::File(dir.path().join("dem.txt")));
    }
}
