//! One end-to-end run: world, sensors, tracker, trigger and filter.

use std::collections::HashSet;
use std::path::PathBuf;

use nalgebra::{DMatrix, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::config::{InitErrorModel, SimConfig, TerrainKind, VelocityModel};
use super::HarnessError;
use crate::filter::state::perturb_orientation;
use crate::filter::{Estimator, FilterConfig, FilterMode, ImuState, ProcessNoise, StepRecord};
use crate::frontend::{
    min_eig_score, render_image, render_window, spatial_gradient_matrix, OracleTracker, Shading,
    TriggerDecision, TriggerState,
};
use crate::geometry::{CameraIntrinsics, Pose};
use crate::simworld::{
    generate_trajectory, sample_imu, sample_lrf, sample_wind_velocity, Albedo, CameraFrame,
    ImuParams, ProceduralTerrain, RangeSeed, SensorFrame, Terrain, TrajectoryPlan, TruthSample,
    MARS_GRAVITY,
};

/// Candidate range-feature tracks get ids from here up, disjoint from the
/// ordinary tracker.
const CANDIDATE_ID_BASE: u64 = 1 << 40;

/// Shared, read-only part of a campaign.
#[derive(Debug, Clone)]
pub struct World {
    pub terrain: Terrain,
    pub albedo: Albedo,
    pub intrinsics: CameraIntrinsics,
    pub shading: Shading,
}

impl World {
    pub fn build(cfg: &SimConfig) -> Result<Self, HarnessError> {
        let terrain = match &cfg.terrain {
            TerrainKind::Flat => Terrain::flat(cfg.terrain_half_extent, cfg.terrain_elevation),
            TerrainKind::Procedural => {
                let mut p = ProceduralTerrain::centered(
                    cfg.terrain_half_extent,
                    cfg.terrain_cell_size,
                    cfg.terrain_relief,
                    cfg.terrain_seed,
                );
                p.base_wavelength = cfg.terrain_wavelength;
                p.base_elevation = cfg.terrain_elevation;
                p.generate()?
            }
            TerrainKind::File(path) => Terrain::load_ascii(path)?,
        };
        let intrinsics =
            CameraIntrinsics::new(cfg.camera_fov_deg, cfg.camera_width, cfg.camera_height)
                .map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(Self {
            terrain,
            albedo: Albedo {
                seed: cfg.albedo_seed,
                ..Albedo::default()
            },
            intrinsics,
            shading: Shading::default(),
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrialOptions {
    /// Track covariance symmetry and smallest eigenvalue after every step.
    pub check_covariance: bool,
    /// Start from `full_profile_start_agl` instead of `start_agl`.
    pub full_profile: bool,
    /// Write rendered camera frames (PGM, once per second) here.
    pub render_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialConfig {
    pub sim: SimConfig,
    pub mode: FilterMode,
    pub master_seed: u64,
    pub trial: usize,
    pub options: TrialOptions,
}

/// Independent random stream of a trial.
#[derive(Debug, Clone, Copy)]
enum Stream {
    Scenario = 0,
    InitialError = 1,
    Imu = 2,
    Tracker = 3,
    RangeFinder = 4,
    Candidates = 5,
}

pub fn stream_rng(master_seed: u64, trial: usize, stream: u8) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(((trial as u64) << 8) | stream as u64);
    rng
}

fn rng_for(cfg: &TrialConfig, s: Stream) -> ChaCha8Rng {
    stream_rng(cfg.master_seed, cfg.trial, s as u8)
}

/// Velocity sample at a camera frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesRow {
    pub t: f64,
    pub v_true: Vector3<f64>,
    pub v_est: Vector3<f64>,
    /// Three standard deviations of the velocity estimate per axis.
    pub sigma3: Vector3<f64>,
    /// Velocity normalized estimation error squared.
    pub nees: f64,
}

impl SeriesRow {
    pub fn error(&self) -> Vector3<f64> {
        self.v_est - self.v_true
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub trial: usize,
    pub seed: u64,
    pub mode: FilterMode,
    pub series: Vec<SeriesRow>,
    pub diverged: bool,
    pub failure: Option<String>,
    /// Times at which range-features entered the state.
    pub range_feature_times: Vec<f64>,
    pub facet_updates: usize,
    /// Largest asymmetry and smallest eigenvalue over trace seen, when
    /// checked.
    pub covariance_health: Option<(f64, f64)>,
    pub final_window: f64,
    /// True position at the first sample (NaN when setup failed).
    pub start_position: Vector3<f64>,
}

impl TrialResult {
    fn rms(rows: &[SeriesRow], f: impl Fn(&SeriesRow) -> f64) -> f64 {
        if rows.is_empty() {
            return f64::NAN;
        }
        (rows.iter().map(|r| f(r).powi(2)).sum::<f64>() / rows.len() as f64).sqrt()
    }

    /// Per-axis RMS velocity error over the whole run.
    pub fn rms_error(&self) -> Vector3<f64> {
        Vector3::from_fn(|i, _| Self::rms(&self.series, |r| r.error()[i]))
    }

    /// RMS of the velocity error norm over the trailing `final_window` seconds.
    pub fn final_rms(&self) -> f64 {
        let Some(last) = self.series.last() else {
            return f64::NAN;
        };
        let start = self
            .series
            .partition_point(|r| r.t < last.t - self.final_window);
        Self::rms(&self.series[start..], |r| r.error().norm())
    }

    pub fn setup_failure(cfg: &TrialConfig, reason: String) -> Self {
        Self {
            trial: cfg.trial,
            seed: cfg.master_seed,
            mode: cfg.mode,
            series: Vec::new(),
            diverged: true,
            failure: Some(reason),
            range_feature_times: Vec::new(),
            facet_updates: 0,
            covariance_health: None,
            final_window: cfg.sim.final_window,
            start_position: Vector3::repeat(f64::NAN),
        }
    }

    pub fn failed(&self) -> bool {
        self.failure.is_some()
    }
}

struct Scenario {
    truth: Vec<TruthSample>,
    prior_elevation: f64,
}

fn nadir_attitude<R: Rng>(rng: &mut R) -> nalgebra::UnitQuaternion<f64> {
    Pose::nadir(
        Vector3::zeros(),
        rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
    )
    .orientation
}

fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

fn build_scenario(cfg: &TrialConfig, world: &World) -> Result<Scenario, HarnessError> {
    let sim = &cfg.sim;
    let terrain = &world.terrain;
    let mut rng = rng_for(cfg, Stream::Scenario);
    let dt = 1.0 / sim.imu_rate;
    let start_agl = if cfg.options.full_profile {
        sim.full_profile_start_agl
    } else {
        sim.start_agl
    };
    let mut last_err = String::new();
    for _ in 0..200 {
        let attitude = nadir_attitude(&mut rng);
        let (plan, prior_elevation) = match sim.velocity_model {
            VelocityModel::Descent => {
                let r = sim.landing_radius * rng.random::<f64>().sqrt();
                let a = rng.random_range(0.0..std::f64::consts::TAU);
                let landing = Vector2::new(r * a.cos(), r * a.sin());
                let velocity = sample_wind_velocity(&mut rng, sim.wind_sigma, sim.descent_velocity);
                let Ok(ground) = terrain.elevation_at(landing.x, landing.y) else {
                    continue;
                };
                let duration = (start_agl - sim.end_agl) / -sim.descent_velocity;
                let end = Vector3::new(landing.x, landing.y, ground + sim.end_agl);
                let plan = TrajectoryPlan {
                    start_position: end - velocity * duration,
                    velocity,
                    attitude,
                    duration,
                    min_agl: 0.5 * sim.end_agl,
                };
                (plan, ground)
            }
            VelocityModel::Fixed => {
                let velocity = Vector3::from(sim.velocity);
                let mid = Vector2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
                    * sim.landing_radius;
                let start_xy = mid - velocity.xy() * (0.5 * sim.duration);
                let Ok(ground) = terrain.elevation_at(start_xy.x, start_xy.y) else {
                    continue;
                };
                let plan = TrajectoryPlan {
                    start_position: Vector3::new(start_xy.x, start_xy.y, ground + start_agl),
                    velocity,
                    attitude,
                    duration: sim.duration,
                    min_agl: 0.5 * sim.end_agl,
                };
                (plan, ground)
            }
        };
        match generate_trajectory(&plan, dt, terrain) {
            Ok(truth) => {
                return Ok(Scenario {
                    truth,
                    prior_elevation,
                })
            }
            Err(e) => last_err = e.to_string(),
        }
    }
    Err(HarnessError::Scenario(format!(
        "no valid trajectory after 200 draws: {last_err}"
    )))
}

fn initial_estimate(
    cfg: &TrialConfig,
    world: &World,
    truth: &TruthSample,
) -> Result<(ImuState, DMatrix<f64>), HarnessError> {
    let sim = &cfg.sim;
    let mut rng = rng_for(cfg, Stream::InitialError);
    let p = truth.pose.position;
    let ground = world.terrain.elevation_at(p.x, p.y)?;
    let agl = p.z - ground;
    let att_sigma = sim.init_attitude_sigma_deg.to_radians();
    let dtheta = Vector3::from_fn(|_, _| att_sigma * gaussian(&mut rng));
    let orientation = perturb_orientation(&truth.pose.orientation, &dtheta);
    let mut p0 = DMatrix::zeros(15, 15);
    let (position, velocity, pos_sigma, vel_sigma) = match sim.init_error_model {
        InitErrorModel::Random | InitErrorModel::Gaussian => {
            let magnitude = sim.init_position_fraction * agl;
            let vs = Vector3::new(
                sim.init_velocity_sigma_xy,
                sim.init_velocity_sigma_xy,
                sim.init_velocity_sigma_z,
            );
            let sigma = if sim.init_position_sigma_fraction < 0.0 {
                magnitude / 3f64.sqrt()
            } else {
                sim.init_position_sigma_fraction * agl
            };
            if sim.init_error_model == InitErrorModel::Random {
                let dir = Vector3::from_fn(|_, _| gaussian(&mut rng)).normalize();
                (
                    p + dir * magnitude,
                    Vector3::from(sim.init_velocity),
                    Vector3::repeat(sigma),
                    vs,
                )
            } else {
                let dp = Vector3::from_fn(|_, _| sigma * gaussian(&mut rng));
                let dv = vs.map(|s| s * gaussian(&mut rng));
                (p + dp, truth.velocity + dv, Vector3::repeat(sigma), vs)
            }
        }
        InitErrorModel::Scale => {
            let g = Vector3::new(p.x, p.y, ground);
            let s = 1.0 + sim.init_scale_error;
            let v = truth.velocity * s;
            let f = sim.init_scale_sigma_fraction;
            let vs = Vector3::repeat((f * truth.velocity.norm()).max(0.1));
            (g + (p - g) * s, v, Vector3::repeat(f * agl), vs)
        }
    };
    for i in 0..3 {
        p0[(i, i)] = pos_sigma[i].powi(2);
        p0[(3 + i, 3 + i)] = vel_sigma[i].powi(2);
        p0[(6 + i, 6 + i)] = att_sigma.powi(2);
        p0[(9 + i, 9 + i)] = sim.init_gyro_bias_sigma.powi(2);
        p0[(12 + i, 12 + i)] = sim.init_accel_bias_sigma.powi(2);
    }
    let imu = ImuState {
        position,
        velocity,
        orientation,
        gyro_bias: Vector3::zeros(),
        accel_bias: Vector3::zeros(),
    };
    Ok((imu, p0))
}

pub fn filter_config(
    sim: &SimConfig,
    mode: FilterMode,
    focal: f64,
    prior_elevation: f64,
) -> FilterConfig {
    let mut f = FilterConfig::new(mode, sim.pixel_sigma / focal, prior_elevation);
    f.window_size = sim.window_size;
    f.max_features = sim.max_features;
    f.min_track_length = sim.min_track_length;
    f.lrf_sigma = sim.lrf_sigma;
    f.rho_sigma_mapping = sim.rho_sigma_mapping;
    f.gate = (sim.chi2_gate > 0.0).then_some(sim.chi2_gate);
    if let Some(src) = sim.plane_source {
        f.plane_source = src;
    }
    f.rho_sigma_ratio = sim.rho_sigma_ratio;
    f.default_depth = sim.default_depth;
    f.process_noise = ProcessNoise {
        gyro_noise_density: sim.gyro_noise_density,
        accel_noise_density: sim.accel_noise_density,
        gyro_bias_walk: sim.gyro_bias_walk,
        accel_bias_walk: sim.accel_bias_walk,
    };
    f.gravity = MARS_GRAVITY;
    f
}

/// Corner score of the window around the image center seen from `pose`.
pub fn center_corner_score(world: &World, pose: &Pose, half_window: usize) -> f64 {
    let half = half_window + 1;
    let img = render_window(
        pose,
        &world.intrinsics,
        &world.terrain,
        &world.albedo,
        &world.shading,
        world.intrinsics.principal_point(),
        half,
    );
    spatial_gradient_matrix(&img, half, half, half_window, half_window)
        .map(|g| min_eig_score(&g))
        .unwrap_or(0.0)
}

/// Range-feature candidates: a landmark at the boresight hit of every frame,
/// tracked until the trigger decides on it.
struct Candidates {
    tracker: OracleTracker,
    trigger: TriggerState<Option<(u64, f64)>>,
    fired: HashSet<u64>,
    rng: ChaCha8Rng,
}

impl Candidates {
    fn frame(
        &mut self,
        world: &World,
        pose: &Pose,
        frame_index: usize,
        lrf: Option<f64>,
        half_window: usize,
    ) -> (Vec<crate::frontend::FeatureMatch>, Vec<RangeSeed>) {
        let out = self
            .tracker
            .observe(pose, frame_index, &world.terrain, &mut self.rng);
        for id in &out.lost {
            self.fired.remove(id);
        }
        let mut matches = out.matches;
        let mut payload = None;
        let mut score = 0.0;
        if let (Some(range), Ok(true_range)) = (
            lrf,
            world
                .terrain
                .ray_intersect(&pose.position, &pose.boresight_world()),
        ) {
            let id = self
                .tracker
                .add_landmark(pose.position + pose.boresight_world() * true_range);
            if let Some(m) = self
                .tracker
                .observe_one(id, pose, frame_index, &mut self.rng)
            {
                matches.push(m);
                payload = Some((id, range));
                score = center_corner_score(world, pose, half_window);
            }
        }
        let mut seeds = Vec::new();
        if let Some((idx, decision, Some((id, range)))) =
            self.trigger.push(frame_index, score, payload)
        {
            let alive = self.tracker.landmark(id).is_some();
            if decision == TriggerDecision::Fire && alive {
                self.fired.insert(id);
                seeds.push(RangeSeed {
                    feature_id: id,
                    frame_index: idx,
                    range,
                });
            } else {
                self.tracker.remove(id);
            }
        }
        matches.retain(|m| self.fired.contains(&m.feature_id));
        (matches, seeds)
    }

    fn remove(&mut self, id: u64) {
        self.tracker.remove(id);
        self.fired.remove(&id);
    }
}

pub fn run_trial(cfg: &TrialConfig, world: &World) -> Result<TrialResult, HarnessError> {
    let sim = &cfg.sim;
    sim.validate()?;
    let scenario = build_scenario(cfg, world)?;
    let truth = &scenario.truth;
    let imu_params = ImuParams {
        gyro_noise_density: sim.gyro_noise_density,
        gyro_bias_walk: sim.gyro_bias_walk,
        accel_noise_density: sim.accel_noise_density,
        accel_bias_walk: sim.accel_bias_walk,
        rate: sim.imu_rate,
        gyro_bias_init_sigma: sim.init_gyro_bias_sigma,
        accel_bias_init_sigma: sim.init_accel_bias_sigma,
    };
    let imu = sample_imu(
        truth,
        &imu_params,
        MARS_GRAVITY,
        &mut rng_for(cfg, Stream::Imu),
    );
    let (initial, p0) = initial_estimate(cfg, world, &truth[0])?;
    let fcfg = filter_config(
        sim,
        cfg.mode,
        world.intrinsics.focal(),
        scenario.prior_elevation,
    );
    let mut est = Estimator::new(fcfg, initial, p0, truth[0].t)?;

    let mut tracker = OracleTracker::new(world.intrinsics, sim.pixel_sigma, sim.tracker_budget);
    let mut tracker_rng = rng_for(cfg, Stream::Tracker);
    let mut lrf_rng = rng_for(cfg, Stream::RangeFinder);
    let mut candidates = (cfg.mode == FilterMode::Range).then(|| Candidates {
        tracker: OracleTracker::new(world.intrinsics, sim.pixel_sigma, 0)
            .with_first_id(CANDIDATE_ID_BASE),
        trigger: TriggerState::new(sim.trigger_threshold, sim.trigger_lookahead)
            .expect("validated trigger")
            .peaks_only(sim.trigger_peaks_only),
        fired: HashSet::new(),
        rng: rng_for(cfg, Stream::Candidates),
    });
    if let Some(dir) = &cfg.options.render_dir {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::Io {
            path: dir.clone(),
            message: e.to_string(),
        })?;
    }

    let camera_every = (sim.imu_rate / sim.camera_rate).round() as usize;
    let mut result = TrialResult {
        trial: cfg.trial,
        seed: cfg.master_seed,
        mode: cfg.mode,
        series: Vec::with_capacity(truth.len() / camera_every + 1),
        diverged: false,
        failure: None,
        range_feature_times: Vec::new(),
        facet_updates: 0,
        covariance_health: cfg.options.check_covariance.then_some((0.0, f64::INFINITY)),
        final_window: sim.final_window,
        start_position: truth[0].pose.position,
    };
    let mut above_since: Option<f64> = None;

    for (k, (s, sample)) in truth.iter().zip(&imu.samples).enumerate() {
        let pose = s.pose;
        let camera_frame = k % camera_every == 0;
        let mut lrf_range = None;
        let camera = if camera_frame {
            let frame_index = k / camera_every;
            lrf_range = sample_lrf(&pose, &world.terrain, sim.lrf_sigma, &mut lrf_rng);
            let out = tracker.observe(&pose, frame_index, &world.terrain, &mut tracker_rng);
            let mut matches = out.matches;
            let mut range_seeds = Vec::new();
            if let Some(c) = candidates.as_mut() {
                let (m, seeds) = c.frame(
                    world,
                    &pose,
                    frame_index,
                    lrf_range,
                    sim.trigger_half_window,
                );
                matches.extend(m);
                range_seeds = seeds;
            }
            if let Some(dir) = &cfg.options.render_dir {
                if frame_index % (sim.camera_rate.round() as usize).max(1) == 0 {
                    write_frame(dir, frame_index, world, &pose)?;
                }
            }
            Some(CameraFrame {
                frame_index,
                matches,
                range_seeds,
            })
        } else {
            None
        };
        let frame = SensorFrame {
            t: s.t,
            gyro: sample.gyro,
            accel: sample.accel,
            lrf_range,
            camera,
        };
        let record = match est.step(&frame) {
            Ok(r) => r,
            Err(e) => {
                result.failure = Some(format!("t = {:.2} s: {e}", s.t));
                result.diverged = true;
                break;
            }
        };
        if let Some(h) = result.covariance_health.as_mut() {
            let c = est.covariance();
            h.0 = h.0.max(c.max_asymmetry());
            h.1 = h.1.min(c.min_eigenvalue() / c.trace());
        }
        let Some(report) = &record.camera else {
            continue;
        };
        for &id in &report.removed {
            if id >= CANDIDATE_ID_BASE {
                if let Some(c) = candidates.as_mut() {
                    c.remove(id);
                }
            } else {
                tracker.remove(id);
            }
        }
        if report.range_features_added > 0 {
            result.range_feature_times.push(s.t);
        }
        if report.facet_used {
            result.facet_updates += 1;
        }
        let row = series_row(&record, &s.velocity);
        let err = row.error().norm();
        if !err.is_finite() {
            result.failure = Some(format!("t = {:.2} s: non-finite velocity", s.t));
            result.diverged = true;
            break;
        }
        if err > sim.divergence_threshold {
            let since = *above_since.get_or_insert(s.t);
            if s.t - since >= sim.divergence_duration - 1e-9 {
                result.diverged = true;
            }
        } else {
            above_since = None;
        }
        result.series.push(row);
    }
    Ok(result)
}

fn series_row(record: &StepRecord, v_true: &Vector3<f64>) -> SeriesRow {
    let err = record.velocity - v_true;
    let pv = record.velocity_covariance;
    let nees = pv
        .cholesky()
        .map(|c| err.dot(&c.solve(&err)))
        .unwrap_or(f64::INFINITY);
    SeriesRow {
        t: record.t,
        v_true: *v_true,
        v_est: record.velocity,
        sigma3: Vector3::from_fn(|i, _| 3.0 * pv[(i, i)].max(0.0).sqrt()),
        nees,
    }
}

fn write_frame(
    dir: &std::path::Path,
    frame_index: usize,
    world: &World,
    pose: &Pose,
) -> Result<(), HarnessError> {
    let img = render_image(
        pose,
        &world.intrinsics,
        &world.terrain,
        &world.albedo,
        &world.shading,
    );
    let path = dir.join(format!("frame_{frame_index:05}.pgm"));
    let file = std::fs::File::create(&path).map_err(|e| HarnessError::Io {
        path: path.clone(),
        message: e.to_string(),
    })?;
    img.write_pgm(std::io::BufWriter::new(file))
        .map_err(|e| HarnessError::Io {
            path,
            message: e.to_string(),
        })
}
