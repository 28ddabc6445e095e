mod common;

use common::*;
use nalgebra::{DMatrix, Vector2, Vector3};
use rangevio::filter::init::{
    init_range_feature, init_slam_feature_planar, PlanarInitParams, RhoSigmaMapping,
};
use rangevio::filter::measurement::{facet_range, PlanePrior};
use rangevio::filter::state::{Covariance, FilterState, ImuState, PoseClone};
use rangevio::filter::update::{facet_prediction, slam_jacobian, slam_update};
use rangevio::filter::window::manage_window;
use rangevio::filter::CHI2_2DOF_95;
use rangevio::frontend::FeatureMatch;
use rangevio::geometry::{inverse_depth_to_world, project_normalized, Pose};

const SIGMA_V: f64 = 1.0 / 320.0;

fn nadir_filter(position: Vector3<f64>) -> (FilterState, Covariance) {
    let pose = Pose::nadir(position, 0.0);
    let imu = ImuState {
        position,
        velocity: Vector3::new(50.0, 0.0, 0.0),
        orientation: pose.orientation,
        gyro_bias: Vector3::zeros(),
        accel_bias: Vector3::zeros(),
    };
    let mut p = DMatrix::identity(15, 15) * 1e-4;
    for i in 0..3 {
        p[(i, i)] = 25.0;
        p[(3 + i, 3 + i)] = 1.0;
    }
    (FilterState::new(imu), Covariance(p))
}

fn planar_params() -> PlanarInitParams {
    PlanarInitParams {
        sigma_v: SIGMA_V,
        rho_sigma_ratio: 0.5,
        default_depth: 1000.0,
        max_features: 15,
    }
}

fn exact_match(state: &FilterState, id: u64, world: &Vector3<f64>, frame: usize) -> FeatureMatch {
    let uv = project_normalized(&state.imu.pose().to_body(world)).unwrap();
    FeatureMatch {
        feature_id: id,
        normalized: uv,
        pixel: Vector2::zeros(),
        frame_index: frame,
    }
}

fn assert_symmetric_psd(cov: &Covariance) {
    assert!(
        cov.max_asymmetry() <= 1e-9,
        "asymmetry {}",
        cov.max_asymmetry()
    );
    assert!(
        cov.min_eigenvalue() >= -1e-9,
        "min eigenvalue {}",
        cov.min_eigenvalue()
    );
}

#[test]
fn nadir_boresight_planar_feature_has_inverse_altitude() {
    let (mut s, mut c) = nadir_filter(Vector3::new(0.0, 0.0, 1000.0));
    manage_window(&mut s, &mut c, 0, 5).unwrap();
    let m = exact_match(&s, 1, &Vector3::zeros(), 0);
    init_slam_feature_planar(
        &mut s,
        &mut c,
        &m,
        PlanePrior::Elevation(0.0),
        &planar_params(),
    )
    .unwrap();
    assert!((s.features[0].param.rho - 1e-3).abs() < 1e-15);
    let var = c.0[(s.feature_offset(0) + 2, s.feature_offset(0) + 2)];
    assert!(var.sqrt() >= 0.5 * 1e-3);
}

#[test]
fn planar_augmentation_leaves_existing_estimates_untouched() {
    let mut r = rng(3);
    let mut s = random_state(&mut r, 3, 4);
    let n = s.dim();
    let mut c = Covariance(DMatrix::identity(n, n) * 1e-3);
    s.clones.last_mut().unwrap().pose = s.imu.pose();
    let frame = s.clones.last().unwrap().frame_index;
    let before = s.clone();
    let old_cov = c.0.clone();
    let m = FeatureMatch {
        feature_id: 99,
        normalized: Vector2::new(0.1, -0.2),
        pixel: Vector2::zeros(),
        frame_index: frame,
    };
    let ground = s.imu.position.z - 1500.0;
    init_slam_feature_planar(
        &mut s,
        &mut c,
        &m,
        PlanePrior::Elevation(ground),
        &planar_params(),
    )
    .unwrap();
    assert_eq!(s.imu, before.imu);
    assert_eq!(s.clones, before.clones);
    assert_eq!(&s.features[..4], &before.features[..]);
    assert_eq!(c.0.view((0, 0), (n, n)), old_cov.view((0, 0), (n, n)));
    assert_symmetric_psd(&c);
}

#[test]
fn planar_budget_is_enforced() {
    let (mut s, mut c) = nadir_filter(Vector3::new(0.0, 0.0, 1000.0));
    manage_window(&mut s, &mut c, 0, 5).unwrap();
    let params = PlanarInitParams {
        max_features: 2,
        ..planar_params()
    };
    for id in 0..2 {
        let m = exact_match(&s, id, &Vector3::new(id as f64 * 50.0, 0.0, 0.0), 0);
        init_slam_feature_planar(&mut s, &mut c, &m, PlanePrior::Elevation(0.0), &params).unwrap();
    }
    let m = exact_match(&s, 5, &Vector3::new(10.0, 10.0, 0.0), 0);
    assert!(
        init_slam_feature_planar(&mut s, &mut c, &m, PlanePrior::Elevation(0.0), &params).is_err()
    );
}

#[test]
fn range_feature_from_far_return() {
    let (mut s, mut c) = nadir_filter(Vector3::new(0.0, 0.0, 12000.0));
    manage_window(&mut s, &mut c, 7, 5).unwrap();
    let sigma_rho = RhoSigmaMapping::FirstOrder.sigma_rho(1.0, 12000.0);
    assert!((sigma_rho - 1.0 / 144e6).abs() < 1e-20);
    assert_eq!(RhoSigmaMapping::Literal.sigma_rho(1.0, 12000.0), 1.0);
    init_range_feature(&mut s, &mut c, 3, 7, 12000.0, sigma_rho, SIGMA_V, 15).unwrap();
    let f = s.features[0].param;
    assert!((f.rho - 8.333e-5).abs() < 1e-8);
    assert!(f.is_range_feature);
    assert_eq!((f.alpha, f.beta), (0.0, 0.0));
    let o = s.feature_offset(0);
    assert!(c.0.view((o, 0), (3, o)).iter().all(|&x| x == 0.0));
}

#[test]
fn range_feature_evicts_most_depth_uncertain_feature() {
    let (mut s, mut c) = nadir_filter(Vector3::new(0.0, 0.0, 1000.0));
    manage_window(&mut s, &mut c, 0, 5).unwrap();
    let params = PlanarInitParams {
        max_features: 3,
        ..planar_params()
    };
    for (id, x) in [(10, 0.0), (11, 300.0), (12, -200.0)] {
        let m = exact_match(&s, id, &Vector3::new(x, 50.0, 0.0), 0);
        init_slam_feature_planar(&mut s, &mut c, &m, PlanePrior::Elevation(0.0), &params).unwrap();
    }
    // Highest inverse depth carries the largest proportional variance.
    let var = |s: &FilterState, c: &Covariance, k: usize| {
        c.0[(s.feature_offset(k) + 2, s.feature_offset(k) + 2)]
    };
    let worst = (0..3)
        .max_by(|&a, &b| var(&s, &c, a).total_cmp(&var(&s, &c, b)))
        .unwrap();
    let worst_id = s.features[worst].id;
    let evicted = init_range_feature(&mut s, &mut c, 20, 0, 1000.0, 1e-6, SIGMA_V, 3).unwrap();
    assert_eq!(evicted, Some(worst_id));
    assert_eq!(s.features.len(), 3);
    assert!(s.feature_slot(20).is_some());
    assert_symmetric_psd(&c);
}

#[test]
fn zero_innovation_update_keeps_state_and_shrinks_trace() {
    let mut r = rng(8);
    let mut s = random_state(&mut r, 4, 6);
    let n = s.dim();
    let mut c = Covariance(DMatrix::identity(n, n) * 1e-4);
    let before = s.clone();
    let matches: Vec<FeatureMatch> = (0..s.features.len())
        .map(|k| {
            let z = slam_jacobian(&s, k).unwrap().0;
            FeatureMatch {
                feature_id: s.features[k].id,
                normalized: z,
                pixel: Vector2::zeros(),
                frame_index: 0,
            }
        })
        .collect();
    let trace = c.trace();
    let stats = slam_update(&mut s, &mut c, &matches, SIGMA_V, Some(CHI2_2DOF_95)).unwrap();
    assert_eq!(stats.used, 6);
    assert_eq!(s.imu, before.imu);
    assert_eq!(s.features, before.features);
    assert!(c.trace() <= trace);
    assert_symmetric_psd(&c);
}

#[test]
fn outlier_is_gated() {
    let mut r = rng(9);
    let mut s = random_state(&mut r, 3, 3);
    let n = s.dim();
    let mut c = Covariance(DMatrix::identity(n, n) * 1e-6);
    let z = slam_jacobian(&s, 0).unwrap().0 + Vector2::new(0.2, 0.0);
    let m = FeatureMatch {
        feature_id: s.features[0].id,
        normalized: z,
        pixel: Vector2::zeros(),
        frame_index: 0,
    };
    let stats = slam_update(&mut s, &mut c, &[m], SIGMA_V, Some(CHI2_2DOF_95)).unwrap();
    assert_eq!(stats.gated, vec![s.features[0].id]);
    assert_eq!(stats.used, 0);
}

/// Flies the nadir camera along x and measures one planar feature from
/// each position with exact measurements.
fn fly_and_observe(
    s: &mut FilterState,
    c: &mut Covariance,
    world: &[Vector3<f64>],
    frames: usize,
) -> Vec<f64> {
    let mut var = Vec::new();
    for k in 1..=frames {
        s.imu.position.x += 5.0;
        manage_window(s, c, k, 5).unwrap();
        let matches: Vec<FeatureMatch> = s
            .features
            .iter()
            .map(|f| exact_match(s, f.id, &world[f.id as usize], k))
            .collect();
        slam_update(s, c, &matches, SIGMA_V, None).unwrap();
        var.push(c.0[(s.feature_offset(0) + 2, s.feature_offset(0) + 2)]);
    }
    var
}

#[test]
fn baseline_shrinks_inverse_depth_variance() {
    let (mut s, mut c) = nadir_filter(Vector3::new(0.0, 0.0, 1000.0));
    // A well-known pose so the baseline is informative.
    for i in 0..9 {
        c.0[(i, i)] = 1e-6;
    }
    manage_window(&mut s, &mut c, 0, 5).unwrap();
    let world = [Vector3::new(40.0, -30.0, 0.0)];
    let m = exact_match(&s, 0, &world[0], 0);
    init_slam_feature_planar(
        &mut s,
        &mut c,
        &m,
        PlanePrior::Elevation(0.0),
        &planar_params(),
    )
    .unwrap();
    let v0 = c.0[(s.feature_offset(0) + 2, s.feature_offset(0) + 2)];
    let var = fly_and_observe(&mut s, &mut c, &world, 3);
    assert!(var[0] < v0);
    assert!(var.windows(2).all(|w| w[1] < w[0]), "{var:?}");
}

#[test]
fn range_feature_sharpens_other_depths_under_translation() {
    // Two runs differing only by whether a range-feature is present: the
    // cross terms it builds through the (shared) pose error make the planar
    // feature depth converge further.
    let run = |with_range: bool| {
        let (mut s, mut c) = nadir_filter(Vector3::new(0.0, 0.0, 1000.0));
        manage_window(&mut s, &mut c, 0, 5).unwrap();
        let world = [Vector3::new(120.0, -80.0, 0.0), Vector3::new(0.0, 0.0, 0.0)];
        let m = exact_match(&s, 0, &world[0], 0);
        init_slam_feature_planar(
            &mut s,
            &mut c,
            &m,
            PlanePrior::Elevation(0.0),
            &planar_params(),
        )
        .unwrap();
        if with_range {
            init_range_feature(&mut s, &mut c, 1, 0, 1000.0, 1.0 / 1e6, SIGMA_V, 15).unwrap();
        }
        *fly_and_observe(&mut s, &mut c, &world, 4).last().unwrap()
    };
    let without = run(false);
    let with = run(true);
    assert!(with < without, "{with} vs {without}");
}

#[test]
fn window_is_fifo_and_reanchoring_preserves_points() {
    let mut r = rng(11);
    let mut s = random_state(&mut r, 2, 5);
    let n = s.dim();
    let mut c = Covariance(DMatrix::identity(n, n) * 1e-4);
    let oldest = s.clones[0].frame_index;
    let world_before: Vec<Vector3<f64>> = s
        .features
        .iter()
        .map(|f| {
            inverse_depth_to_world(
                &s.clones[s.clone_slot(f.param.anchor_index).unwrap()].pose,
                &f.param,
            )
            .unwrap()
        })
        .collect();
    let event = manage_window(&mut s, &mut c, 50, 2).unwrap();
    assert_eq!(event.evicted_frame, Some(oldest));
    assert_eq!(
        s.clones.iter().map(|c| c.frame_index).collect::<Vec<_>>(),
        vec![11, 50]
    );
    for (f, w) in s.features.iter().zip(&world_before) {
        let anchor = s.clones[s.clone_slot(f.param.anchor_index).unwrap()].pose;
        assert!(
            (inverse_depth_to_world(&anchor, &f.param).unwrap() - w).norm()
                < 1e-9 * w.norm().max(1.0) * 10.0
        );
    }
    assert_eq!(c.dim(), s.dim());
    assert_symmetric_psd(&c);
}

#[test]
fn window_of_two_evicts_after_three_frames() {
    let (mut s, mut c) = nadir_filter(Vector3::new(0.0, 0.0, 500.0));
    for k in 0..3 {
        manage_window(&mut s, &mut c, k, 2).unwrap();
    }
    assert_eq!(
        s.clones.iter().map(|c| c.frame_index).collect::<Vec<_>>(),
        vec![1, 2]
    );
    assert_eq!(c.dim(), 27);
}

#[test]
fn facet_on_true_plane_predicts_true_range() {
    let (mut s, _) = nadir_filter(Vector3::new(0.0, 0.0, 1500.0));
    s.clones.push(PoseClone {
        frame_index: 0,
        pose: Pose::nadir(Vector3::new(-30.0, 5.0, 1510.0), 0.1),
    });
    let anchor = s.clones[0].pose;
    // Tilted ground plane z = 0.2 x + 0.1 y.
    let plane = |x: f64, y: f64| Vector3::new(x, y, 0.2 * x + 0.1 * y);
    for (id, (x, y)) in [
        (-300.0, -200.0),
        (350.0, -150.0),
        (20.0, 400.0),
        (800.0, 800.0),
    ]
    .into_iter()
    .enumerate()
    {
        let param = rangevio::geometry::world_to_inverse_depth(&anchor, 0, &plane(x, y)).unwrap();
        s.features.push(rangevio::filter::SlamFeature {
            id: id as u64,
            param,
        });
    }
    let (range, _, _) = facet_prediction(&s).unwrap().unwrap();
    let truth = 1500.0;
    assert!((range - truth).abs() < 1e-9, "{range}");
}

#[test]
fn facet_error_follows_relief_step() {
    // Vertices on a high plateau, beam hitting a deep canyon floor 8000 m
    // lower: the predicted range is off by the relief.
    let camera = Vector3::new(0.0, 0.0, 10000.0);
    let to_cam = |p: Vector3<f64>| Vector3::new(p.x - camera.x, -(p.y - camera.y), camera.z - p.z);
    let verts = [
        to_cam(Vector3::new(-500.0, -400.0, 8000.0)),
        to_cam(Vector3::new(600.0, -300.0, 8000.0)),
        to_cam(Vector3::new(0.0, 700.0, 8000.0)),
    ];
    let (predicted, _) = facet_range(&verts).unwrap();
    let true_range = 10000.0;
    let error = true_range - predicted;
    assert!((error - 8000.0).abs() < 1e-6, "{error}");
}
