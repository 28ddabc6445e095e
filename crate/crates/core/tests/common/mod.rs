#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rangevio::filter::measurement::{planar_init, reanchor, PlanePrior};
use rangevio::filter::state::{perturb_orientation, FilterState, ImuState, PoseClone, SlamFeature};
use rangevio::filter::update::{facet_prediction, slam_jacobian};
use rangevio::geometry::{world_to_inverse_depth, Pose};

pub const JACOBIAN_TOLERANCE: f64 = 1e-5;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn small_rotation(rng: &mut ChaCha8Rng, max: f64) -> Vector3<f64> {
    Vector3::from_fn(|_, _| rng.random_range(-max..max))
}

fn tilted_nadir(rng: &mut ChaCha8Rng, position: Vector3<f64>) -> Pose {
    let base = Pose::nadir(position, rng.random_range(-3.0..3.0));
    Pose::new(
        position,
        perturb_orientation(&base.orientation, &small_rotation(rng, 0.15)),
    )
}

/// Random descent state: IMU above flat-ish ground, `clones` window poses
/// trailing it, and `features` ground points anchored to random clones and
/// visible from the current pose.
pub fn random_state(rng: &mut ChaCha8Rng, clones: usize, features: usize) -> FilterState {
    let altitude = rng.random_range(500.0..4000.0);
    let pos = Vector3::new(
        rng.random_range(-500.0..500.0),
        rng.random_range(-500.0..500.0),
        altitude,
    );
    let vel = Vector3::new(
        rng.random_range(-20.0..20.0),
        rng.random_range(-20.0..20.0),
        -56.0,
    );
    let pose = tilted_nadir(rng, pos);
    let imu = ImuState {
        position: pos,
        velocity: vel,
        orientation: pose.orientation,
        gyro_bias: small_rotation(rng, 1e-3),
        accel_bias: small_rotation(rng, 0.05),
    };
    let mut state = FilterState::new(imu);
    for k in 0..clones {
        let back = (clones - k) as f64 * 0.1;
        let p = pos - vel * back + small_rotation(rng, 2.0);
        state.clones.push(PoseClone {
            frame_index: 10 + k,
            pose: tilted_nadir(rng, p),
        });
    }
    let half = 0.25 * altitude;
    while state.features.len() < features {
        let world = Vector3::new(
            pos.x + rng.random_range(-half..half),
            pos.y + rng.random_range(-half..half),
            rng.random_range(-300.0..300.0),
        );
        let slot = rng.random_range(0..clones);
        let anchor = state.clones[slot];
        let Ok(param) = world_to_inverse_depth(&anchor.pose, anchor.frame_index, &world) else {
            continue;
        };
        if pose.to_body(&world).z <= 0.0 {
            continue;
        }
        let id = state.features.len() as u64;
        state.features.push(SlamFeature { id, param });
    }
    state
}

/// Per-variable central-difference steps for the error state.
pub fn error_steps(state: &FilterState) -> DVector<f64> {
    let mut h = DVector::from_element(state.dim(), 1e-3);
    for i in 6..9 {
        h[i] = 1e-6;
    }
    for slot in 0..state.clones.len() {
        let o = state.clone_offset(slot);
        for i in 0..3 {
            h[o + i] = 1e-2;
            h[o + 3 + i] = 1e-6;
        }
    }
    for (slot, f) in state.features.iter().enumerate() {
        let o = state.feature_offset(slot);
        h[o] = 1e-6;
        h[o + 1] = 1e-6;
        h[o + 2] = 1e-4 * f.param.rho;
    }
    h
}

/// Central finite-difference Jacobian of `f` around zero perturbation.
pub fn central_difference<F>(f: F, steps: &DVector<f64>, rows: usize) -> DMatrix<f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let n = steps.len();
    let mut j = DMatrix::zeros(rows, n);
    for c in 0..n {
        let mut d = DVector::zeros(n);
        d[c] = steps[c];
        let plus = f(&d);
        d[c] = -steps[c];
        let minus = f(&d);
        j.set_column(c, &((plus - minus) / (2.0 * steps[c])));
    }
    j
}

/// Largest column-wise relative error between analytic and numerical
/// Jacobians. Columns that are numerically zero are compared absolutely
/// against `1e-9` of the matrix norm.
pub fn relative_error(analytic: &DMatrix<f64>, numeric: &DMatrix<f64>) -> f64 {
    let scale = numeric.norm().max(1e-300);
    let mut worst: f64 = 0.0;
    for c in 0..numeric.ncols() {
        let a = analytic.column(c);
        let n = numeric.column(c);
        let diff = (a - n).norm();
        let denom = n.norm().max(1e-9 * scale);
        let e = if n.norm() < 1e-9 * scale {
            diff / scale
        } else {
            diff / denom
        };
        worst = worst.max(e);
    }
    worst
}

pub fn perturbed(state: &FilterState, dx: &DVector<f64>) -> FilterState {
    let mut s = state.clone();
    s.boxplus(dx);
    s
}

pub fn slam_jacobian_error(state: &FilterState) -> f64 {
    let mut worst: f64 = 0.0;
    let steps = error_steps(state);
    for slot in 0..state.features.len() {
        let (_, h) = slam_jacobian(state, slot).unwrap();
        let fd = central_difference(
            |dx| {
                let z = slam_jacobian(&perturbed(state, dx), slot).unwrap().0;
                DVector::from_column_slice(z.as_slice())
            },
            &steps,
            2,
        );
        worst = worst.max(relative_error(&h, &fd));
    }
    worst
}

/// Random state with a facet under the boresight: three features placed
/// around the image center on rough terrain plus distractors.
pub fn random_facet_state(rng: &mut ChaCha8Rng) -> FilterState {
    loop {
        let mut state = random_state(rng, 3, 0);
        let cam = state.imu.pose();
        let alt = state.imu.position.z;
        let mut id = 0;
        let mut add =
            |state: &mut FilterState, uv: Vector2<f64>, depth: f64, rng: &mut ChaCha8Rng| {
                let world =
                    cam.position + cam.body_to_world() * (Vector3::new(uv.x, uv.y, 1.0) * depth);
                let slot = rng.random_range(0..state.clones.len());
                let anchor = state.clones[slot];
                if let Ok(param) = world_to_inverse_depth(&anchor.pose, anchor.frame_index, &world)
                {
                    state.features.push(SlamFeature { id, param });
                    id += 1;
                }
            };
        for k in 0..3 {
            let a = k as f64 * 2.0944 + rng.random_range(-0.4..0.4);
            let r = rng.random_range(0.1..0.6);
            let depth = alt * rng.random_range(0.6..1.3);
            add(
                &mut state,
                Vector2::new(r * a.cos(), r * a.sin()),
                depth,
                rng,
            );
        }
        for _ in 0..rng.random_range(0..4) {
            let uv = Vector2::new(rng.random_range(-0.9..0.9), rng.random_range(-0.9..0.9));
            if uv.norm() > 0.7 {
                add(&mut state, uv, alt * rng.random_range(0.6..1.3), rng);
            }
        }
        if let Ok(Some(_)) = facet_prediction(&state) {
            return state;
        }
    }
}

/// Returns `None` when a perturbation switched the facet triangle.
pub fn facet_jacobian_error(state: &FilterState) -> Option<f64> {
    let (_, h, ids) = facet_prediction(state).unwrap().unwrap();
    let steps = error_steps(state);
    let same = std::cell::Cell::new(true);
    let fd = central_difference(
        |dx| match facet_prediction(&perturbed(state, dx)) {
            Ok(Some((r, _, tri))) => {
                if tri != ids {
                    same.set(false);
                }
                DVector::from_element(1, r)
            }
            _ => {
                same.set(false);
                DVector::zeros(1)
            }
        },
        &steps,
        1,
    );
    same.get().then(|| relative_error(&h, &fd))
}

fn perturb_pose(pose: &Pose, d: &[f64]) -> Pose {
    Pose::new(
        pose.position + Vector3::new(d[0], d[1], d[2]),
        perturb_orientation(&pose.orientation, &Vector3::new(d[3], d[4], d[5])),
    )
}

pub fn random_anchor(rng: &mut ChaCha8Rng) -> Pose {
    let pos = Vector3::new(
        rng.random_range(-500.0..500.0),
        rng.random_range(-500.0..500.0),
        rng.random_range(300.0..5000.0),
    );
    tilted_nadir(rng, pos)
}

/// Planar init w.r.t. (anchor dp, anchor dtheta, u, v).
pub fn planar_init_error(anchor: &Pose, uv: &Vector2<f64>, plane: PlanePrior) -> Option<f64> {
    let init = planar_init(anchor, uv, plane)?;
    let mut analytic = DMatrix::zeros(3, 8);
    analytic.view_mut((0, 0), (3, 6)).copy_from(&init.d_anchor);
    analytic
        .view_mut((0, 6), (3, 2))
        .copy_from(&init.d_measurement);
    let steps = DVector::from_column_slice(&[1e-2, 1e-2, 1e-2, 1e-6, 1e-6, 1e-6, 1e-6, 1e-6]);
    let fd = central_difference(
        |d| {
            let p = perturb_pose(anchor, d.as_slice());
            let f = planar_init(&p, &(uv + Vector2::new(d[6], d[7])), plane)
                .unwrap()
                .feature;
            DVector::from_column_slice(f.as_slice())
        },
        &steps,
        3,
    );
    Some(relative_error(&analytic, &fd))
}

/// Re-anchoring w.r.t. (old anchor, new anchor, feature).
pub fn reanchor_error(state: &FilterState, slot: usize, to: usize) -> f64 {
    let f = state.features[slot].param;
    let from = state.anchor_slot(slot).unwrap();
    let old = state.clones[from].pose;
    let new = state.clones[to].pose;
    let r = reanchor(&old, &new, &f).unwrap();
    let mut analytic = DMatrix::zeros(3, 15);
    analytic
        .view_mut((0, 0), (3, 3))
        .copy_from(&r.d_old_anchor_position);
    analytic
        .view_mut((0, 3), (3, 3))
        .copy_from(&r.d_old_anchor_theta);
    analytic
        .view_mut((0, 6), (3, 3))
        .copy_from(&r.d_new_anchor_position);
    analytic
        .view_mut((0, 9), (3, 3))
        .copy_from(&r.d_new_anchor_theta);
    analytic.view_mut((0, 12), (3, 3)).copy_from(&r.d_feature);
    let mut steps = DVector::from_element(15, 1e-6);
    for i in [0, 1, 2, 6, 7, 8] {
        steps[i] = 1e-2;
    }
    steps[14] = 1e-4 * f.rho;
    let fd = central_difference(
        |d| {
            let o = perturb_pose(&old, &d.as_slice()[0..6]);
            let n = perturb_pose(&new, &d.as_slice()[6..12]);
            let mut g = f;
            g.alpha += d[12];
            g.beta += d[13];
            g.rho += d[14];
            DVector::from_column_slice(reanchor(&o, &n, &g).unwrap().feature.as_slice())
        },
        &steps,
        3,
    );
    relative_error(&analytic, &fd)
}
