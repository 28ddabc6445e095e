//! Measurement models and their analytic Jacobians.
//!
//! All functions here are pure in poses and feature parameters; assembly into
//! full-state Jacobians lives with the updates.

use nalgebra::{Matrix2x3, Matrix3, Matrix3x6, RowVector3, Vector2, Vector3};

use super::FilterError;
use crate::geometry::{skew, InverseDepthFeature, Pose};

/// Feature point seen from a camera, scaled by the inverse depth:
/// `g = R^T (R_a m + rho (p_a - p))`, together with its derivatives.
/// `R` denotes body-to-world rotations and `m = [alpha, beta, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledPoint {
    pub g: Vector3<f64>,
    pub d_position: Matrix3<f64>,
    pub d_theta: Matrix3<f64>,
    pub d_anchor_position: Matrix3<f64>,
    pub d_anchor_theta: Matrix3<f64>,
    /// Columns: alpha, beta, rho.
    pub d_feature: Matrix3<f64>,
}

pub fn scaled_point(camera: &Pose, anchor: &Pose, f: &InverseDepthFeature) -> ScaledPoint {
    let rt = camera.world_to_body();
    let ra = anchor.body_to_world();
    let m = f.bearing();
    let dp = anchor.position - camera.position;
    let g = rt * (ra * m + f.rho * dp);
    let rtra = rt * ra;
    let mut d_feature = Matrix3::zeros();
    d_feature.set_column(0, &rtra.column(0));
    d_feature.set_column(1, &rtra.column(1));
    d_feature.set_column(2, &(rt * dp));
    ScaledPoint {
        g,
        d_position: -f.rho * rt,
        d_theta: skew(&g),
        d_anchor_position: f.rho * rt,
        d_anchor_theta: -rtra * skew(&m),
        d_feature,
    }
}

/// Derivative of the pinhole projection `(g_x/g_z, g_y/g_z)`.
pub fn projection_jacobian(g: &Vector3<f64>) -> Matrix2x3<f64> {
    let zx = g.x / g.z;
    let zy = g.y / g.z;
    Matrix2x3::new(1.0, 0.0, -zx, 0.0, 1.0, -zy) / g.z
}

/// Predicted normalized image coordinates of a feature and the blocks of
/// `dz / d(error state)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlamPrediction {
    pub z: Vector2<f64>,
    pub d_position: Matrix2x3<f64>,
    pub d_theta: Matrix2x3<f64>,
    pub d_anchor_position: Matrix2x3<f64>,
    pub d_anchor_theta: Matrix2x3<f64>,
    pub d_feature: Matrix2x3<f64>,
}

pub fn slam_prediction(
    camera: &Pose,
    anchor: &Pose,
    f: &InverseDepthFeature,
) -> Result<SlamPrediction, FilterError> {
    let sp = scaled_point(camera, anchor, f);
    if !(sp.g.z > 0.0) {
        return Err(FilterError::BehindCamera);
    }
    let j = projection_jacobian(&sp.g);
    Ok(SlamPrediction {
        z: Vector2::new(sp.g.x / sp.g.z, sp.g.y / sp.g.z),
        d_position: j * sp.d_position,
        d_theta: j * sp.d_theta,
        d_anchor_position: j * sp.d_anchor_position,
        d_anchor_theta: j * sp.d_anchor_theta,
        d_feature: j * sp.d_feature,
    })
}

/// Feature point in camera coordinates, `g / rho`, with the same blocks as
/// [`ScaledPoint`].
pub fn camera_point(
    camera: &Pose,
    anchor: &Pose,
    f: &InverseDepthFeature,
) -> Result<ScaledPoint, FilterError> {
    if !(f.rho > 0.0) {
        return Err(FilterError::NonPositiveDepth);
    }
    let sp = scaled_point(camera, anchor, f);
    let s = 1.0 / f.rho;
    let mut d_feature = sp.d_feature * s;
    d_feature.set_column(2, &(sp.d_feature.column(2) * s - sp.g * s * s));
    Ok(ScaledPoint {
        g: sp.g * s,
        d_position: sp.d_position * s,
        d_theta: sp.d_theta * s,
        d_anchor_position: sp.d_anchor_position * s,
        d_anchor_theta: sp.d_anchor_theta * s,
        d_feature,
    })
}

/// Range along the camera z axis to the plane through three camera-frame
/// points, and its gradient with respect to each point.
pub fn facet_range(p: &[Vector3<f64>; 3]) -> Result<(f64, [RowVector3<f64>; 3]), FilterError> {
    let e3 = Vector3::z();
    let normal = (p[1] - p[0]).cross(&(p[2] - p[0]));
    let nz = normal.z;
    if nz.abs() < 1e-12 * normal.norm().max(1e-300) {
        return Err(FilterError::DegenerateFacet);
    }
    let d = p[0].dot(&p[1].cross(&p[2]));
    let h = d / nz;
    if !(h > 0.0) {
        return Err(FilterError::DegenerateFacet);
    }
    let mut grads = [RowVector3::zeros(); 3];
    for i in 0..3 {
        let (a, b) = (p[(i + 1) % 3], p[(i + 2) % 3]);
        // D = p_i . (p_a x p_b) and n_z = e3 . (p_i x p_a + p_a x p_b + p_b x p_i).
        let dd = a.cross(&b);
        let dnz = e3.cross(&(b - a));
        grads[i] = (dd / nz - dnz * (d / (nz * nz))).transpose();
    }
    Ok((h, grads))
}

/// Planar depth initialization: `rho = d_z / (z0 - p_z)` where `d = R_a [u, v, 1]`
/// and `z0 - p_z` comes from the plane model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PlanePrior {
    /// Horizontal plane at a known world elevation.
    Elevation(f64),
    /// Horizontal plane through the point the range finder hits at `range`.
    BelowCamera(f64),
}

/// Initialization output and `d(alpha, beta, rho) / d(anchor dp, anchor dtheta)`
/// and `/ d(u, v)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanarInit {
    pub feature: Vector3<f64>,
    pub d_anchor: Matrix3x6<f64>,
    pub d_measurement: nalgebra::Matrix3x2<f64>,
}

/// Returns `None` when the ray does not hit the plane in front of the camera.
pub fn planar_init(anchor: &Pose, uv: &Vector2<f64>, plane: PlanePrior) -> Option<PlanarInit> {
    let ra = anchor.body_to_world();
    let m = Vector3::new(uv.x, uv.y, 1.0);
    let d = ra * m;
    // d(d)/d(dtheta) = -R_a [m]x; only the z row matters.
    let dd_dtheta = -(ra * skew(&m)).row(2).into_owned();
    let (denom, ddenom_dp, ddenom_dtheta) = match plane {
        PlanePrior::Elevation(z0) => (
            z0 - anchor.position.z,
            RowVector3::new(0.0, 0.0, -1.0),
            RowVector3::zeros(),
        ),
        PlanePrior::BelowCamera(range) => {
            let c = ra * Vector3::z();
            let dc = -(ra * skew(&Vector3::z())).row(2).into_owned();
            (range * c.z, RowVector3::zeros(), dc * range)
        }
    };
    let rho = d.z / denom;
    if !(rho > 0.0) || !rho.is_finite() {
        return None;
    }
    let drho_dp = -ddenom_dp * (d.z / (denom * denom));
    let drho_dtheta = dd_dtheta / denom - ddenom_dtheta * (d.z / (denom * denom));
    let mut d_anchor = Matrix3x6::zeros();
    d_anchor.fixed_view_mut::<1, 3>(2, 0).copy_from(&drho_dp);
    d_anchor
        .fixed_view_mut::<1, 3>(2, 3)
        .copy_from(&drho_dtheta);
    let mut d_measurement = nalgebra::Matrix3x2::zeros();
    d_measurement[(0, 0)] = 1.0;
    d_measurement[(1, 1)] = 1.0;
    d_measurement[(2, 0)] = ra[(2, 0)] / denom;
    d_measurement[(2, 1)] = ra[(2, 1)] / denom;
    Some(PlanarInit {
        feature: Vector3::new(uv.x, uv.y, rho),
        d_anchor,
        d_measurement,
    })
}

/// Re-expression of a feature in a new anchor frame. `d_feature` columns
/// follow the old feature (alpha, beta, rho).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reanchor {
    pub feature: Vector3<f64>,
    pub d_old_anchor_position: Matrix3<f64>,
    pub d_old_anchor_theta: Matrix3<f64>,
    pub d_new_anchor_position: Matrix3<f64>,
    pub d_new_anchor_theta: Matrix3<f64>,
    pub d_feature: Matrix3<f64>,
}

pub fn reanchor(
    old_anchor: &Pose,
    new_anchor: &Pose,
    f: &InverseDepthFeature,
) -> Result<Reanchor, FilterError> {
    let sp = scaled_point(new_anchor, old_anchor, f);
    let g = sp.g;
    if !(g.z > 0.0) {
        return Err(FilterError::BehindCamera);
    }
    let j = projection_jacobian(&g);
    // rho' = rho / g_z
    let drho_dg = RowVector3::new(0.0, 0.0, -f.rho / (g.z * g.z));
    let jac = |dg: &Matrix3<f64>| {
        let mut out = Matrix3::zeros();
        out.fixed_view_mut::<2, 3>(0, 0).copy_from(&(j * dg));
        out.fixed_view_mut::<1, 3>(2, 0).copy_from(&(drho_dg * dg));
        out
    };
    let mut d_feature = jac(&sp.d_feature);
    d_feature[(2, 2)] += 1.0 / g.z;
    Ok(Reanchor {
        feature: Vector3::new(g.x / g.z, g.y / g.z, f.rho / g.z),
        d_old_anchor_position: jac(&sp.d_anchor_position),
        d_old_anchor_theta: jac(&sp.d_anchor_theta),
        d_new_anchor_position: jac(&sp.d_position),
        d_new_anchor_theta: jac(&sp.d_theta),
        d_feature,
    })
}
