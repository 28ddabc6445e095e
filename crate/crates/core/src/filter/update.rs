//! EKF measurement updates: the visual SLAM update and the range-facet
//! baseline update.

use delaunator::{triangulate, Point};
use nalgebra::{DMatrix, DVector, Matrix2, RowVector3, Vector2};

use super::measurement::{camera_point, facet_range, slam_prediction, ScaledPoint};
use super::state::{Covariance, FilterState, DP, DTHETA};
use super::FilterError;
use crate::frontend::FeatureMatch;

/// Joseph-form EKF update with residual `r = z - h(x)`.
pub fn ekf_update(
    state: &mut FilterState,
    cov: &mut Covariance,
    residual: &DVector<f64>,
    h: &DMatrix<f64>,
    noise: &DMatrix<f64>,
) -> Result<(), FilterError> {
    let n = cov.dim();
    let ph_t = &cov.0 * h.transpose();
    let s = h * &ph_t + noise;
    let chol = s.cholesky().ok_or(FilterError::NotPositiveDefinite)?;
    let k = chol.solve(&ph_t.transpose()).transpose();
    let dx = &k * residual;
    state.boxplus(&dx);
    let ikh = DMatrix::identity(n, n) - &k * h;
    cov.0 = &ikh * &cov.0 * ikh.transpose() + &k * noise * k.transpose();
    cov.symmetrize();
    if !state.is_finite() || !cov.is_finite() {
        return Err(FilterError::Update("non-finite result".into()));
    }
    Ok(())
}

/// Writes the Jacobian blocks of feature `slot` into rows
/// `[row, row + rows)` of `h`, given blocks w.r.t. the current IMU pose,
/// the anchor clone and the feature parameters.
fn scatter<const R: usize>(
    state: &FilterState,
    slot: usize,
    h: &mut DMatrix<f64>,
    row: usize,
    blocks: [&nalgebra::SMatrix<f64, R, 3>; 5],
) -> Result<(), FilterError> {
    let anchor = state.anchor_slot(slot)?;
    let ao = state.clone_offset(anchor);
    let fo = state.feature_offset(slot);
    let [d_p, d_theta, d_ap, d_atheta, d_f] = blocks;
    let mut add = |col: usize, b: &nalgebra::SMatrix<f64, R, 3>| {
        let mut v = h.view_mut((row, col), (R, 3));
        v += b;
    };
    add(DP, d_p);
    add(DTHETA, d_theta);
    add(ao, d_ap);
    add(ao + 3, d_atheta);
    add(fo, d_f);
    Ok(())
}

/// Predicted measurement and full-state Jacobian row block of one feature.
pub fn slam_jacobian(
    state: &FilterState,
    slot: usize,
) -> Result<(Vector2<f64>, DMatrix<f64>), FilterError> {
    let anchor = state.clones[state.anchor_slot(slot)?].pose;
    let pred = slam_prediction(&state.imu.pose(), &anchor, &state.features[slot].param)?;
    let mut h = DMatrix::zeros(2, state.dim());
    scatter::<2>(
        state,
        slot,
        &mut h,
        0,
        [
            &pred.d_position,
            &pred.d_theta,
            &pred.d_anchor_position,
            &pred.d_anchor_theta,
            &pred.d_feature,
        ],
    )?;
    Ok((pred.z, h))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SlamUpdateStats {
    pub used: usize,
    pub gated: Vec<u64>,
    /// Features whose prediction failed (behind the camera).
    pub invalid: Vec<u64>,
}

/// Batch EKF update with every match that binds a feature in the state.
/// Each feature is first tested individually against `gate` (squared
/// Mahalanobis distance, 2 dof) when one is given.
pub fn slam_update(
    state: &mut FilterState,
    cov: &mut Covariance,
    matches: &[FeatureMatch],
    sigma_v: f64,
    gate: Option<f64>,
) -> Result<SlamUpdateStats, FilterError> {
    let mut stats = SlamUpdateStats::default();
    let r2 = Matrix2::identity() * sigma_v * sigma_v;
    let mut rows: Vec<(Vector2<f64>, DMatrix<f64>)> = Vec::new();
    for m in matches {
        let Some(slot) = state.feature_slot(m.feature_id) else {
            continue;
        };
        let (z_hat, h) = match slam_jacobian(state, slot) {
            Ok(v) => v,
            Err(FilterError::BehindCamera) => {
                stats.invalid.push(m.feature_id);
                continue;
            }
            Err(e) => return Err(e),
        };
        let r = m.normalized - z_hat;
        if let Some(threshold) = gate {
            let s = &h * &cov.0 * h.transpose();
            let s = Matrix2::new(s[(0, 0)], s[(0, 1)], s[(1, 0)], s[(1, 1)]) + r2;
            let d2 = s
                .try_inverse()
                .map(|si| (r.transpose() * si * r)[0])
                .unwrap_or(f64::INFINITY);
            if !(d2 <= threshold) {
                stats.gated.push(m.feature_id);
                continue;
            }
        }
        rows.push((r, h));
    }
    if rows.is_empty() {
        return Ok(stats);
    }
    let n = state.dim();
    let k = rows.len();
    let mut h = DMatrix::zeros(2 * k, n);
    let mut res = DVector::zeros(2 * k);
    for (i, (r, hi)) in rows.iter().enumerate() {
        h.view_mut((2 * i, 0), (2, n)).copy_from(hi);
        res.fixed_rows_mut::<2>(2 * i).copy_from(r);
    }
    let noise = DMatrix::identity(2 * k, 2 * k) * (sigma_v * sigma_v);
    ekf_update(state, cov, &res, &h, &noise)?;
    stats.used = k;
    Ok(stats)
}

/// Predicted boresight range from the facet under the optical axis and its
/// full-state Jacobian, plus the feature ids of the facet vertices.
pub fn facet_prediction(
    state: &FilterState,
) -> Result<Option<(f64, DMatrix<f64>, [u64; 3])>, FilterError> {
    let cam = state.imu.pose();
    let mut slots = Vec::new();
    let mut points: Vec<ScaledPoint> = Vec::new();
    let mut uv = Vec::new();
    for slot in 0..state.features.len() {
        let anchor = state.clones[state.anchor_slot(slot)?].pose;
        let Ok(pc) = camera_point(&cam, &anchor, &state.features[slot].param) else {
            continue;
        };
        if !(pc.g.z > 0.0) {
            continue;
        }
        uv.push(Point {
            x: pc.g.x / pc.g.z,
            y: pc.g.y / pc.g.z,
        });
        points.push(pc);
        slots.push(slot);
    }
    if slots.len() < 3 {
        return Ok(None);
    }
    let tri = triangulate(&uv);
    let contains = |a: &Point, b: &Point, c: &Point| {
        let side = |p: &Point, q: &Point| (q.x - p.x) * (0.0 - p.y) - (q.y - p.y) * (0.0 - p.x);
        let (s1, s2, s3) = (side(a, b), side(b, c), side(c, a));
        (s1 >= 0.0 && s2 >= 0.0 && s3 >= 0.0) || (s1 <= 0.0 && s2 <= 0.0 && s3 <= 0.0)
    };
    let Some(t) = tri
        .triangles
        .chunks_exact(3)
        .find(|t| contains(&uv[t[0]], &uv[t[1]], &uv[t[2]]))
    else {
        return Ok(None);
    };
    let idx = [t[0], t[1], t[2]];
    let verts = [points[idx[0]].g, points[idx[1]].g, points[idx[2]].g];
    let (range, grads) = match facet_range(&verts) {
        Ok(v) => v,
        Err(FilterError::DegenerateFacet) => return Ok(None),
        Err(e) => return Err(e),
    };
    let mut h = DMatrix::zeros(1, state.dim());
    for (k, &i) in idx.iter().enumerate() {
        let pc = &points[i];
        let gr: &RowVector3<f64> = &grads[k];
        let blocks = [
            gr * pc.d_position,
            gr * pc.d_theta,
            gr * pc.d_anchor_position,
            gr * pc.d_anchor_theta,
            gr * pc.d_feature,
        ];
        scatter::<1>(
            state,
            slots[i],
            &mut h,
            0,
            [&blocks[0], &blocks[1], &blocks[2], &blocks[3], &blocks[4]],
        )?;
    }
    let ids = idx.map(|i| state.features[slots[i]].id);
    Ok(Some((range, h, ids)))
}

/// Range-facet baseline update. Returns the facet vertex ids, or `None`
/// when the boresight is outside the triangulated features.
pub fn facet_range_update(
    state: &mut FilterState,
    cov: &mut Covariance,
    lrf_range: f64,
    sigma_range: f64,
) -> Result<Option<[u64; 3]>, FilterError> {
    let Some((predicted, h, ids)) = facet_prediction(state)? else {
        return Ok(None);
    };
    let res = DVector::from_element(1, lrf_range - predicted);
    let noise = DMatrix::from_element(1, 1, sigma_range * sigma_range);
    ekf_update(state, cov, &res, &h, &noise)?;
    Ok(Some(ids))
}
