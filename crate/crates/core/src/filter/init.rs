//! Feature initialization: planar depth prior and range-feature.

use nalgebra::{DMatrix, Matrix2, Matrix3};

use super::measurement::{planar_init, PlanePrior};
use super::state::{Covariance, FilterState, SlamFeature, FEATURE_DIM};
use super::FilterError;
use crate::frontend::FeatureMatch;
use crate::geometry::InverseDepthFeature;

/// How a range finder standard deviation becomes an inverse-depth one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RhoSigmaMapping {
    /// `sigma_rho = sigma_range / R^2`.
    FirstOrder,
    /// `sigma_rho = sigma_range`, taken verbatim.
    Literal,
}

impl RhoSigmaMapping {
    pub fn sigma_rho(self, sigma_range: f64, range: f64) -> f64 {
        match self {
            Self::FirstOrder => sigma_range / (range * range),
            Self::Literal => sigma_range,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanarInitParams {
    pub sigma_v: f64,
    /// Inverse-depth std as a fraction of the initial inverse depth.
    pub rho_sigma_ratio: f64,
    /// Used when the feature ray does not meet the plane.
    pub default_depth: f64,
    pub max_features: usize,
}

/// Adds a feature anchored at the newest clone, which must be the frame of
/// the match, with inverse depth from the ray-plane intersection.
pub fn init_slam_feature_planar(
    state: &mut FilterState,
    cov: &mut Covariance,
    m: &FeatureMatch,
    plane: PlanePrior,
    params: &PlanarInitParams,
) -> Result<(), FilterError> {
    if state.features.len() >= params.max_features {
        return Err(FilterError::BudgetFull);
    }
    let slot = state
        .clones
        .len()
        .checked_sub(1)
        .ok_or(FilterError::EmptyWindow)?;
    let anchor = state.clones[slot];
    if anchor.frame_index != m.frame_index {
        return Err(FilterError::MissingAnchor {
            feature: m.feature_id,
            anchor: m.frame_index,
        });
    }
    let n = state.dim();
    let ao = state.clone_offset(slot);
    let (feature, jx, jz) = match planar_init(&anchor.pose, &m.normalized, plane) {
        Some(init) => {
            let mut jx = DMatrix::zeros(FEATURE_DIM, n);
            jx.view_mut((0, ao), (3, 6)).copy_from(&init.d_anchor);
            (init.feature, jx, init.d_measurement)
        }
        None => {
            let mut jz = nalgebra::Matrix3x2::zeros();
            jz[(0, 0)] = 1.0;
            jz[(1, 1)] = 1.0;
            let f =
                nalgebra::Vector3::new(m.normalized.x, m.normalized.y, 1.0 / params.default_depth);
            (f, DMatrix::zeros(FEATURE_DIM, n), jz)
        }
    };
    let sigma_rho = params.rho_sigma_ratio * feature.z;
    let cross = &jx * &cov.0;
    let r = Matrix2::identity() * params.sigma_v * params.sigma_v;
    let mut pff = &cross * jx.transpose();
    let meas = jz * r * jz.transpose();
    pff += DMatrix::from_fn(3, 3, |i, j| meas[(i, j)]);
    pff[(2, 2)] += sigma_rho * sigma_rho;
    cov.augment(&cross, &pff);
    state.features.push(SlamFeature {
        id: m.feature_id,
        param: InverseDepthFeature {
            alpha: feature.x,
            beta: feature.y,
            rho: feature.z,
            anchor_index: anchor.frame_index,
            is_range_feature: false,
        },
    });
    Ok(())
}

/// Removes a feature and its covariance rows/columns.
pub fn remove_feature(state: &mut FilterState, cov: &mut Covariance, slot: usize) {
    let o = state.feature_offset(slot);
    cov.remove_block(o, FEATURE_DIM);
    state.features.remove(slot);
}

/// Slot of the feature with the largest inverse-depth variance.
pub fn most_uncertain_feature(state: &FilterState, cov: &Covariance) -> Option<usize> {
    (0..state.features.len()).max_by(|&a, &b| {
        let va = cov.0[(state.feature_offset(a) + 2, state.feature_offset(a) + 2)];
        let vb = cov.0[(state.feature_offset(b) + 2, state.feature_offset(b) + 2)];
        va.total_cmp(&vb)
    })
}

/// Adds a range-feature at the optical axis of the clone of `anchor_frame`
/// with `rho = 1 / lrf_range`. Evicts the most depth-uncertain feature when
/// the budget is full and returns its id.
#[allow(clippy::too_many_arguments)]
pub fn init_range_feature(
    state: &mut FilterState,
    cov: &mut Covariance,
    feature_id: u64,
    anchor_frame: usize,
    lrf_range: f64,
    sigma_rho: f64,
    sigma_v: f64,
    max_features: usize,
) -> Result<Option<u64>, FilterError> {
    if !(lrf_range > 0.0) || !lrf_range.is_finite() {
        return Err(FilterError::NonPositiveDepth);
    }
    if state.clone_slot(anchor_frame).is_none() {
        return Err(FilterError::MissingAnchor {
            feature: feature_id,
            anchor: anchor_frame,
        });
    }
    let mut evicted = None;
    while state.features.len() >= max_features {
        let slot = most_uncertain_feature(state, cov).ok_or(FilterError::BudgetFull)?;
        evicted = Some(state.features[slot].id);
        remove_feature(state, cov, slot);
    }
    let n = state.dim();
    let s2 = sigma_v * sigma_v;
    let pff = Matrix3::from_diagonal(&nalgebra::Vector3::new(s2, s2, sigma_rho * sigma_rho));
    cov.augment(
        &DMatrix::zeros(FEATURE_DIM, n),
        &DMatrix::from_fn(3, 3, |i, j| pff[(i, j)]),
    );
    state.features.push(SlamFeature {
        id: feature_id,
        param: InverseDepthFeature {
            alpha: 0.0,
            beta: 0.0,
            rho: 1.0 / lrf_range,
            anchor_index: anchor_frame,
            is_range_feature: true,
        },
    });
    Ok(evicted)
}
