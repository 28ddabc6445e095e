//! Sliding window of camera clones and feature re-anchoring.

use nalgebra::DMatrix;

use super::init::remove_feature;
use super::measurement::reanchor;
use super::state::{Covariance, FilterState, PoseClone, CLONE_DIM, DP, DTHETA};
use super::FilterError;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct WindowEvent {
    pub evicted_frame: Option<usize>,
    pub reanchored: Vec<u64>,
    /// Features dropped because they could not be re-expressed in the new anchor.
    pub dropped: Vec<u64>,
}

/// Clones the current IMU pose for `frame_index` and evicts the oldest clone
/// once more than `window_size` are held.
pub fn manage_window(
    state: &mut FilterState,
    cov: &mut Covariance,
    frame_index: usize,
    window_size: usize,
) -> Result<WindowEvent, FilterError> {
    if window_size == 0 {
        return Err(FilterError::Config("window size must be positive".into()));
    }
    let n = state.dim();
    let at = state.clone_offset(state.clones.len());
    let mut j = DMatrix::zeros(CLONE_DIM, n);
    for i in 0..3 {
        j[(i, DP + i)] = 1.0;
        j[(3 + i, DTHETA + i)] = 1.0;
    }
    let cross = &j * &cov.0;
    let jpj = &cross * j.transpose();
    cov.insert(at, &cross, &jpj);
    state.clones.push(PoseClone {
        frame_index,
        pose: state.imu.pose(),
    });

    let mut event = WindowEvent::default();
    while state.clones.len() > window_size {
        let old = state.clones[0];
        let newest = state.clones.len() - 1;
        let mut slot = 0;
        while slot < state.features.len() {
            if state.features[slot].param.anchor_index != old.frame_index {
                slot += 1;
                continue;
            }
            let id = state.features[slot].id;
            if reanchor_feature(state, cov, slot, 0, newest).is_ok() {
                event.reanchored.push(id);
                slot += 1;
            } else {
                remove_feature(state, cov, slot);
                event.dropped.push(id);
            }
        }
        cov.remove_block(state.clone_offset(0), CLONE_DIM);
        state.clones.remove(0);
        event.evicted_frame = Some(old.frame_index);
    }
    Ok(event)
}

/// Re-expresses feature `slot` from clone `from` to clone `to`, applying
/// `J P J^T` with `J` the identity except on the feature rows.
pub fn reanchor_feature(
    state: &mut FilterState,
    cov: &mut Covariance,
    slot: usize,
    from: usize,
    to: usize,
) -> Result<(), FilterError> {
    let f = state.features[slot].param;
    let r = reanchor(&state.clones[from].pose, &state.clones[to].pose, &f)?;
    if !(r.feature.z > 0.0) {
        return Err(FilterError::NonPositiveDepth);
    }
    let n = state.dim();
    let fo = state.feature_offset(slot);
    let (oa, na) = (state.clone_offset(from), state.clone_offset(to));
    // Row block of J for the feature; other rows are identity.
    let mut jf = DMatrix::zeros(3, n);
    jf.view_mut((0, oa), (3, 3))
        .copy_from(&r.d_old_anchor_position);
    jf.view_mut((0, oa + 3), (3, 3))
        .copy_from(&r.d_old_anchor_theta);
    jf.view_mut((0, na), (3, 3))
        .copy_from(&r.d_new_anchor_position);
    jf.view_mut((0, na + 3), (3, 3))
        .copy_from(&r.d_new_anchor_theta);
    jf.view_mut((0, fo), (3, 3)).copy_from(&r.d_feature);

    let row = &jf * &cov.0;
    let diag = &row * jf.transpose();
    cov.0.view_mut((fo, 0), (3, n)).copy_from(&row);
    cov.0.view_mut((0, fo), (n, 3)).copy_from(&row.transpose());
    cov.0.view_mut((fo, fo), (3, 3)).copy_from(&diag);
    cov.symmetrize();

    let p = &mut state.features[slot].param;
    p.alpha = r.feature.x;
    p.beta = r.feature.y;
    p.rho = r.feature.z;
    p.anchor_index = state.clones[to].frame_index;
    Ok(())
}
