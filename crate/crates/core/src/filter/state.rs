//! Filter state vector, its error-state layout and the covariance wrapper.
//!
//! Error-state ordering: `[dp, dv, dtheta, dbg, dba]` for the inertial block,
//! then `[dp, dtheta]` per window clone (oldest first), then
//! `[dalpha, dbeta, drho]` per feature. Attitude errors are local:
//! `R_true = R Exp(dtheta)` with `R` the body-to-world rotation.

use nalgebra::{DMatrix, DVector, SymmetricEigen, UnitQuaternion, Vector3};

use super::FilterError;
use crate::geometry::{InverseDepthFeature, Pose};

pub const IMU_DIM: usize = 15;
pub const CLONE_DIM: usize = 6;
pub const FEATURE_DIM: usize = 3;

/// Offsets inside the inertial error block.
pub const DP: usize = 0;
pub const DV: usize = 3;
pub const DTHETA: usize = 6;
pub const DBG: usize = 9;
pub const DBA: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuState {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    /// World-to-body rotation.
    pub orientation: UnitQuaternion<f64>,
    pub gyro_bias: Vector3<f64>,
    pub accel_bias: Vector3<f64>,
}

impl ImuState {
    pub fn pose(&self) -> Pose {
        Pose::new(self.position, self.orientation)
    }
}

/// Camera pose cloned into the sliding window at a camera frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseClone {
    pub frame_index: usize,
    pub pose: Pose,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlamFeature {
    pub id: u64,
    pub param: InverseDepthFeature,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub imu: ImuState,
    pub clones: Vec<PoseClone>,
    pub features: Vec<SlamFeature>,
}

/// Applies a local attitude error to a world-to-body quaternion.
pub fn perturb_orientation(q: &UnitQuaternion<f64>, dtheta: &Vector3<f64>) -> UnitQuaternion<f64> {
    UnitQuaternion::from_scaled_axis(-dtheta) * q
}

impl FilterState {
    pub fn new(imu: ImuState) -> Self {
        Self {
            imu,
            clones: Vec::new(),
            features: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        IMU_DIM + CLONE_DIM * self.clones.len() + FEATURE_DIM * self.features.len()
    }

    pub fn clone_offset(&self, slot: usize) -> usize {
        IMU_DIM + CLONE_DIM * slot
    }

    pub fn feature_offset(&self, slot: usize) -> usize {
        IMU_DIM + CLONE_DIM * self.clones.len() + FEATURE_DIM * slot
    }

    pub fn clone_slot(&self, frame_index: usize) -> Option<usize> {
        self.clones
            .iter()
            .position(|c| c.frame_index == frame_index)
    }

    pub fn feature_slot(&self, id: u64) -> Option<usize> {
        self.features.iter().position(|f| f.id == id)
    }

    /// Anchor clone slot of feature `slot`.
    pub fn anchor_slot(&self, slot: usize) -> Result<usize, FilterError> {
        let anchor = self.features[slot].param.anchor_index;
        self.clone_slot(anchor).ok_or(FilterError::MissingAnchor {
            feature: self.features[slot].id,
            anchor,
        })
    }

    /// Adds an error-state correction.
    pub fn boxplus(&mut self, dx: &DVector<f64>) {
        debug_assert_eq!(dx.len(), self.dim());
        let seg = |o: usize| Vector3::new(dx[o], dx[o + 1], dx[o + 2]);
        self.imu.position += seg(DP);
        self.imu.velocity += seg(DV);
        self.imu.orientation = perturb_orientation(&self.imu.orientation, &seg(DTHETA));
        self.imu.gyro_bias += seg(DBG);
        self.imu.accel_bias += seg(DBA);
        for slot in 0..self.clones.len() {
            let o = self.clone_offset(slot);
            let c = &mut self.clones[slot].pose;
            c.position += seg(o);
            c.orientation = perturb_orientation(&c.orientation, &seg(o + 3));
        }
        for slot in 0..self.features.len() {
            let o = self.feature_offset(slot);
            let f = &mut self.features[slot].param;
            f.alpha += dx[o];
            f.beta += dx[o + 1];
            f.rho += dx[o + 2];
        }
    }

    pub fn is_finite(&self) -> bool {
        let v3 = |v: &Vector3<f64>| v.iter().all(|x| x.is_finite());
        v3(&self.imu.position)
            && v3(&self.imu.velocity)
            && self.imu.orientation.coords.iter().all(|x| x.is_finite())
            && v3(&self.imu.gyro_bias)
            && v3(&self.imu.accel_bias)
            && self.clones.iter().all(|c| v3(&c.pose.position))
            && self.features.iter().all(|f| {
                f.param.alpha.is_finite() && f.param.beta.is_finite() && f.param.rho.is_finite()
            })
    }
}

/// Error-state covariance. Kept symmetric by construction after each update.
#[derive(Debug, Clone, PartialEq)]
pub struct Covariance(pub DMatrix<f64>);

impl Covariance {
    pub fn zeros(n: usize) -> Self {
        Self(DMatrix::zeros(n, n))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn symmetrize(&mut self) {
        let t = self.0.transpose();
        self.0 = (&self.0 + t) * 0.5;
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn max_asymmetry(&self) -> f64 {
        (&self.0 - self.0.transpose()).abs().max()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        SymmetricEigen::new(self.0.clone()).eigenvalues.min()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    /// Removes the rows and columns `[start, start + len)`.
    pub fn remove_block(&mut self, start: usize, len: usize) {
        let m = std::mem::replace(&mut self.0, DMatrix::zeros(0, 0));
        self.0 = m.remove_rows(start, len).remove_columns(start, len);
    }

    /// Appends `k` states whose covariance is `jpj` and cross-covariance with
    /// the existing states is `cross` (`k x n`).
    pub fn augment(&mut self, cross: &DMatrix<f64>, jpj: &DMatrix<f64>) {
        let n = self.dim();
        let k = jpj.nrows();
        let mut out = DMatrix::zeros(n + k, n + k);
        out.view_mut((0, 0), (n, n)).copy_from(&self.0);
        out.view_mut((n, 0), (k, n)).copy_from(cross);
        out.view_mut((0, n), (n, k)).copy_from(&cross.transpose());
        out.view_mut((n, n), (k, k)).copy_from(jpj);
        self.0 = out;
    }

    /// Inserts `k` new states at `at`, shifting later indices.
    pub fn insert(&mut self, at: usize, cross: &DMatrix<f64>, jpj: &DMatrix<f64>) {
        self.augment(cross, jpj);
        let n = self.dim();
        let k = jpj.nrows();
        if at + k == n {
            return;
        }
        let perm: Vec<usize> = (0..at).chain(n - k..n).chain(at..n - k).collect();
        let src = std::mem::replace(&mut self.0, DMatrix::zeros(0, 0));
        self.0 = DMatrix::from_fn(n, n, |i, j| src[(perm[i], perm[j])]);
    }
}
