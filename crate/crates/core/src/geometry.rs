//! Frames, rotations, pinhole projection and the anchored inverse-depth
//! feature parameterization.
//!
//! Conventions used throughout the crate:
//! - World frame is z-up; elevations are world z.
//! - A [`Pose`] orientation is the Hamilton quaternion whose rotation matrix
//!   `C` maps world coordinates into body coordinates: `p_b = C (p_w - p)`.
//! - The camera frame coincides with the body frame: z forward (optical
//!   axis), x right, y down. The laser range finder boresight is camera z.

use nalgebra::{Matrix3, Quaternion, Rotation3, UnitQuaternion, Vector2, Vector3};
use thiserror::Error;

/// Quaternions whose norm deviates from one by more than this are
/// renormalized and reported as such.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum GeometryError {
    #[error("point is behind the camera (z = {0})")]
    BehindCamera(f64),
    #[error("inverse depth must be positive (rho = {0})")]
    DegenerateDepth(f64),
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(&'static str),
}

/// Whether [`quat_to_rotation`] had to renormalize its input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    Unit,
    Renormalized,
}

/// Rotation matrix of a Hamilton quaternion.
///
/// Inputs farther than [`UNIT_NORM_TOLERANCE`] from unit norm are normalized
/// first and flagged.
pub fn quat_to_rotation(q: &Quaternion<f64>) -> (Matrix3<f64>, Normalization) {
    let norm = q.norm();
    let flag = if (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
        Normalization::Renormalized
    } else {
        Normalization::Unit
    };
    let unit = UnitQuaternion::from_quaternion(*q);
    (*unit.to_rotation_matrix().matrix(), flag)
}

/// Skew-symmetric cross-product matrix: `skew(a) * b == a.cross(&b)`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// SO(3) exponential map of a rotation vector.
pub fn exp_so3(omega: &Vector3<f64>) -> Matrix3<f64> {
    *Rotation3::new(*omega).matrix()
}

/// SO(3) logarithm: rotation vector of a rotation matrix. Accurate for
/// small angles, valid below pi.
pub fn log_so3(r: &Matrix3<f64>) -> Vector3<f64> {
    let v = 0.5
        * Vector3::new(
            r[(2, 1)] - r[(1, 2)],
            r[(0, 2)] - r[(2, 0)],
            r[(1, 0)] - r[(0, 1)],
        );
    let s = v.norm();
    let c = 0.5 * (r.trace() - 1.0);
    let angle = s.atan2(c);
    if s < 1e-300 {
        return v;
    }
    v * (angle / s)
}

/// Position and world-to-body orientation of a rigid body (camera/IMU).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
}

impl Pose {
    pub fn new(position: Vector3<f64>, orientation: UnitQuaternion<f64>) -> Self {
        Self {
            position,
            orientation,
        }
    }

    /// Camera looking straight down (optical axis along world -z), with the
    /// image x axis rotated by `yaw` radians about world z.
    pub fn nadir(position: Vector3<f64>, yaw: f64) -> Self {
        let body_to_world = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw)
            * UnitQuaternion::from_axis_angle(&Vector3::x_axis(), std::f64::consts::PI);
        Self::new(position, body_to_world.inverse())
    }

    /// `C`: maps world vectors into body coordinates.
    pub fn world_to_body(&self) -> Matrix3<f64> {
        *self.orientation.to_rotation_matrix().matrix()
    }

    /// `C^T`: maps body vectors into world coordinates.
    pub fn body_to_world(&self) -> Matrix3<f64> {
        self.world_to_body().transpose()
    }

    pub fn to_body(&self, point_world: &Vector3<f64>) -> Vector3<f64> {
        self.world_to_body() * (point_world - self.position)
    }

    /// Unit optical axis expressed in the world frame.
    pub fn boresight_world(&self) -> Vector3<f64> {
        self.body_to_world() * Vector3::z()
    }
}

/// Pinhole projection onto the normalized image plane `z = 1`.
pub fn project_normalized(point_camera: &Vector3<f64>) -> Result<Vector2<f64>, GeometryError> {
    if point_camera.z <= 0.0 {
        return Err(GeometryError::BehindCamera(point_camera.z));
    }
    Ok(Vector2::new(
        point_camera.x / point_camera.z,
        point_camera.y / point_camera.z,
    ))
}

/// Landmark expressed as normalized image coordinates plus inverse depth in
/// the frame of an anchor camera.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InverseDepthFeature {
    pub alpha: f64,
    pub beta: f64,
    pub rho: f64,
    /// Frame index of the anchor camera clone.
    pub anchor_index: usize,
    pub is_range_feature: bool,
}

impl InverseDepthFeature {
    /// Bearing `[alpha, beta, 1]` in the anchor frame.
    pub fn bearing(&self) -> Vector3<f64> {
        Vector3::new(self.alpha, self.beta, 1.0)
    }
}

/// `p_w = p_a + (1/rho) C_a^T [alpha, beta, 1]^T`.
pub fn inverse_depth_to_world(
    anchor: &Pose,
    feature: &InverseDepthFeature,
) -> Result<Vector3<f64>, GeometryError> {
    if !(feature.rho > 0.0) {
        return Err(GeometryError::DegenerateDepth(feature.rho));
    }
    Ok(anchor.position + anchor.body_to_world() * feature.bearing() / feature.rho)
}

/// Inverse of [`inverse_depth_to_world`]: parameterize a world point in the
/// frame of `anchor`.
pub fn world_to_inverse_depth(
    anchor: &Pose,
    anchor_index: usize,
    point_world: &Vector3<f64>,
) -> Result<InverseDepthFeature, GeometryError> {
    let pc = anchor.to_body(point_world);
    let uv = project_normalized(&pc)?;
    Ok(InverseDepthFeature {
        alpha: uv.x,
        beta: uv.y,
        rho: 1.0 / pc.z,
        anchor_index,
        is_range_feature: false,
    })
}

/// Pinhole intrinsics derived from a horizontal field of view and image size.
/// Square pixels; principal point at the image center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub horizontal_fov_deg: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(
        horizontal_fov_deg: f64,
        width: usize,
        height: usize,
    ) -> Result<Self, GeometryError> {
        if !(horizontal_fov_deg > 0.0 && horizontal_fov_deg < 180.0) {
            return Err(GeometryError::InvalidIntrinsics(
                "fov must lie in (0, 180) degrees",
            ));
        }
        if width == 0 || height == 0 {
            return Err(GeometryError::InvalidIntrinsics(
                "image dimensions must be positive",
            ));
        }
        Ok(Self {
            horizontal_fov_deg,
            width,
            height,
        })
    }

    /// Focal length in pixels. Pixel centers sit at integer coordinates, so
    /// the outermost pixel centers are half a pixel inside the FOV edge.
    pub fn focal(&self) -> f64 {
        0.5 * self.width as f64 / (0.5 * self.horizontal_fov_deg.to_radians()).tan()
    }

    pub fn principal_point(&self) -> Vector2<f64> {
        Vector2::new(
            (self.width as f64 - 1.0) / 2.0,
            (self.height as f64 - 1.0) / 2.0,
        )
    }

    pub fn pixel_to_normalized(&self, px: &Vector2<f64>) -> Vector2<f64> {
        (px - self.principal_point()) / self.focal()
    }

    pub fn normalized_to_pixel(&self, uv: &Vector2<f64>) -> Vector2<f64> {
        uv * self.focal() + self.principal_point()
    }

    /// Half-extent of the normalized image plane along x and y.
    pub fn normalized_half_extent(&self) -> Vector2<f64> {
        let f = self.focal();
        Vector2::new(0.5 * self.width as f64 / f, 0.5 * self.height as f64 / f)
    }

    pub fn contains_pixel(&self, px: &Vector2<f64>) -> bool {
        px.x >= -0.5
            && px.y >= -0.5
            && px.x <= self.width as f64 - 0.5
            && px.y <= self.height as f64 - 0.5
    }
}
