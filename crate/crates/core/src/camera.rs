//! Pinhole camera rigidly mounted on the IMU.

use nalgebra::{Matrix2x3, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lie::Pose;

/// One feature observation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub t: f64,
    pub landmark_id: usize,
    pub uv: Vector2<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: f64,
    pub height: f64,
    /// Camera pose expressed in the IMU frame (`x_imu = R x_cam + t`).
    pub camera_in_imu: Pose,
    /// Points closer than this along the optical axis are rejected.
    pub z_min: f64,
    /// Apply the half-angle cone gate in [`CameraModel::is_visible`].
    pub fov_check: bool,
    pub fov_half_angle: f64,
}

impl Default for CameraModel {
    fn default() -> Self {
        Self {
            fx: 460.0,
            fy: 460.0,
            cx: 376.0,
            cy: 240.0,
            width: 752.0,
            height: 480.0,
            camera_in_imu: Pose::identity(),
            z_min: 0.01,
            fov_check: true,
            fov_half_angle: std::f64::consts::FRAC_PI_4,
        }
    }
}

impl CameraModel {
    pub fn with_extrinsics(mut self, camera_in_imu: Pose) -> Self {
        self.camera_in_imu = camera_in_imu;
        self
    }

    /// Rotation taking IMU-frame vectors to the camera frame.
    pub fn rotation_imu_to_camera(&self) -> Matrix3<f64> {
        self.camera_in_imu.rotation.transpose()
    }

    /// Camera pose in the world given the IMU pose.
    pub fn camera_pose(&self, imu: &Pose) -> Pose {
        imu.compose(&self.camera_in_imu)
    }

    pub fn imu_to_camera(&self, f_imu: &Vector3<f64>) -> Vector3<f64> {
        self.rotation_imu_to_camera() * (f_imu - self.camera_in_imu.translation)
    }

    /// Pinhole projection of a camera-frame point.
    pub fn project(&self, p: &Vector3<f64>) -> Result<Vector2<f64>> {
        if p.z <= self.z_min {
            return Err(Error::BehindCamera(p.z));
        }
        Ok(Vector2::new(self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy))
    }

    pub fn projection_jacobian(&self, p: &Vector3<f64>) -> Matrix2x3<f64> {
        let iz = 1.0 / p.z;
        Matrix2x3::new(
            self.fx * iz,
            0.0,
            -self.fx * p.x * iz * iz,
            0.0,
            self.fy * iz,
            -self.fy * p.y * iz * iz,
        )
    }

    /// Projection of a point given in the IMU frame.
    pub fn project_imu(&self, f_imu: &Vector3<f64>) -> Result<Vector2<f64>> {
        self.project(&self.imu_to_camera(f_imu))
    }

    /// Derivative of [`CameraModel::project_imu`] with respect to the
    /// IMU-frame point.
    pub fn project_imu_jacobian(&self, f_imu: &Vector3<f64>) -> Matrix2x3<f64> {
        self.projection_jacobian(&self.imu_to_camera(f_imu)) * self.rotation_imu_to_camera()
    }

    /// Projects a world point seen from the given IMU pose.
    pub fn observe(&self, imu: &Pose, f_world: &Vector3<f64>) -> Result<Vector2<f64>> {
        self.project_imu(&(imu.rotation.transpose() * (f_world - imu.translation)))
    }

    /// Depth, frustum and cone checks on a camera-frame point.
    pub fn is_visible(&self, p: &Vector3<f64>) -> bool {
        if p.z <= self.z_min {
            return false;
        }
        if self.fov_check && p.xy().norm().atan2(p.z) > self.fov_half_angle {
            return false;
        }
        let uv = Vector2::new(self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy);
        (0.0..self.width).contains(&uv.x) && (0.0..self.height).contains(&uv.y)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::InvalidConfig("focal lengths must be positive".into()));
        }
        if !(self.width > 0.0 && self.height > 0.0) {
            return Err(Error::InvalidConfig("image size must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie::exp_so3;
    use crate::state::FD_STEP;

    #[test]
    fn optical_axis_and_offset_point() {
        let cam = CameraModel::default();
        assert_eq!(cam.project(&Vector3::new(0.0, 0.0, 1.0)).unwrap(), Vector2::new(376.0, 240.0));
        assert_eq!(cam.project(&Vector3::new(1.0, 0.0, 1.0)).unwrap(), Vector2::new(836.0, 240.0));
    }

    #[test]
    fn behind_camera_is_an_error() {
        let cam = CameraModel::default();
        assert!(matches!(cam.project(&Vector3::new(0.0, 0.0, 0.01)), Err(Error::BehindCamera(_))));
        assert!(cam.project(&Vector3::new(0.0, 0.0, -2.0)).is_err());
    }

    #[test]
    fn projection_jacobian_matches_finite_differences() {
        let cam = CameraModel::default().with_extrinsics(Pose::new(
            exp_so3(&Vector3::new(0.2, -0.1, 0.4)),
            Vector3::new(0.05, -0.02, 0.01),
        ));
        let f = Vector3::new(0.3, -0.4, 2.5);
        let analytic = cam.project_imu_jacobian(&f);
        for j in 0..3 {
            let mut d = Vector3::zeros();
            d[j] = FD_STEP;
            let col = (cam.project_imu(&(f + d)).unwrap() - cam.project_imu(&(f - d)).unwrap()) / (2.0 * FD_STEP);
            assert!((col - analytic.column(j)).amax() < 1e-6);
        }
    }

    #[test]
    fn visibility_gates() {
        let cam = CameraModel::default();
        assert!(cam.is_visible(&Vector3::new(0.0, 0.0, 2.0)));
        assert!(!cam.is_visible(&Vector3::new(0.0, 0.0, -2.0)));
        assert!(!cam.is_visible(&Vector3::new(5.0, 0.0, 1.0)));
        assert!(!cam.is_visible(&Vector3::new(0.0, 0.0, 0.005)));
    }

    #[test]
    fn observe_through_extrinsics() {
        let cam = CameraModel::default().with_extrinsics(Pose::new(Matrix3::identity(), Vector3::new(0.0, 0.0, -1.0)));
        let imu = Pose::new(Matrix3::identity(), Vector3::new(1.0, 2.0, 3.0));
        let uv = cam.observe(&imu, &Vector3::new(1.0, 2.0, 4.0)).unwrap();
        assert_eq!(uv, Vector2::new(376.0, 240.0));
    }
}
