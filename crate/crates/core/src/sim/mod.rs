//! Synthetic scenario: circular trajectory inside a cylinder of landmarks.

pub mod landmarks;
pub mod metrics;
pub mod montecarlo;
pub mod synth;
pub mod trajectory;

use std::f64::consts::FRAC_PI_4;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::camera::CameraModel;
use crate::ekf::NoiseConfig;
use crate::error::{Error, Result};
use crate::lie::{exp_so3, Pose};
use crate::state::default_gravity;

pub use landmarks::generate_landmarks;
pub use metrics::{aggregate, nees, step_error, Aggregate, RunMetrics, StepError};
pub use montecarlo::{run_filter, run_monte_carlo, simulate_dataset, Dataset, FilterKind, McConfig, McResult};
pub use synth::{synthesize_camera, synthesize_imu, Frame, ImuStream};
pub use trajectory::{TruthSample, Trajectory};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub radius: f64,
    pub angular_rate: f64,
    pub vertical_amplitude: f64,
    pub vertical_frequency: f64,
    /// Peak roll and pitch (rad).
    pub tilt_amplitude: f64,
    pub duration: f64,
    pub imu_rate: f64,
    pub camera_rate: f64,
    pub landmark_radius: f64,
    pub landmark_height: f64,
    pub landmark_count: usize,
    pub noise: NoiseConfig,
    pub gravity: Vector3<f64>,
    pub camera: CameraModel,
    pub seed: u64,
}

/// Camera looking outward from the circle, turned 45 degrees toward the
/// direction of travel and mounted slightly off the IMU origin.
pub fn outward_camera() -> CameraModel {
    // columns: camera x, y, z axes in the body frame, optical axis along -y
    let radial = Matrix3::new(-1.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, -1.0, 0.0);
    let rotation = exp_so3(&Vector3::new(0.0, 0.0, FRAC_PI_4)) * radial;
    CameraModel::default().with_extrinsics(Pose::new(rotation, Vector3::new(0.02, -0.05, 0.01)))
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            radius: 5.0,
            angular_rate: 0.6,
            vertical_amplitude: 0.5,
            vertical_frequency: 0.2,
            tilt_amplitude: 0.15,
            duration: 60.0,
            imu_rate: 200.0,
            camera_rate: 20.0,
            landmark_radius: 6.5,
            landmark_height: 4.0,
            landmark_count: 675,
            noise: NoiseConfig::default(),
            gravity: default_gravity(),
            camera: outward_camera(),
            seed: 1,
        }
    }
}

impl ScenarioConfig {
    /// Two seconds of the default circle with a 100 Hz camera, used by the
    /// invariance experiments.
    pub fn lab() -> Self {
        Self {
            duration: 2.0,
            camera_rate: 100.0,
            ..Self::default()
        }
    }

    pub fn imu_per_frame(&self) -> usize {
        (self.imu_rate / self.camera_rate).round() as usize
    }

    /// Number of camera frames, including the one at `t = 0`.
    pub fn frame_count(&self) -> usize {
        (self.duration * self.camera_rate + 1e-9).floor() as usize + 1
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("radius", self.radius),
            ("duration", self.duration),
            ("imu_rate", self.imu_rate),
            ("camera_rate", self.camera_rate),
            ("landmark_radius", self.landmark_radius),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if self.landmark_height < 0.0 {
            return Err(Error::InvalidConfig("landmark_height must be >= 0".into()));
        }
        let ratio = self.imu_rate / self.camera_rate;
        if (ratio - ratio.round()).abs() > 1e-9 || ratio.round() < 1.0 {
            return Err(Error::InvalidConfig("camera_rate must divide imu_rate".into()));
        }
        self.noise.validate()?;
        self.camera.validate()
    }
}
