//! Analytic ground-truth motion.

use std::f64::consts::{FRAC_PI_2, TAU};

use nalgebra::{Matrix3, Vector3};

use super::ScenarioConfig;
use crate::state::ImuState;

const ROLL_FREQUENCY: f64 = 0.25;
const PITCH_FREQUENCY: f64 = 0.15;

/// True kinematics at one instant. `gyro` and `accel` are the noise-free
/// body-frame IMU readings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TruthSample {
    pub t: f64,
    pub rotation: Matrix3<f64>,
    pub velocity: Vector3<f64>,
    pub position: Vector3<f64>,
    pub gyro: Vector3<f64>,
    pub accel: Vector3<f64>,
}

impl TruthSample {
    pub fn imu_state(&self, gyro_bias: Vector3<f64>, accel_bias: Vector3<f64>) -> ImuState {
        ImuState {
            rotation: self.rotation,
            velocity: self.velocity,
            position: self.position,
            gyro_bias,
            accel_bias,
        }
    }
}

/// Circle of radius `r` at angular rate `w` with a sinusoidal altitude and
/// sinusoidal roll/pitch. The body x axis points along the direction of
/// travel, y toward the circle center.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Trajectory {
    pub radius: f64,
    pub angular_rate: f64,
    pub vertical_amplitude: f64,
    pub vertical_frequency: f64,
    pub tilt_amplitude: f64,
    pub gravity: Vector3<f64>,
}

fn rot_x(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

fn rot_y(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

fn rot_z(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// `(value, first derivative, second derivative)` of `amp * sin(2 pi f t + phase)`.
fn sinusoid(amp: f64, freq: f64, phase: f64, t: f64) -> (f64, f64, f64) {
    let w = TAU * freq;
    let (s, c) = (w * t + phase).sin_cos();
    (amp * s, amp * w * c, -amp * w * w * s)
}

impl Trajectory {
    pub fn from_config(cfg: &ScenarioConfig) -> Self {
        Self {
            radius: cfg.radius,
            angular_rate: cfg.angular_rate,
            vertical_amplitude: cfg.vertical_amplitude,
            vertical_frequency: cfg.vertical_frequency,
            tilt_amplitude: cfg.tilt_amplitude,
            gravity: cfg.gravity,
        }
    }

    pub fn sample(&self, t: f64) -> TruthSample {
        let (r, w) = (self.radius, self.angular_rate);
        let phi = w * t;
        let (s, c) = phi.sin_cos();
        let (z, dz, ddz) = sinusoid(self.vertical_amplitude, self.vertical_frequency, 0.0, t);
        let position = Vector3::new(r * c, r * s, z);
        let velocity = Vector3::new(-r * w * s, r * w * c, dz);
        let accel_world = Vector3::new(-r * w * w * c, -r * w * w * s, ddz);

        let yaw = phi + FRAC_PI_2;
        let (roll, droll, _) = sinusoid(self.tilt_amplitude, ROLL_FREQUENCY, 0.0, t);
        let (pitch, dpitch, _) = sinusoid(self.tilt_amplitude, PITCH_FREQUENCY, 1.0, t);
        let rotation = rot_z(yaw) * rot_y(pitch) * rot_x(roll);

        let (sr, cr) = roll.sin_cos();
        let (sp, cp) = pitch.sin_cos();
        let gyro = Vector3::new(
            droll - w * sp,
            dpitch * cr + w * cp * sr,
            -dpitch * sr + w * cp * cr,
        );
        let accel = rotation.transpose() * (accel_world - self.gravity);
        TruthSample {
            t,
            rotation,
            velocity,
            position,
            gyro,
            accel,
        }
    }
}
