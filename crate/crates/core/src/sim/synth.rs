//! Noisy IMU and camera measurements along a [`Trajectory`].

use nalgebra::{Vector2, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{ScenarioConfig, Trajectory, TruthSample};
use crate::camera::{CameraModel, Measurement};
use crate::ekf::ImuSample;
use crate::state::ImuState;

fn normal3(rng: &mut impl Rng) -> Vector3<f64> {
    Vector3::new(rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal))
}

/// IMU readings with the true state at every sample.
#[derive(Clone, Debug, PartialEq)]
pub struct ImuStream {
    pub samples: Vec<ImuSample>,
    pub truth: Vec<ImuState>,
}

/// Samples at `k / imu_rate` for `k = 0..=duration * imu_rate`. Biases start
/// at zero and random-walk; white noise is discretized at the sample rate.
pub fn synthesize_imu(traj: &Trajectory, cfg: &ScenarioConfig, rng: &mut impl Rng) -> ImuStream {
    let n = (cfg.duration * cfg.imu_rate + 1e-9).floor() as usize;
    let root = cfg.imu_rate.sqrt();
    let nz = &cfg.noise;
    let (sg, sa) = (nz.gyro_noise * root, nz.accel_noise * root);
    let (wg, wa) = (nz.gyro_walk / root, nz.accel_walk / root);
    let mut bg = Vector3::zeros();
    let mut ba = Vector3::zeros();
    let mut samples = Vec::with_capacity(n + 1);
    let mut truth = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let s: TruthSample = traj.sample(k as f64 / cfg.imu_rate);
        let ng = normal3(rng) * sg;
        let na = normal3(rng) * sa;
        samples.push(ImuSample {
            t: s.t,
            gyro: s.gyro + bg + ng,
            accel: s.accel + ba + na,
        });
        truth.push(s.imu_state(bg, ba));
        bg += normal3(rng) * wg;
        ba += normal3(rng) * wa;
    }
    ImuStream { samples, truth }
}

/// Observations of one camera frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub t: f64,
    /// Index of the IMU sample taken at the same instant.
    pub imu_index: usize,
    pub measurements: Vec<Measurement>,
}

/// Projects every visible landmark at each camera instant and adds
/// isotropic pixel noise. Landmark ids are indices into `landmarks`.
pub fn synthesize_camera(
    imu: &ImuStream,
    landmarks: &[Vector3<f64>],
    cam: &CameraModel,
    cfg: &ScenarioConfig,
    rng: &mut impl Rng,
) -> Vec<Frame> {
    let step = cfg.imu_per_frame();
    let sigma = cfg.noise.pixel_sigma;
    (0..imu.samples.len())
        .step_by(step)
        .map(|k| {
            let x = &imu.truth[k];
            let cam_pose = cam.camera_pose(&x.pose());
            let rt = cam_pose.rotation.transpose();
            let measurements = landmarks
                .iter()
                .enumerate()
                .filter_map(|(id, f)| {
                    let p = rt * (f - cam_pose.translation);
                    if !cam.is_visible(&p) {
                        return None;
                    }
                    let uv = cam.project(&p).ok()?;
                    let noise = Vector2::new(rng.sample(StandardNormal), rng.sample(StandardNormal)) * sigma;
                    Some(Measurement {
                        t: imu.samples[k].t,
                        landmark_id: id,
                        uv: uv + noise,
                    })
                })
                .collect();
            Frame {
                t: imu.samples[k].t,
                imu_index: k,
                measurements,
            }
        })
        .collect()
}
