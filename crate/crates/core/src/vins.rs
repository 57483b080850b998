//! EKF-VINS with landmarks in the state, on either error representation.

use nalgebra::{DMatrix, DVector, Matrix3, Vector2, Vector3};

use crate::camera::{CameraModel, Measurement};
use crate::ekf::{self, ErrorDynamics, ImuInput, ImuSample, NoiseConfig, Propagation, UpdateStatus};
use crate::error::{Error, Result};
use crate::lie::skew;
use crate::state::{Belief, ImuState, Representation, VinsState, IMU_DIM};

const TH: usize = 0;
const V: usize = 3;
const P: usize = 6;
const BG: usize = 9;
const BA: usize = 12;

// noise column offsets in [n_g, n_bg, n_a, n_ba]
const NG: usize = 0;
const NBG: usize = 3;
const NA: usize = 6;
const NBA: usize = 9;

fn put(m: &mut DMatrix<f64>, r: usize, c: usize, b: &Matrix3<f64>) {
    m.fixed_view_mut::<3, 3>(r, c).copy_from(b);
}

fn landmark_col(i: usize) -> usize {
    IMU_DIM + 3 * i
}

/// Right-invariant error dynamics. Does not depend on the IMU reading.
pub fn riekf_f(imu: &ImuState, landmarks: &[Vector3<f64>], gravity: &Vector3<f64>) -> DMatrix<f64> {
    let n = IMU_DIM + 3 * landmarks.len();
    let r = imu.rotation;
    let eye = Matrix3::identity();
    let mut f = DMatrix::zeros(n, n);
    put(&mut f, V, TH, &skew(gravity));
    put(&mut f, P, V, &eye);
    put(&mut f, TH, BG, &-r);
    put(&mut f, V, BG, &(-skew(&imu.velocity) * r));
    put(&mut f, V, BA, &-r);
    put(&mut f, P, BG, &(-skew(&imu.position) * r));
    for (i, l) in landmarks.iter().enumerate() {
        put(&mut f, landmark_col(i), BG, &(-skew(l) * r));
    }
    f
}

/// Noise Jacobian for the right-invariant error, noise order
/// `[n_g, n_bg, n_a, n_ba]`.
pub fn riekf_g(imu: &ImuState, landmarks: &[Vector3<f64>]) -> DMatrix<f64> {
    let n = IMU_DIM + 3 * landmarks.len();
    let r = imu.rotation;
    let eye = Matrix3::identity();
    let mut g = DMatrix::zeros(n, 12);
    put(&mut g, TH, NG, &r);
    put(&mut g, V, NG, &(skew(&imu.velocity) * r));
    put(&mut g, P, NG, &(skew(&imu.position) * r));
    put(&mut g, BG, NBG, &eye);
    put(&mut g, V, NA, &r);
    put(&mut g, BA, NBA, &eye);
    for (i, l) in landmarks.iter().enumerate() {
        put(&mut g, landmark_col(i), NG, &(skew(l) * r));
    }
    g
}

pub fn conekf_f(imu: &ImuState, landmarks: &[Vector3<f64>], u: &ImuInput) -> DMatrix<f64> {
    let n = IMU_DIM + 3 * landmarks.len();
    let r = imu.rotation;
    let w = u.gyro - imu.gyro_bias;
    let a = u.accel - imu.accel_bias;
    let eye = Matrix3::identity();
    let mut f = DMatrix::zeros(n, n);
    put(&mut f, TH, TH, &-skew(&w));
    put(&mut f, TH, BG, &-eye);
    put(&mut f, V, TH, &(-r * skew(&a)));
    put(&mut f, V, BA, &-r);
    put(&mut f, P, V, &eye);
    f
}

pub fn conekf_g(imu: &ImuState, landmarks: &[Vector3<f64>]) -> DMatrix<f64> {
    let n = IMU_DIM + 3 * landmarks.len();
    let eye = Matrix3::identity();
    let mut g = DMatrix::zeros(n, 12);
    put(&mut g, TH, NG, &eye);
    put(&mut g, BG, NBG, &eye);
    put(&mut g, V, NA, &imu.rotation);
    put(&mut g, BA, NBA, &eye);
    g
}

/// Error dynamics of the IMU block followed by static landmarks.
#[derive(Clone, Copy, Debug)]
pub struct VinsDynamics<'a> {
    pub rep: Representation,
    pub gravity: Vector3<f64>,
    pub landmarks: &'a [Vector3<f64>],
}

impl ErrorDynamics for VinsDynamics<'_> {
    fn dim(&self) -> usize {
        IMU_DIM + 3 * self.landmarks.len()
    }

    fn f(&self, imu: &ImuState, u: &ImuInput) -> DMatrix<f64> {
        match self.rep {
            Representation::RightInvariant => riekf_f(imu, self.landmarks, &self.gravity),
            Representation::Conventional => conekf_f(imu, self.landmarks, u),
        }
    }

    fn g(&self, imu: &ImuState) -> DMatrix<f64> {
        match self.rep {
            Representation::RightInvariant => riekf_g(imu, self.landmarks),
            Representation::Conventional => conekf_g(imu, self.landmarks),
        }
    }
}

/// Landmark expressed in the IMU frame.
pub fn landmark_in_imu(imu: &ImuState, f: &Vector3<f64>) -> Vector3<f64> {
    imu.rotation.transpose() * (f - imu.position)
}

pub fn predict_measurement(x: &VinsState, cam: &CameraModel, landmark: usize) -> Result<Vector2<f64>> {
    let f = x.landmarks.get(landmark).ok_or(Error::Dimension {
        expected: x.landmarks.len(),
        actual: landmark,
    })?;
    cam.project_imu(&landmark_in_imu(&x.imu, f))
}

/// Two rows of the measurement Jacobian for one landmark.
pub fn measurement_jacobian(
    x: &VinsState,
    cam: &CameraModel,
    landmark: usize,
    rep: Representation,
) -> Result<DMatrix<f64>> {
    let n = IMU_DIM + 3 * x.landmarks.len();
    let f = x.landmarks.get(landmark).ok_or(Error::Dimension {
        expected: x.landmarks.len(),
        actual: landmark,
    })?;
    let f_imu = landmark_in_imu(&x.imu, f);
    let p_cam = cam.imu_to_camera(&f_imu);
    if p_cam.z <= cam.z_min {
        return Err(Error::BehindCamera(p_cam.z));
    }
    let dh = cam.project_imu_jacobian(&f_imu);
    let rt = x.imu.rotation.transpose();
    let mut h = DMatrix::zeros(2, n);
    h.fixed_view_mut::<2, 3>(0, P).copy_from(&(-dh * rt));
    h.fixed_view_mut::<2, 3>(0, landmark_col(landmark)).copy_from(&(dh * rt));
    if rep == Representation::Conventional {
        h.fixed_view_mut::<2, 3>(0, TH).copy_from(&(dh * skew(&f_imu)));
    }
    Ok(h)
}

/// Stacked `(H, r)` over the observations that can be linearized; those
/// behind the camera are dropped.
pub fn linearize(
    x: &VinsState,
    cam: &CameraModel,
    obs: &[Measurement],
    rep: Representation,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let n = IMU_DIM + 3 * x.landmarks.len();
    let mut rows: Vec<(DMatrix<f64>, Vector2<f64>)> = Vec::with_capacity(obs.len());
    for m in obs {
        match measurement_jacobian(x, cam, m.landmark_id, rep) {
            Ok(h) => {
                let zhat = predict_measurement(x, cam, m.landmark_id)?;
                rows.push((h, m.uv - zhat));
            }
            Err(Error::BehindCamera(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    let mut h = DMatrix::zeros(2 * rows.len(), n);
    let mut r = DVector::zeros(2 * rows.len());
    for (k, (hk, rk)) in rows.iter().enumerate() {
        h.rows_mut(2 * k, 2).copy_from(hk);
        r.fixed_rows_mut::<2>(2 * k).copy_from(rk);
    }
    Ok((h, r))
}

/// What happened during one correction.
#[derive(Clone, Debug)]
pub struct UpdateRecord {
    pub h: DMatrix<f64>,
    pub gain: Option<DMatrix<f64>>,
    pub status: UpdateStatus,
}

#[derive(Clone, Debug)]
pub struct VinsFilter {
    pub rep: Representation,
    pub belief: Belief<VinsState>,
    pub gravity: Vector3<f64>,
    pub noise: NoiseConfig,
    pub camera: CameraModel,
    q: DMatrix<f64>,
}

impl VinsFilter {
    pub fn new(
        rep: Representation,
        belief: Belief<VinsState>,
        gravity: Vector3<f64>,
        noise: NoiseConfig,
        camera: CameraModel,
    ) -> Self {
        Self {
            rep,
            belief,
            gravity,
            q: noise.q_matrix(),
            noise,
            camera,
        }
    }

    /// Propagates over the span of `samples` and returns the transition
    /// matrix that was applied.
    pub fn propagate(&mut self, samples: &[ImuSample]) -> Result<DMatrix<f64>> {
        let mean = &self.belief.mean;
        let dynamics = VinsDynamics {
            rep: self.rep,
            gravity: self.gravity,
            landmarks: &mean.landmarks,
        };
        let Propagation { imu, phi, qd } = ekf::propagate(&mean.imu, samples, &self.gravity, &self.q, &dynamics)?;
        let mut cov = &phi * &self.belief.cov * phi.transpose() + qd;
        ekf::symmetrize(&mut cov);
        self.belief.mean.imu = imu;
        self.belief.cov = cov;
        Ok(phi)
    }

    pub fn update(&mut self, obs: &[Measurement]) -> Result<UpdateRecord> {
        let (h, r) = linearize(&self.belief.mean, &self.camera, obs, self.rep)?;
        let var = self.noise.pixel_sigma * self.noise.pixel_sigma;
        let v = DMatrix::identity(h.nrows(), h.nrows()) * var;
        let out = ekf::ekf_update(&self.belief, &h, &r, &v, self.rep)?;
        self.belief = out.belief;
        Ok(UpdateRecord {
            h,
            gain: out.gain,
            status: out.status,
        })
    }
}
