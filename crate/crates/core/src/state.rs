//! State tuples, their two uncertainty representations, and the
//! unobservable transformation (yaw about gravity plus translation).
//!
//! Error vectors are laid out as `[theta, v, p, b_g, b_a, f_1 .. f_L]` for
//! the full-landmark state and `[imu(15), clone_1(6) .. clone_m(6)]` for the
//! sliding-window state, with each clone block ordered `[theta, p]`.

use nalgebra::{DMatrix, DVector, Matrix3, Matrix4, Vector3, Vector4};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::lie::{exp_so3, left_jacobian, left_jacobian_inv, log_so3, skew, Pose};

pub const IMU_DIM: usize = 15;
pub const POSE_DIM: usize = 6;
pub const FD_STEP: f64 = 1e-6;

/// Which retraction the filter uses to tie error vectors to states.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Representation {
    /// `R = R_hat exp(e_theta)`, everything else additive.
    Conventional,
    /// `R = exp(e_theta) R_hat`, `x = exp(e_theta) x_hat + J_r(-e_theta) e_x`
    /// for velocity, position and landmarks.
    RightInvariant,
}

#[inline]
fn v3(e: &[f64], at: usize) -> Vector3<f64> {
    Vector3::new(e[at], e[at + 1], e[at + 2])
}

#[inline]
fn put3(out: &mut DVector<f64>, at: usize, v: &Vector3<f64>) {
    out.fixed_rows_mut::<3>(at).copy_from(v);
}

fn chart_log(r: &Matrix3<f64>) -> Result<Vector3<f64>> {
    let w = log_so3(r);
    let angle = w.norm();
    if angle >= PI - 1e-9 {
        return Err(Error::OutOfChart(angle));
    }
    Ok(w)
}

fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::Dimension { expected, actual });
    }
    Ok(())
}

/// Orientation, velocity and position of the IMU in the world frame plus
/// gyroscope and accelerometer biases.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImuState {
    pub rotation: Matrix3<f64>,
    pub velocity: Vector3<f64>,
    pub position: Vector3<f64>,
    pub gyro_bias: Vector3<f64>,
    pub accel_bias: Vector3<f64>,
}

impl Default for ImuState {
    fn default() -> Self {
        Self {
            rotation: Matrix3::identity(),
            velocity: Vector3::zeros(),
            position: Vector3::zeros(),
            gyro_bias: Vector3::zeros(),
            accel_bias: Vector3::zeros(),
        }
    }
}

impl ImuState {
    pub fn pose(&self) -> Pose {
        Pose::new(self.rotation, self.position)
    }

    /// First five blocks of the full-state retraction. `e` holds 15 values.
    pub fn retract(&self, e: &[f64], rep: Representation) -> ImuState {
        let th = v3(e, 0);
        let (ev, ep) = (v3(e, 3), v3(e, 6));
        let gyro_bias = self.gyro_bias + v3(e, 9);
        let accel_bias = self.accel_bias + v3(e, 12);
        match rep {
            Representation::Conventional => ImuState {
                rotation: self.rotation * exp_so3(&th),
                velocity: self.velocity + ev,
                position: self.position + ep,
                gyro_bias,
                accel_bias,
            },
            Representation::RightInvariant => {
                let dr = exp_so3(&th);
                let jl = left_jacobian(&th);
                ImuState {
                    rotation: dr * self.rotation,
                    velocity: dr * self.velocity + jl * ev,
                    position: dr * self.position + jl * ep,
                    gyro_bias,
                    accel_bias,
                }
            }
        }
    }

    /// Writes `x ⊖ self` into `out[0..15]` and returns the rotation error,
    /// which landmark blocks of the right-invariant chart reuse.
    fn inverse_retract_into(
        &self,
        x: &ImuState,
        rep: Representation,
        out: &mut DVector<f64>,
    ) -> Result<Vector3<f64>> {
        let th = match rep {
            Representation::Conventional => {
                let th = chart_log(&(self.rotation.transpose() * x.rotation))?;
                put3(out, 3, &(x.velocity - self.velocity));
                put3(out, 6, &(x.position - self.position));
                th
            }
            Representation::RightInvariant => {
                let th = chart_log(&(x.rotation * self.rotation.transpose()))?;
                let dr = exp_so3(&th);
                let jli = left_jacobian_inv(&th);
                put3(out, 3, &(jli * (x.velocity - dr * self.velocity)));
                put3(out, 6, &(jli * (x.position - dr * self.position)));
                th
            }
        };
        put3(out, 0, &th);
        put3(out, 9, &(x.gyro_bias - self.gyro_bias));
        put3(out, 12, &(x.accel_bias - self.accel_bias));
        Ok(th)
    }

    pub fn inverse_retract(&self, x: &ImuState, rep: Representation) -> Result<DVector<f64>> {
        let mut out = DVector::zeros(IMU_DIM);
        self.inverse_retract_into(x, rep, &mut out)?;
        Ok(out)
    }

    pub fn transformed(&self, rot: &Matrix3<f64>, shift: &Vector3<f64>) -> ImuState {
        ImuState {
            rotation: rot * self.rotation,
            velocity: rot * self.velocity,
            position: rot * self.position + shift,
            gyro_bias: self.gyro_bias,
            accel_bias: self.accel_bias,
        }
    }
}

/// Retraction of a point coupled to an orientation error `th`.
#[inline]
fn point_retract(f: &Vector3<f64>, th: &Vector3<f64>, ef: &Vector3<f64>, rep: Representation) -> Vector3<f64> {
    match rep {
        Representation::Conventional => f + ef,
        Representation::RightInvariant => exp_so3(th) * f + left_jacobian(th) * ef,
    }
}

#[inline]
fn point_inverse(fhat: &Vector3<f64>, f: &Vector3<f64>, th: &Vector3<f64>, rep: Representation) -> Vector3<f64> {
    match rep {
        Representation::Conventional => f - fhat,
        Representation::RightInvariant => left_jacobian_inv(th) * (f - exp_so3(th) * fhat),
    }
}

/// Pose retraction with error `[theta, p]`.
pub fn pose_retract(c: &Pose, e: &[f64], rep: Representation) -> Pose {
    let th = v3(e, 0);
    let ep = v3(e, 3);
    match rep {
        Representation::Conventional => Pose::new(c.rotation * exp_so3(&th), c.translation + ep),
        Representation::RightInvariant => Pose::new(
            exp_so3(&th) * c.rotation,
            exp_so3(&th) * c.translation + left_jacobian(&th) * ep,
        ),
    }
}

/// Inverse of [`pose_retract`]: returns `e` with `pose_retract(hat, e) == c`.
pub fn pose_inverse_retract(hat: &Pose, c: &Pose, rep: Representation) -> Result<[f64; 6]> {
    let (th, ep) = match rep {
        Representation::Conventional => {
            let th = chart_log(&(hat.rotation.transpose() * c.rotation))?;
            (th, c.translation - hat.translation)
        }
        Representation::RightInvariant => {
            let th = chart_log(&(c.rotation * hat.rotation.transpose()))?;
            (th, point_inverse(&hat.translation, &c.translation, &th, rep))
        }
    };
    Ok([th.x, th.y, th.z, ep.x, ep.y, ep.z])
}

/// Retraction of a landmark whose error is coupled with the pose of the
/// clone that first observed it. `e = [theta, p, f]`.
pub fn anchored_landmark_retract(
    c: &Pose,
    f: &Vector3<f64>,
    e: &[f64; 9],
    rep: Representation,
) -> (Pose, Vector3<f64>) {
    let pose = pose_retract(c, &e[..6], rep);
    let th = v3(e, 0);
    let ef = v3(e, 6);
    (pose, point_retract(f, &th, &ef, rep))
}

/// IMU state plus a fixed-size set of global landmarks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VinsState {
    pub imu: ImuState,
    pub landmarks: Vec<Vector3<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CloneState {
    pub time: f64,
    pub pose: Pose,
}

/// IMU state plus a window of cloned camera poses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MsckfState {
    pub imu: ImuState,
    pub clones: Vec<CloneState>,
}

/// State types that can be carried by the generic filter machinery.
pub trait ErrorState: Clone {
    fn error_dim(&self) -> usize;

    fn imu(&self) -> &ImuState;

    /// `self ⊕ e`.
    fn retract(&self, e: &[f64], rep: Representation) -> Result<Self>;

    /// `x ⊖ self`, the `e` with `self.retract(e) == x`.
    fn inverse_retract(&self, x: &Self, rep: Representation) -> Result<DVector<f64>>;

    /// Applies `x -> rot * x + shift` to every world-frame quantity and
    /// `R -> rot * R` to every orientation.
    fn transformed(&self, rot: &Matrix3<f64>, shift: &Vector3<f64>) -> Self;

    /// Closed-form `M` for a deterministic transform.
    fn equivariance_matrix(&self, t: &UnobsTransform, gravity: &Vector3<f64>, rep: Representation) -> DMatrix<f64>;

    /// Closed-form `N`, evaluated at `self`, which must already be
    /// `T_D(x_hat)`.
    fn noise_injection(&self, t: &UnobsTransform, gravity: &Vector3<f64>, rep: Representation) -> DMatrix<f64>;
}

impl ErrorState for VinsState {
    fn error_dim(&self) -> usize {
        IMU_DIM + 3 * self.landmarks.len()
    }

    fn imu(&self) -> &ImuState {
        &self.imu
    }

    fn retract(&self, e: &[f64], rep: Representation) -> Result<Self> {
        check_dim(self.error_dim(), e.len())?;
        let th = v3(e, 0);
        let landmarks = self
            .landmarks
            .iter()
            .enumerate()
            .map(|(i, f)| point_retract(f, &th, &v3(e, IMU_DIM + 3 * i), rep))
            .collect();
        Ok(VinsState {
            imu: self.imu.retract(&e[..IMU_DIM], rep),
            landmarks,
        })
    }

    fn inverse_retract(&self, x: &Self, rep: Representation) -> Result<DVector<f64>> {
        check_dim(self.landmarks.len(), x.landmarks.len())?;
        let mut out = DVector::zeros(self.error_dim());
        let th = self.imu.inverse_retract_into(&x.imu, rep, &mut out)?;
        for (i, (fhat, f)) in self.landmarks.iter().zip(&x.landmarks).enumerate() {
            put3(&mut out, IMU_DIM + 3 * i, &point_inverse(fhat, f, &th, rep));
        }
        Ok(out)
    }

    fn transformed(&self, rot: &Matrix3<f64>, shift: &Vector3<f64>) -> Self {
        VinsState {
            imu: self.imu.transformed(rot, shift),
            landmarks: self.landmarks.iter().map(|f| rot * f + shift).collect(),
        }
    }

    fn equivariance_matrix(&self, t: &UnobsTransform, gravity: &Vector3<f64>, rep: Representation) -> DMatrix<f64> {
        let dim = self.error_dim();
        let mut w = DMatrix::zeros(dim, dim);
        let dr = t.rotation(gravity, 0.0);
        let coupling = skew(&t.translation) * dr;
        fill_imu_w(&mut w, &dr, &coupling, rep);
        for i in 0..self.landmarks.len() {
            let at = IMU_DIM + 3 * i;
            w.fixed_view_mut::<3, 3>(at, at).copy_from(&dr);
            if rep == Representation::RightInvariant {
                w.fixed_view_mut::<3, 3>(at, 0).copy_from(&coupling);
            }
        }
        w
    }

    fn noise_injection(&self, t: &UnobsTransform, gravity: &Vector3<f64>, rep: Representation) -> DMatrix<f64> {
        let mut n = DMatrix::zeros(self.error_dim(), 4);
        let axis = gravity.normalize();
        fill_imu_n(&mut n, &self.imu, &axis, &t.translation, rep);
        for (i, f) in self.landmarks.iter().enumerate() {
            fill_point_n(&mut n, IMU_DIM + 3 * i, f, &axis, &t.translation, rep);
        }
        n
    }
}

impl MsckfState {
    pub fn clone_offset(i: usize) -> usize {
        IMU_DIM + POSE_DIM * i
    }
}

impl ErrorState for MsckfState {
    fn error_dim(&self) -> usize {
        IMU_DIM + POSE_DIM * self.clones.len()
    }

    fn imu(&self) -> &ImuState {
        &self.imu
    }

    fn retract(&self, e: &[f64], rep: Representation) -> Result<Self> {
        check_dim(self.error_dim(), e.len())?;
        let clones = self
            .clones
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let at = Self::clone_offset(i);
                CloneState {
                    time: c.time,
                    pose: pose_retract(&c.pose, &e[at..at + POSE_DIM], rep),
                }
            })
            .collect();
        Ok(MsckfState {
            imu: self.imu.retract(&e[..IMU_DIM], rep),
            clones,
        })
    }

    fn inverse_retract(&self, x: &Self, rep: Representation) -> Result<DVector<f64>> {
        check_dim(self.clones.len(), x.clones.len())?;
        let mut out = DVector::zeros(self.error_dim());
        self.imu.inverse_retract_into(&x.imu, rep, &mut out)?;
        for (i, (hat, c)) in self.clones.iter().zip(&x.clones).enumerate() {
            let e = pose_inverse_retract(&hat.pose, &c.pose, rep)?;
            out.rows_mut(Self::clone_offset(i), POSE_DIM)
                .copy_from_slice(&e);
        }
        Ok(out)
    }

    fn transformed(&self, rot: &Matrix3<f64>, shift: &Vector3<f64>) -> Self {
        MsckfState {
            imu: self.imu.transformed(rot, shift),
            clones: self
                .clones
                .iter()
                .map(|c| CloneState {
                    time: c.time,
                    pose: Pose::new(rot * c.pose.rotation, rot * c.pose.translation + shift),
                })
                .collect(),
        }
    }

    fn equivariance_matrix(&self, t: &UnobsTransform, gravity: &Vector3<f64>, rep: Representation) -> DMatrix<f64> {
        let dim = self.error_dim();
        let mut w = DMatrix::zeros(dim, dim);
        let dr = t.rotation(gravity, 0.0);
        let coupling = skew(&t.translation) * dr;
        fill_imu_w(&mut w, &dr, &coupling, rep);
        for i in 0..self.clones.len() {
            let at = Self::clone_offset(i);
            match rep {
                Representation::Conventional => {
                    w.fixed_view_mut::<3, 3>(at, at).copy_from(&Matrix3::identity());
                }
                Representation::RightInvariant => {
                    w.fixed_view_mut::<3, 3>(at, at).copy_from(&dr);
                    w.fixed_view_mut::<3, 3>(at + 3, at).copy_from(&coupling);
                }
            }
            w.fixed_view_mut::<3, 3>(at + 3, at + 3).copy_from(&dr);
        }
        w
    }

    fn noise_injection(&self, t: &UnobsTransform, gravity: &Vector3<f64>, rep: Representation) -> DMatrix<f64> {
        let mut n = DMatrix::zeros(self.error_dim(), 4);
        let axis = gravity.normalize();
        fill_imu_n(&mut n, &self.imu, &axis, &t.translation, rep);
        for (i, c) in self.clones.iter().enumerate() {
            let at = Self::clone_offset(i);
            let rot_col = match rep {
                Representation::Conventional => c.pose.rotation.transpose() * axis,
                Representation::RightInvariant => axis,
            };
            n.fixed_view_mut::<3, 1>(at, 0).copy_from(&rot_col);
            fill_point_n(&mut n, at + 3, &c.pose.translation, &axis, &t.translation, rep);
        }
        n
    }
}

fn fill_imu_w(w: &mut DMatrix<f64>, dr: &Matrix3<f64>, coupling: &Matrix3<f64>, rep: Representation) {
    let i3 = Matrix3::identity();
    match rep {
        Representation::Conventional => w.fixed_view_mut::<3, 3>(0, 0).copy_from(&i3),
        Representation::RightInvariant => {
            w.fixed_view_mut::<3, 3>(0, 0).copy_from(dr);
            w.fixed_view_mut::<3, 3>(6, 0).copy_from(coupling);
        }
    }
    w.fixed_view_mut::<3, 3>(3, 3).copy_from(dr);
    w.fixed_view_mut::<3, 3>(6, 6).copy_from(dr);
    w.fixed_view_mut::<3, 3>(9, 9).copy_from(&i3);
    w.fixed_view_mut::<3, 3>(12, 12).copy_from(&i3);
}

fn fill_imu_n(
    n: &mut DMatrix<f64>,
    imu: &ImuState,
    axis: &Vector3<f64>,
    shift: &Vector3<f64>,
    rep: Representation,
) {
    match rep {
        Representation::Conventional => {
            n.fixed_view_mut::<3, 1>(0, 0).copy_from(&(imu.rotation.transpose() * axis));
            n.fixed_view_mut::<3, 1>(3, 0).copy_from(&(skew(axis) * imu.velocity));
        }
        Representation::RightInvariant => {
            n.fixed_view_mut::<3, 1>(0, 0).copy_from(axis);
        }
    }
    fill_point_n(n, 6, &imu.position, axis, shift, rep);
}

/// Rows of `N` for a world point (position, landmark, clone translation).
fn fill_point_n(
    n: &mut DMatrix<f64>,
    at: usize,
    point: &Vector3<f64>,
    axis: &Vector3<f64>,
    shift: &Vector3<f64>,
    rep: Representation,
) {
    let col = match rep {
        Representation::Conventional => skew(axis) * (point - shift),
        Representation::RightInvariant => skew(shift) * axis,
    };
    n.fixed_view_mut::<3, 1>(at, 0).copy_from(&col);
    n.fixed_view_mut::<3, 3>(at, 1).copy_from(&Matrix3::identity());
}

/// Mean estimate and covariance over the retraction's error coordinates.
#[derive(Clone, Debug)]
pub struct Belief<S> {
    pub mean: S,
    pub cov: DMatrix<f64>,
}

impl<S: ErrorState> Belief<S> {
    pub fn new(mean: S, cov: DMatrix<f64>) -> Result<Self> {
        let dim = mean.error_dim();
        check_dim(dim, cov.nrows())?;
        check_dim(dim, cov.ncols())?;
        Ok(Self { mean, cov })
    }
}

/// Gravity in the world frame, m/s^2.
pub fn default_gravity() -> Vector3<f64> {
    Vector3::new(0.0, 0.0, -9.81)
}

/// Rotation by `yaw` about the gravity direction followed by a translation,
/// optionally perturbed by `eps ~ N(0, sigma)`.
///
/// The rotation axis is the unit gravity direction, so `yaw` is in radians.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnobsTransform {
    pub yaw: f64,
    pub translation: Vector3<f64>,
    pub sigma: Matrix4<f64>,
}

impl UnobsTransform {
    pub fn deterministic(yaw: f64, translation: Vector3<f64>) -> Self {
        Self {
            yaw,
            translation,
            sigma: Matrix4::zeros(),
        }
    }

    pub fn identity() -> Self {
        Self::deterministic(0.0, Vector3::zeros())
    }

    pub fn stochastic_identity(sigma: Matrix4<f64>) -> Self {
        Self {
            yaw: 0.0,
            translation: Vector3::zeros(),
            sigma,
        }
    }

    pub fn rotation(&self, gravity: &Vector3<f64>, eps_yaw: f64) -> Matrix3<f64> {
        exp_so3(&(gravity.normalize() * (self.yaw + eps_yaw)))
    }

    /// The deterministic part `T_D`.
    pub fn deterministic_part(&self) -> Self {
        Self::deterministic(self.yaw, self.translation)
    }

    /// Deterministic inverse `T_D^-1`.
    pub fn inverse(&self, gravity: &Vector3<f64>) -> Self {
        let rt = self.rotation(gravity, 0.0).transpose();
        Self::deterministic(-self.yaw, -(rt * self.translation))
    }

    /// `T_S(x)` for the given noise draw, or `T_D(x)` when `eps` is `None`.
    pub fn apply<S: ErrorState>(&self, x: &S, gravity: &Vector3<f64>, eps: Option<&Vector4<f64>>) -> S {
        let zero = Vector4::zeros();
        let eps = eps.unwrap_or(&zero);
        let rot = self.rotation(gravity, eps[0]);
        let shift = self.translation + Vector3::new(eps[1], eps[2], eps[3]);
        x.transformed(&rot, &shift)
    }
}

/// Central finite-difference `M` and `N` of the transform around `xhat`.
pub fn transform_error_jacobians<S: ErrorState>(
    xhat: &S,
    t: &UnobsTransform,
    gravity: &Vector3<f64>,
    rep: Representation,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let dim = xhat.error_dim();
    let td = t.deterministic_part();
    let y = td.apply(xhat, gravity, None);
    let mut m = DMatrix::zeros(dim, dim);
    let mut e = vec![0.0; dim];
    for k in 0..dim {
        e[k] = FD_STEP;
        let plus = y.inverse_retract(&td.apply(&xhat.retract(&e, rep)?, gravity, None), rep)?;
        e[k] = -FD_STEP;
        let minus = y.inverse_retract(&td.apply(&xhat.retract(&e, rep)?, gravity, None), rep)?;
        e[k] = 0.0;
        m.set_column(k, &((plus - minus) / (2.0 * FD_STEP)));
    }
    let mut n = DMatrix::zeros(dim, 4);
    for k in 0..4 {
        let mut eps = Vector4::zeros();
        eps[k] = FD_STEP;
        let plus = y.inverse_retract(&t.apply(xhat, gravity, Some(&eps)), rep)?;
        eps[k] = -FD_STEP;
        let minus = y.inverse_retract(&t.apply(xhat, gravity, Some(&eps)), rep)?;
        n.set_column(k, &((plus - minus) / (2.0 * FD_STEP)));
    }
    Ok((m, n))
}

#[cfg(test)]
pub(crate) mod testing {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    pub fn rand_vec3(rng: &mut impl Rng, scale: f64) -> Vector3<f64> {
        Vector3::new(
            rng.random_range(-scale..scale),
            rng.random_range(-scale..scale),
            rng.random_range(-scale..scale),
        )
    }

    pub fn rand_imu(rng: &mut impl Rng) -> ImuState {
        ImuState {
            rotation: exp_so3(&rand_vec3(rng, 1.5)),
            velocity: rand_vec3(rng, 3.0),
            position: rand_vec3(rng, 5.0),
            gyro_bias: rand_vec3(rng, 0.05),
            accel_bias: rand_vec3(rng, 0.2),
        }
    }

    pub fn rand_vins(rng: &mut impl Rng, landmarks: usize) -> VinsState {
        VinsState {
            imu: rand_imu(rng),
            landmarks: (0..landmarks).map(|_| rand_vec3(rng, 7.0)).collect(),
        }
    }

    pub fn rand_msckf(rng: &mut impl Rng, clones: usize) -> MsckfState {
        MsckfState {
            imu: rand_imu(rng),
            clones: (0..clones)
                .map(|i| CloneState {
                    time: i as f64 * 0.05,
                    pose: Pose::new(exp_so3(&rand_vec3(rng, 1.5)), rand_vec3(rng, 5.0)),
                })
                .collect(),
        }
    }

    pub fn rand_error(rng: &mut impl Rng, dim: usize, scale: f64) -> Vec<f64> {
        (0..dim).map(|_| rng.random_range(-scale..scale)).collect()
    }
}
