//! Continuous-discrete EKF with a pluggable retraction.
//!
//! Propagation integrates the noise-free motion model with fixed-step RK4 at
//! the IMU sample period. The transition matrix is obtained by running the
//! same RK4 scheme on `dPhi/dt = F Phi`, with `F` evaluated at each stage
//! state, and the discrete noise integral uses the trapezoid rule on the same
//! substeps.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lie::skew;
use crate::state::{Belief, ErrorState, ImuState, Representation};

/// Updates whose innovation covariance is worse conditioned than this are
/// rejected.
pub const MAX_INNOVATION_CONDITION: f64 = 1e12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImuSample {
    pub t: f64,
    pub gyro: Vector3<f64>,
    pub accel: Vector3<f64>,
}

/// IMU reading at one RK4 stage.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImuInput {
    pub gyro: Vector3<f64>,
    pub accel: Vector3<f64>,
}

impl ImuInput {
    fn from_sample(s: &ImuSample) -> Self {
        Self {
            gyro: s.gyro,
            accel: s.accel,
        }
    }
}

/// Continuous-time noise densities and pixel noise.
///
/// `Q = diag(gyro_noise^2 I, gyro_walk^2 I, accel_noise^2 I, accel_walk^2 I)`
/// in the noise order `[n_g, n_bg, n_a, n_ba]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub gyro_noise: f64,
    pub gyro_walk: f64,
    pub accel_noise: f64,
    pub accel_walk: f64,
    pub pixel_sigma: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            gyro_noise: 0.008,
            gyro_walk: 0.0004,
            accel_noise: 0.019,
            accel_walk: 0.05,
            pixel_sigma: 1.5,
        }
    }
}

impl NoiseConfig {
    pub fn q_matrix(&self) -> DMatrix<f64> {
        let mut q = DMatrix::zeros(12, 12);
        for (block, sigma) in [self.gyro_noise, self.gyro_walk, self.accel_noise, self.accel_walk]
            .into_iter()
            .enumerate()
        {
            for k in 0..3 {
                q[(3 * block + k, 3 * block + k)] = sigma * sigma;
            }
        }
        q
    }

    pub fn validate(&self) -> Result<()> {
        let densities = [self.gyro_noise, self.gyro_walk, self.accel_noise, self.accel_walk];
        if densities.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::InvalidConfig("IMU noise densities must be finite and >= 0".into()));
        }
        if !(self.pixel_sigma > 0.0 && self.pixel_sigma.is_finite()) {
            return Err(Error::InvalidConfig("pixel_sigma must be > 0".into()));
        }
        Ok(())
    }
}

/// Jacobians of the linearized error dynamics `de/dt = F e + G n`.
pub trait ErrorDynamics {
    fn dim(&self) -> usize;
    fn f(&self, imu: &ImuState, u: &ImuInput) -> DMatrix<f64>;
    fn g(&self, imu: &ImuState) -> DMatrix<f64>;
}

/// Result of one propagation interval.
#[derive(Clone, Debug)]
pub struct Propagation {
    pub imu: ImuState,
    pub phi: DMatrix<f64>,
    pub qd: DMatrix<f64>,
}

struct Substep {
    h: f64,
    start: ImuInput,
    mid: ImuInput,
    end: ImuInput,
}

/// Lagrange interpolation of the IMU reading at `t` from the given nodes.
fn interpolate(nodes: &[ImuSample], t: f64) -> ImuInput {
    let mut gyro = Vector3::zeros();
    let mut accel = Vector3::zeros();
    for (i, ni) in nodes.iter().enumerate() {
        let mut w = 1.0;
        for (j, nj) in nodes.iter().enumerate() {
            if i != j {
                w *= (t - nj.t) / (ni.t - nj.t);
            }
        }
        gyro += ni.gyro * w;
        accel += ni.accel * w;
    }
    ImuInput { gyro, accel }
}

/// Splits a sample stream into RK4 substeps. Midpoint inputs come from a
/// cubic through the four nearest samples (fewer near short streams).
fn substeps(samples: &[ImuSample]) -> Result<Vec<Substep>> {
    if samples.len() < 2 || samples.windows(2).any(|w| !(w[1].t > w[0].t)) {
        return Err(Error::EmptyImuStream);
    }
    let n = samples.len();
    Ok((0..n - 1)
        .map(|k| {
            let lo = k.saturating_sub(1);
            let hi = (k + 3).min(n);
            let (lo, hi) = match (lo, hi) {
                (lo, hi) if hi - lo >= 4 => (lo, hi),
                (0, hi) => (0, hi.min(n)),
                (lo, hi) => (hi.saturating_sub(4).min(lo), hi),
            };
            let a = &samples[k];
            let b = &samples[k + 1];
            Substep {
                h: b.t - a.t,
                start: ImuInput::from_sample(a),
                mid: interpolate(&samples[lo..hi], 0.5 * (a.t + b.t)),
                end: ImuInput::from_sample(b),
            }
        })
        .collect())
}

struct Rate {
    rot: Matrix3<f64>,
    vel: Vector3<f64>,
    pos: Vector3<f64>,
}

fn rate(x: &ImuState, u: &ImuInput, gravity: &Vector3<f64>) -> Rate {
    Rate {
        rot: x.rotation * skew(&(u.gyro - x.gyro_bias)),
        vel: x.rotation * (u.accel - x.accel_bias) + gravity,
        pos: x.velocity,
    }
}

fn advance(x: &ImuState, k: &Rate, dt: f64) -> ImuState {
    ImuState {
        rotation: x.rotation + k.rot * dt,
        velocity: x.velocity + k.vel * dt,
        position: x.position + k.pos * dt,
        gyro_bias: x.gyro_bias,
        accel_bias: x.accel_bias,
    }
}

/// One RK4 step of the mean. Returns the new state and the four stage
/// states with their inputs.
fn rk4_mean(x: &ImuState, s: &Substep, gravity: &Vector3<f64>) -> (ImuState, [(ImuState, ImuInput); 4]) {
    let h = s.h;
    let k1 = rate(x, &s.start, gravity);
    let x2 = advance(x, &k1, 0.5 * h);
    let k2 = rate(&x2, &s.mid, gravity);
    let x3 = advance(x, &k2, 0.5 * h);
    let k3 = rate(&x3, &s.mid, gravity);
    let x4 = advance(x, &k3, h);
    let k4 = rate(&x4, &s.end, gravity);
    let next = ImuState {
        rotation: x.rotation + (k1.rot + (k2.rot + k3.rot) * 2.0 + k4.rot) * (h / 6.0),
        velocity: x.velocity + (k1.vel + (k2.vel + k3.vel) * 2.0 + k4.vel) * (h / 6.0),
        position: x.position + (k1.pos + (k2.pos + k3.pos) * 2.0 + k4.pos) * (h / 6.0),
        gyro_bias: x.gyro_bias,
        accel_bias: x.accel_bias,
    };
    (next, [(x.clone(), s.start), (x2, s.mid), (x3, s.mid), (x4, s.end)])
}

/// Integrates the noise-free motion model over the span of `samples`.
pub fn propagate_mean(x: &ImuState, samples: &[ImuSample], gravity: &Vector3<f64>) -> Result<ImuState> {
    let mut x = x.clone();
    for s in substeps(samples)? {
        x = rk4_mean(&x, &s, gravity).0;
    }
    Ok(x)
}

/// RK4 transition matrix over one substep given `F` at the four stages.
pub fn rk4_transition_step(f: &[DMatrix<f64>; 4], h: f64) -> DMatrix<f64> {
    let n = f[0].nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let k1 = f[0].clone();
    let k2 = &f[1] * (&eye + &k1 * (0.5 * h));
    let k3 = &f[2] * (&eye + &k2 * (0.5 * h));
    let k4 = &f[3] * (&eye + &k3 * h);
    eye + (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0)
}

/// Transition matrix over consecutive substeps, `Phi_{N-1} ... Phi_0`.
pub fn transition_matrix(stages: &[[DMatrix<f64>; 4]], steps: &[f64]) -> DMatrix<f64> {
    let n = stages.first().map_or(0, |s| s[0].nrows());
    stages
        .iter()
        .zip(steps)
        .fold(DMatrix::identity(n, n), |phi, (f, &h)| rk4_transition_step(f, h) * phi)
}

/// Trapezoid contribution of one substep to `Q_d`, folded into the running
/// total: `Q <- Phi_k Q Phi_k^T + h/2 (Phi_k GQG_k Phi_k^T + GQG_{k+1})`.
fn accumulate_noise(
    qd: &mut DMatrix<f64>,
    phi_k: &DMatrix<f64>,
    gqg_start: &DMatrix<f64>,
    gqg_end: &DMatrix<f64>,
    h: f64,
) {
    let carried = phi_k * (&*qd + gqg_start * (0.5 * h)) * phi_k.transpose();
    *qd = carried + gqg_end * (0.5 * h);
}

/// Trapezoid quadrature of `int Phi(t1, s) G Q G^T Phi(t1, s)^T ds` over
/// substeps with per-step transition matrices `step_phis` and `G` at the
/// `N + 1` nodes.
pub fn discrete_noise(
    g_nodes: &[DMatrix<f64>],
    q: &DMatrix<f64>,
    step_phis: &[DMatrix<f64>],
    steps: &[f64],
) -> DMatrix<f64> {
    let n = g_nodes.first().map_or(0, |g| g.nrows());
    let mut qd = DMatrix::zeros(n, n);
    for (k, (phi, &h)) in step_phis.iter().zip(steps).enumerate() {
        let a = &g_nodes[k] * q * g_nodes[k].transpose();
        let b = &g_nodes[k + 1] * q * g_nodes[k + 1].transpose();
        accumulate_noise(&mut qd, phi, &a, &b, h);
    }
    symmetrize(&mut qd);
    qd
}

/// Propagates the mean and returns the interval transition matrix and
/// discrete process noise.
pub fn propagate<D: ErrorDynamics>(
    x: &ImuState,
    samples: &[ImuSample],
    gravity: &Vector3<f64>,
    q: &DMatrix<f64>,
    dynamics: &D,
) -> Result<Propagation> {
    let n = dynamics.dim();
    let mut x = x.clone();
    let mut phi = DMatrix::identity(n, n);
    let mut qd = DMatrix::zeros(n, n);
    let mut g_prev = dynamics.g(&x);
    let mut gqg_prev = &g_prev * q * g_prev.transpose();
    for s in substeps(samples)? {
        let (next, stages) = rk4_mean(&x, &s, gravity);
        let fs = stages.map(|(xs, u)| dynamics.f(&xs, &u));
        let phi_k = rk4_transition_step(&fs, s.h);
        g_prev = dynamics.g(&next);
        let gqg_next = &g_prev * q * g_prev.transpose();
        accumulate_noise(&mut qd, &phi_k, &gqg_prev, &gqg_next, s.h);
        phi = &phi_k * phi;
        gqg_prev = gqg_next;
        x = next;
    }
    symmetrize(&mut qd);
    Ok(Propagation { imu: x, phi, qd })
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum UpdateStatus {
    Applied,
    /// No measurement rows.
    Empty,
    /// Innovation covariance too badly conditioned; belief left unchanged.
    Rejected { condition: f64 },
}

#[derive(Clone, Debug)]
pub struct UpdateOutcome<S> {
    pub belief: Belief<S>,
    pub gain: Option<DMatrix<f64>>,
    pub status: UpdateStatus,
}

/// EKF correction with residual `r = z - h(x_hat)`.
pub fn ekf_update<S: ErrorState>(
    belief: &Belief<S>,
    h: &DMatrix<f64>,
    r: &DVector<f64>,
    v: &DMatrix<f64>,
    rep: Representation,
) -> Result<UpdateOutcome<S>> {
    let dim = belief.cov.nrows();
    let rows = h.nrows();
    if h.ncols() != dim {
        return Err(Error::Dimension { expected: dim, actual: h.ncols() });
    }
    if r.len() != rows || v.nrows() != rows || v.ncols() != rows {
        return Err(Error::Dimension { expected: rows, actual: r.len() });
    }
    if rows == 0 {
        return Ok(UpdateOutcome {
            belief: belief.clone(),
            gain: None,
            status: UpdateStatus::Empty,
        });
    }
    let ph_t = &belief.cov * h.transpose();
    let mut s = h * &ph_t + v;
    symmetrize(&mut s);

    let eig = s.clone().symmetric_eigenvalues();
    let (lo, hi) = eig
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &e| (lo.min(e), hi.max(e)));
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    let chol = match s.cholesky() {
        Some(c) if condition <= MAX_INNOVATION_CONDITION => c,
        _ => {
            return Ok(UpdateOutcome {
                belief: belief.clone(),
                gain: None,
                status: UpdateStatus::Rejected { condition },
            })
        }
    };
    // K = P H^T S^-1 = (S^-1 H P)^T
    let gain = chol.solve(&ph_t.transpose()).transpose();
    let correction = &gain * r;
    let mean = belief.mean.retract(correction.as_slice(), rep)?;
    let mut cov = &belief.cov - &gain * h * &belief.cov;
    symmetrize(&mut cov);
    Ok(UpdateOutcome {
        belief: Belief { mean, cov },
        gain: Some(gain),
        status: UpdateStatus::Applied,
    })
}
