//! Finite-difference audit of the analytic Jacobians.
//!
//! Every matrix is rebuilt numerically from the nonlinear model it
//! linearizes: `F` and `G` from nested central differences over short
//! flows of the noisy motion model, the measurement and clone Jacobians
//! from perturbed predictions, and `W_D`, `M`, `N` from perturbed
//! unobservable transformations.

use nalgebra::{DMatrix, DVector, Matrix3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::camera::CameraModel;
use crate::ekf::{ErrorDynamics, ImuInput};
use crate::error::{Error, Result};
use crate::lie::{exp_so3, skew, Pose};
use crate::msckf::{clone_jacobian, clone_mean, track_jacobians};
use crate::sim::FilterKind;
use crate::state::{
    anchored_landmark_retract, pose_inverse_retract, transform_error_jacobians, CloneState, ErrorState, ImuState,
    MsckfState, Representation, UnobsTransform, VinsState, FD_STEP,
};
use crate::vins::{measurement_jacobian, predict_measurement, VinsDynamics};

/// Step in both time and error for the nested differences of `F` and `G`.
const FLOW_STEP: f64 = 1e-4;
const FLOW_SUBSTEPS: usize = 4;
const LANDMARKS: usize = 3;
const CLONES: usize = 3;

pub fn random_vec3(rng: &mut impl Rng, scale: f64) -> Vector3<f64> {
    Vector3::new(
        rng.random_range(-scale..scale),
        rng.random_range(-scale..scale),
        rng.random_range(-scale..scale),
    )
}

pub fn random_imu(rng: &mut impl Rng) -> ImuState {
    ImuState {
        rotation: exp_so3(&random_vec3(rng, 2.0)),
        velocity: random_vec3(rng, 3.0),
        position: random_vec3(rng, 6.0),
        gyro_bias: random_vec3(rng, 0.05),
        accel_bias: random_vec3(rng, 0.2),
    }
}

pub fn random_camera(rng: &mut impl Rng) -> CameraModel {
    CameraModel::default().with_extrinsics(Pose::new(exp_so3(&random_vec3(rng, 0.5)), random_vec3(rng, 0.1)))
}

/// Point `depth` meters in front of a camera at `pose`, near the optical
/// axis.
fn point_in_front(rng: &mut impl Rng, pose: &Pose) -> Vector3<f64> {
    let local = Vector3::new(rng.random_range(-0.8..0.8), rng.random_range(-0.6..0.6), rng.random_range(2.0..8.0));
    pose.transform_point(&local)
}

/// Landmark state whose landmarks are all in view of `cam`.
pub fn random_visible_vins(rng: &mut impl Rng, cam: &CameraModel, landmarks: usize) -> VinsState {
    let imu = random_imu(rng);
    let c = cam.camera_pose(&imu.pose());
    let landmarks = (0..landmarks).map(|_| point_in_front(rng, &c)).collect();
    VinsState { imu, landmarks }
}

/// Sliding-window state with clones spread a few decimeters around the IMU
/// and a landmark seen by all of them.
pub fn random_window(rng: &mut impl Rng, cam: &CameraModel, clones: usize) -> (MsckfState, Vector3<f64>) {
    let imu = random_imu(rng);
    let c0 = cam.camera_pose(&imu.pose());
    let f = c0.transform_point(&Vector3::new(0.1, -0.05, rng.random_range(3.0..6.0)));
    let clones = (0..clones)
        .map(|k| {
            let rot = c0.rotation * exp_so3(&random_vec3(rng, 0.05));
            let pos = c0.translation + c0.rotation * random_vec3(rng, 0.3);
            CloneState {
                time: k as f64 * 0.05,
                pose: Pose::new(rot, pos),
            }
        })
        .collect();
    (MsckfState { imu, clones }, f)
}

/// Matrices covered by the audit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AuditMatrix {
    /// Continuous-time error dynamics.
    F,
    /// Noise Jacobian, compared per noise block up to sign.
    G,
    /// Landmark measurement Jacobian.
    H,
    /// Clone augmentation Jacobian.
    J,
    /// Track Jacobian with respect to the window error.
    A,
    /// Track Jacobian with respect to the landmark error.
    B,
    /// Equivariance matrix of a deterministic transformation.
    WD,
    /// Error map of the deterministic part of a stochastic transformation.
    M,
    /// Noise injection of a stochastic transformation.
    N,
}

impl AuditMatrix {
    pub const ALL: [AuditMatrix; 9] = [
        AuditMatrix::F,
        AuditMatrix::G,
        AuditMatrix::H,
        AuditMatrix::J,
        AuditMatrix::A,
        AuditMatrix::B,
        AuditMatrix::WD,
        AuditMatrix::M,
        AuditMatrix::N,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AuditMatrix::F => "F",
            AuditMatrix::G => "G",
            AuditMatrix::H => "H",
            AuditMatrix::J => "J",
            AuditMatrix::A => "A",
            AuditMatrix::B => "B",
            AuditMatrix::WD => "W_D",
            AuditMatrix::M => "M",
            AuditMatrix::N => "N",
        }
    }

    /// Matrices that exist for `kind`.
    pub fn for_filter(kind: FilterKind) -> Vec<AuditMatrix> {
        use AuditMatrix::*;
        if kind.is_sliding_window() {
            vec![F, G, J, A, B, WD, M, N]
        } else {
            vec![F, G, H, WD, M, N]
        }
    }
}

impl std::str::FromStr for AuditMatrix {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AuditMatrix::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown matrix '{s}'")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditOptions {
    pub samples: usize,
    pub seed: u64,
    /// Negates one analytic matrix before comparison, to confirm the audit
    /// detects a wrong sign.
    pub sign_flip: Option<AuditMatrix>,
}

impl Default for AuditOptions {
    fn default() -> Self {
        Self {
            samples: 100,
            seed: 1,
            sign_flip: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub matrix: AuditMatrix,
    /// Largest `max|fd - analytic| / max(|fd|, |analytic|)` over samples.
    pub max_rel_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub filter: FilterKind,
    pub samples: usize,
    pub entries: Vec<AuditEntry>,
}

impl AuditReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.entries.iter().all(|e| e.max_rel_error <= tol)
    }

    pub fn worst(&self) -> f64 {
        self.entries.iter().map(|e| e.max_rel_error).fold(0.0, f64::max)
    }
}

pub fn relative_error(fd: &DMatrix<f64>, analytic: &DMatrix<f64>) -> f64 {
    let scale = fd.amax().max(analytic.amax());
    if scale == 0.0 {
        0.0
    } else {
        (fd - analytic).amax() / scale
    }
}

/// Relative error after choosing the better sign for each 3-column block.
pub fn relative_error_blockwise_sign(fd: &DMatrix<f64>, analytic: &DMatrix<f64>) -> f64 {
    let scale = fd.amax().max(analytic.amax());
    if scale == 0.0 {
        return 0.0;
    }
    let mut worst: f64 = 0.0;
    for c in (0..fd.ncols()).step_by(3) {
        let w = 3.min(fd.ncols() - c);
        let a = fd.columns(c, w);
        let b = analytic.columns(c, w);
        let same = (a - b).amax();
        let flipped = (a + b).amax();
        worst = worst.max(same.min(flipped));
    }
    worst / scale
}

/// Noise vector `[n_g, n_bg, n_a, n_ba]`.
type Noise = [Vector3<f64>; 4];

/// Time derivatives of `(R, v, p)` under the noisy motion model.
fn rates(x: &ImuState, u: &ImuInput, n: &Noise, g: &Vector3<f64>) -> (Matrix3<f64>, Vector3<f64>, Vector3<f64>) {
    (
        x.rotation * skew(&(u.gyro - x.gyro_bias - n[0])),
        x.rotation * (u.accel - x.accel_bias - n[2]) + g,
        x.velocity,
    )
}

/// Integrates the noisy motion model over `tau` (possibly negative) with a
/// constant reading, by RK4 on the ambient matrix entries.
fn flow(x: &ImuState, u: &ImuInput, n: &Noise, g: &Vector3<f64>, tau: f64) -> ImuState {
    let h = tau / FLOW_SUBSTEPS as f64;
    let mut s = x.clone();
    for _ in 0..FLOW_SUBSTEPS {
        let at = |k: &(Matrix3<f64>, Vector3<f64>, Vector3<f64>), dt: f64| ImuState {
            rotation: s.rotation + k.0 * dt,
            velocity: s.velocity + k.1 * dt,
            position: s.position + k.2 * dt,
            gyro_bias: s.gyro_bias + n[1] * dt,
            accel_bias: s.accel_bias + n[3] * dt,
        };
        let k1 = rates(&s, u, n, g);
        let k2 = rates(&at(&k1, 0.5 * h), u, n, g);
        let k3 = rates(&at(&k2, 0.5 * h), u, n, g);
        let k4 = rates(&at(&k3, h), u, n, g);
        let w = h / 6.0;
        s = ImuState {
            rotation: s.rotation + (k1.0 + (k2.0 + k3.0) * 2.0 + k4.0) * w,
            velocity: s.velocity + (k1.1 + (k2.1 + k3.1) * 2.0 + k4.1) * w,
            position: s.position + (k1.2 + (k2.2 + k3.2) * 2.0 + k4.2) * w,
            gyro_bias: s.gyro_bias + n[1] * h,
            accel_bias: s.accel_bias + n[3] * h,
        };
    }
    s
}

fn flow_state(x: &VinsState, u: &ImuInput, n: &Noise, g: &Vector3<f64>, tau: f64) -> VinsState {
    VinsState {
        imu: flow(&x.imu, u, n, g, tau),
        landmarks: x.landmarks.clone(),
    }
}

/// `d/dt d/dε (x̂(t) ⊖ x(t; ε))` at zero, with `x(0; ε)` and the noise
/// given by `perturb`.
fn nested_difference(
    x: &VinsState,
    u: &ImuInput,
    g: &Vector3<f64>,
    rep: Representation,
    perturb: &dyn Fn(f64) -> Result<(VinsState, Noise)>,
) -> Result<DVector<f64>> {
    let zero = [Vector3::zeros(); 4];
    let mut acc = DVector::zeros(x.error_dim());
    for (tau, st) in [(FLOW_STEP, 1.0), (-FLOW_STEP, -1.0)] {
        let nominal = flow_state(x, u, &zero, g, tau);
        for (eps, se) in [(FLOW_STEP, 1.0), (-FLOW_STEP, -1.0)] {
            let (x0, n) = perturb(eps)?;
            let e = nominal.inverse_retract(&flow_state(&x0, u, &n, g, tau), rep)?;
            acc += e * (st * se);
        }
    }
    Ok(acc / (4.0 * FLOW_STEP * FLOW_STEP))
}

pub fn fd_dynamics(x: &VinsState, u: &ImuInput, g: &Vector3<f64>, rep: Representation) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let dim = x.error_dim();
    let zero = [Vector3::zeros(); 4];
    let mut f = DMatrix::zeros(dim, dim);
    for k in 0..dim {
        let col = nested_difference(x, u, g, rep, &|eps| {
            let mut e = vec![0.0; dim];
            e[k] = eps;
            Ok((x.retract(&e, rep)?, zero))
        })?;
        f.set_column(k, &col);
    }
    let mut gm = DMatrix::zeros(dim, 12);
    for k in 0..12 {
        let col = nested_difference(x, u, g, rep, &|eps| {
            let mut n = zero;
            n[k / 3][k % 3] = eps;
            Ok((x.clone(), n))
        })?;
        gm.set_column(k, &col);
    }
    Ok((f, gm))
}

pub fn fd_measurement(x: &VinsState, cam: &CameraModel, i: usize, rep: Representation) -> Result<DMatrix<f64>> {
    let n = x.error_dim();
    let mut h = DMatrix::zeros(2, n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = FD_STEP;
        let plus = predict_measurement(&x.retract(&e, rep)?, cam, i)?;
        e[j] = -FD_STEP;
        let minus = predict_measurement(&x.retract(&e, rep)?, cam, i)?;
        e[j] = 0.0;
        h.set_column(j, &((plus - minus) / (2.0 * FD_STEP)));
    }
    Ok(h)
}

pub fn fd_clone(x: &MsckfState, cam: &CameraModel, rep: Representation) -> Result<DMatrix<f64>> {
    let dim = x.error_dim();
    let c0 = clone_mean(&x.imu, cam);
    let mut j = DMatrix::zeros(6, dim);
    let mut e = vec![0.0; dim];
    for col in 0..dim {
        e[col] = FD_STEP;
        let plus = pose_inverse_retract(&c0, &clone_mean(&x.retract(&e, rep)?.imu, cam), rep)?;
        e[col] = -FD_STEP;
        let minus = pose_inverse_retract(&c0, &clone_mean(&x.retract(&e, rep)?.imu, cam), rep)?;
        e[col] = 0.0;
        for row in 0..6 {
            j[(row, col)] = (plus[row] - minus[row]) / (2.0 * FD_STEP);
        }
    }
    Ok(j)
}

/// Finite-difference `(A, B)` of a track observed by every clone and
/// anchored at the first one.
pub fn fd_track(x: &MsckfState, cam: &CameraModel, f: &Vector3<f64>, rep: Representation) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let dim = x.error_dim();
    let m = x.clones.len();
    let eval = |e: &[f64]| -> Result<DVector<f64>> {
        let y = x.retract(&e[..dim], rep)?;
        let oa = MsckfState::clone_offset(0);
        let mut e9 = [0.0; 9];
        e9[..6].copy_from_slice(&e[oa..oa + 6]);
        e9[6..].copy_from_slice(&e[dim..]);
        let (_, fy) = anchored_landmark_retract(&x.clones[0].pose, f, &e9, rep);
        let mut out = DVector::zeros(2 * m);
        for (k, c) in y.clones.iter().enumerate() {
            let uv = cam.project(&(c.pose.rotation.transpose() * (fy - c.pose.translation)))?;
            out.fixed_rows_mut::<2>(2 * k).copy_from(&uv);
        }
        Ok(out)
    };
    let mut full = DMatrix::zeros(2 * m, dim + 3);
    let mut e = vec![0.0; dim + 3];
    for col in 0..dim + 3 {
        e[col] = FD_STEP;
        let plus = eval(&e)?;
        e[col] = -FD_STEP;
        let minus = eval(&e)?;
        e[col] = 0.0;
        full.set_column(col, &((plus - minus) / (2.0 * FD_STEP)));
    }
    Ok((full.columns(0, dim).into_owned(), full.columns(dim, 3).into_owned()))
}

pub fn random_transform(rng: &mut impl Rng, stochastic: bool) -> UnobsTransform {
    let mut t = UnobsTransform::deterministic(
        rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
        random_vec3(rng, 5.0),
    );
    if stochastic {
        let d = nalgebra::Vector4::from_fn(|_, _| rng.random_range(0.001..0.1));
        t.sigma = nalgebra::Matrix4::from_diagonal(&d);
    }
    t
}

/// `[(W_D, fd), (M, fd), (N, fd)]` for one state.
fn transform_pairs<S: ErrorState>(x: &S, g: &Vector3<f64>, rep: Representation, rng: &mut impl Rng) -> Result<[(DMatrix<f64>, DMatrix<f64>); 3]> {
    let td = random_transform(rng, false);
    let (wd, _) = transform_error_jacobians(x, &td, g, rep)?;
    let ts = random_transform(rng, true);
    let (m, n) = transform_error_jacobians(x, &ts, g, rep)?;
    let y = ts.deterministic_part().apply(x, g, None);
    Ok([
        (x.equivariance_matrix(&td, g, rep), wd),
        (x.equivariance_matrix(&ts, g, rep), m),
        (y.noise_injection(&ts, g, rep), n),
    ])
}

fn random_input(rng: &mut impl Rng) -> ImuInput {
    ImuInput {
        gyro: random_vec3(rng, 1.0),
        accel: random_vec3(rng, 10.0),
    }
}

/// Audits every Jacobian of `kind` at `opts.samples` random states.
pub fn audit_jacobians(kind: FilterKind, opts: &AuditOptions) -> Result<AuditReport> {
    if opts.samples == 0 {
        return Err(Error::InvalidConfig("samples must be at least 1".into()));
    }
    let rep = kind.representation();
    let g = crate::state::default_gravity();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let matrices = AuditMatrix::for_filter(kind);
    let mut worst = vec![0.0f64; matrices.len()];
    let mut record = |which: AuditMatrix, fd: &DMatrix<f64>, analytic: &DMatrix<f64>| {
        let analytic = if opts.sign_flip == Some(which) { -analytic } else { analytic.clone() };
        let err = if which == AuditMatrix::G {
            relative_error_blockwise_sign(fd, &analytic)
        } else {
            relative_error(fd, &analytic)
        };
        let i = matrices.iter().position(|m| *m == which).expect("matrix belongs to filter");
        worst[i] = worst[i].max(err);
    };
    for _ in 0..opts.samples {
        let cam = random_camera(&mut rng);
        let u = random_input(&mut rng);
        if kind.is_sliding_window() {
            let (x, f) = random_window(&mut rng, &cam, CLONES);
            let imu_only = VinsState {
                imu: x.imu.clone(),
                landmarks: vec![],
            };
            let dynamics = VinsDynamics {
                rep,
                gravity: g,
                landmarks: &[],
            };
            let (ffd, gfd) = fd_dynamics(&imu_only, &u, &g, rep)?;
            record(AuditMatrix::F, &ffd, &dynamics.f(&x.imu, &u));
            record(AuditMatrix::G, &gfd, &dynamics.g(&x.imu));
            record(AuditMatrix::J, &fd_clone(&x, &cam, rep)?, &clone_jacobian(&x.imu, &cam, x.error_dim(), rep));
            let obs: Vec<(usize, Vector2<f64>)> = (0..x.clones.len()).map(|k| (k, Vector2::zeros())).collect();
            let sys = track_jacobians(&x, &cam, &obs, &f, rep)?;
            let (afd, bfd) = fd_track(&x, &cam, &f, rep)?;
            record(AuditMatrix::A, &afd, &sys.hx);
            record(AuditMatrix::B, &bfd, &sys.hf);
            let [wd, m, n] = transform_pairs(&x, &g, rep, &mut rng)?;
            record(AuditMatrix::WD, &wd.1, &wd.0);
            record(AuditMatrix::M, &m.1, &m.0);
            record(AuditMatrix::N, &n.1, &n.0);
        } else {
            let x = random_visible_vins(&mut rng, &cam, LANDMARKS);
            let dynamics = VinsDynamics {
                rep,
                gravity: g,
                landmarks: &x.landmarks,
            };
            let (ffd, gfd) = fd_dynamics(&x, &u, &g, rep)?;
            record(AuditMatrix::F, &ffd, &dynamics.f(&x.imu, &u));
            record(AuditMatrix::G, &gfd, &dynamics.g(&x.imu));
            for i in 0..x.landmarks.len() {
                record(AuditMatrix::H, &fd_measurement(&x, &cam, i, rep)?, &measurement_jacobian(&x, &cam, i, rep)?);
            }
            let [wd, m, n] = transform_pairs(&x, &g, rep, &mut rng)?;
            record(AuditMatrix::WD, &wd.1, &wd.0);
            record(AuditMatrix::M, &m.1, &m.0);
            record(AuditMatrix::N, &n.1, &n.0);
        }
    }
    Ok(AuditReport {
        filter: kind,
        samples: opts.samples,
        entries: matrices
            .into_iter()
            .zip(worst)
            .map(|(matrix, max_rel_error)| AuditEntry { matrix, max_rel_error })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(sign_flip: Option<AuditMatrix>) -> AuditOptions {
        AuditOptions {
            samples: 10,
            seed: 3,
            sign_flip,
        }
    }

    #[test]
    fn all_filters_pass_at_default_tolerance() {
        for kind in FilterKind::ALL {
            let r = audit_jacobians(kind, &small(None)).unwrap();
            assert!(r.passes(1e-5), "{kind}: {r:?}");
            assert_eq!(r.entries.len(), AuditMatrix::for_filter(kind).len());
        }
    }

    #[test]
    fn sign_flip_is_detected() {
        let r = audit_jacobians(FilterKind::Riekf, &small(Some(AuditMatrix::H))).unwrap();
        let h = r.entries.iter().find(|e| e.matrix == AuditMatrix::H).unwrap();
        assert!(h.max_rel_error > 0.5);
        assert!(!r.passes(1e-5));
    }

    #[test]
    fn zero_samples_is_an_error() {
        let opts = AuditOptions {
            samples: 0,
            ..Default::default()
        };
        assert!(audit_jacobians(FilterKind::Msckf, &opts).is_err());
    }

    #[test]
    fn flow_matches_closed_form_for_constant_rates() {
        // zero accel with zero gravity: constant velocity, rotation exp(w t)
        let x = ImuState {
            velocity: Vector3::new(1.0, 2.0, 3.0),
            ..Default::default()
        };
        let u = ImuInput {
            gyro: Vector3::new(0.3, -0.2, 0.1),
            accel: Vector3::zeros(),
        };
        let y = flow(&x, &u, &[Vector3::zeros(); 4], &Vector3::zeros(), 0.01);
        assert!((y.position - Vector3::new(0.01, 0.02, 0.03)).amax() < 1e-15);
        assert!((y.rotation - exp_so3(&(u.gyro * 0.01))).amax() < 1e-12);
    }

    #[test]
    fn blockwise_sign_tolerates_flipped_blocks_only() {
        let a = DMatrix::from_fn(4, 6, |r, c| (r * 6 + c) as f64 + 1.0);
        let mut b = a.clone();
        b.columns_mut(0, 3).neg_mut();
        assert_eq!(relative_error_blockwise_sign(&a, &b), 0.0);
        assert!(relative_error(&a, &b) > 1.0);
        b[(0, 4)] += 1.0;
        assert!(relative_error_blockwise_sign(&a, &b) > 0.0);
    }
}
