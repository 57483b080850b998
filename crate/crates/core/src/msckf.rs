//! Sliding-window MSCKF on either error representation.
//!
//! The state holds the IMU plus up to `max_clones` camera poses. Landmarks
//! are never part of the state: each finished track is triangulated,
//! linearized, and projected onto the left null space of its landmark
//! Jacobian before a single stacked EKF update per frame.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector, Matrix2x3, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::camera::{CameraModel, Measurement};
use crate::ekf::{self, ImuSample, NoiseConfig, UpdateStatus};
use crate::error::{Error, Result};
use crate::lie::{skew, Pose};
use crate::state::{Belief, CloneState, ImuState, MsckfState, Representation, IMU_DIM, POSE_DIM};
use crate::triangulation::triangulate;
use crate::vins::VinsDynamics;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowConfig {
    pub max_clones: usize,
    pub min_track_len: usize,
    /// Per-track chi-square gate probability (e.g. 0.95); `None` disables it.
    pub chi2_gate: Option<f64>,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            max_clones: 10,
            min_track_len: 5,
            chi2_gate: None,
        }
    }
}

impl WindowConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_clones < 2 {
            return Err(Error::InvalidConfig("max_clones must be at least 2".into()));
        }
        if self.min_track_len < 2 {
            return Err(Error::InvalidConfig("min_track_len must be at least 2".into()));
        }
        if let Some(p) = self.chi2_gate {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::InvalidConfig("chi2_gate must lie in (0, 1)".into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTrack {
    pub landmark_id: usize,
    /// `(clone time, pixel)` in time order.
    pub observations: Vec<(f64, Vector2<f64>)>,
}

/// Camera pose of a new clone given the IMU state.
pub fn clone_mean(imu: &ImuState, cam: &CameraModel) -> Pose {
    cam.camera_pose(&imu.pose())
}

/// Jacobian of the new clone error with respect to the current error state
/// (`6 x dim`).
pub fn clone_jacobian(imu: &ImuState, cam: &CameraModel, dim: usize, rep: Representation) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(POSE_DIM, dim);
    let i3 = Matrix3::identity();
    match rep {
        Representation::RightInvariant => {
            j.fixed_view_mut::<3, 3>(0, 0).copy_from(&i3);
        }
        Representation::Conventional => {
            let ext = &cam.camera_in_imu;
            j.fixed_view_mut::<3, 3>(0, 0).copy_from(&ext.rotation.transpose());
            j.fixed_view_mut::<3, 3>(3, 0)
                .copy_from(&(-imu.rotation * skew(&ext.translation)));
        }
    }
    j.fixed_view_mut::<3, 3>(3, 6).copy_from(&i3);
    j
}

/// Appends a clone of the current camera pose at time `t`.
pub fn augment(belief: &Belief<MsckfState>, t: f64, cam: &CameraModel, rep: Representation) -> Belief<MsckfState> {
    let dim = belief.cov.nrows();
    let j = clone_jacobian(&belief.mean.imu, cam, dim, rep);
    let jp = &j * &belief.cov;
    let mut cov = DMatrix::zeros(dim + POSE_DIM, dim + POSE_DIM);
    cov.view_mut((0, 0), (dim, dim)).copy_from(&belief.cov);
    cov.view_mut((dim, 0), (POSE_DIM, dim)).copy_from(&jp);
    cov.view_mut((0, dim), (dim, POSE_DIM)).copy_from(&jp.transpose());
    cov.view_mut((dim, dim), (POSE_DIM, POSE_DIM))
        .copy_from(&(&jp * j.transpose()));
    ekf::symmetrize(&mut cov);
    let mut mean = belief.mean.clone();
    mean.clones.push(CloneState {
        time: t,
        pose: clone_mean(&belief.mean.imu, cam),
    });
    Belief { mean, cov }
}

/// Marginalizes the oldest clone.
pub fn prune_oldest(belief: &Belief<MsckfState>) -> Belief<MsckfState> {
    if belief.mean.clones.is_empty() {
        return belief.clone();
    }
    let at = MsckfState::clone_offset(0);
    let cov = belief.cov.clone().remove_rows(at, POSE_DIM).remove_columns(at, POSE_DIM);
    let mut mean = belief.mean.clone();
    mean.clones.remove(0);
    Belief { mean, cov }
}

/// Propagates the IMU block; clone blocks are static. Returns the IMU
/// transition matrix.
pub fn propagate_window(
    belief: &mut Belief<MsckfState>,
    samples: &[ImuSample],
    gravity: &Vector3<f64>,
    q: &DMatrix<f64>,
    rep: Representation,
) -> Result<DMatrix<f64>> {
    let dynamics = VinsDynamics {
        rep,
        gravity: *gravity,
        landmarks: &[],
    };
    let prop = ekf::propagate(&belief.mean.imu, samples, gravity, q, &dynamics)?;
    let dim = belief.cov.nrows();
    let rest = dim - IMU_DIM;
    let pii = belief.cov.view((0, 0), (IMU_DIM, IMU_DIM)).into_owned();
    let pic = belief.cov.view((0, IMU_DIM), (IMU_DIM, rest)).into_owned();
    let new_ii = &prop.phi * pii * prop.phi.transpose() + &prop.qd;
    let new_ic = &prop.phi * pic;
    belief.cov.view_mut((0, 0), (IMU_DIM, IMU_DIM)).copy_from(&new_ii);
    belief.cov.view_mut((0, IMU_DIM), (IMU_DIM, rest)).copy_from(&new_ic);
    belief.cov.view_mut((IMU_DIM, 0), (rest, IMU_DIM)).copy_from(&new_ic.transpose());
    ekf::symmetrize(&mut belief.cov);
    belief.mean.imu = prop.imu;
    Ok(prop.phi)
}

/// Linearized measurements of one track.
#[derive(Clone, Debug)]
pub struct TrackSystem {
    pub hx: DMatrix<f64>,
    pub hf: DMatrix<f64>,
    pub r: DVector<f64>,
}

/// Stacks `H_x`, `H_f` and residuals for observations `(clone index, uv)`
/// of a landmark estimated at `f`. The anchor is the first observing clone.
/// Observations behind their camera are dropped.
pub fn track_jacobians(
    x: &MsckfState,
    cam: &CameraModel,
    obs: &[(usize, Vector2<f64>)],
    f: &Vector3<f64>,
    rep: Representation,
) -> Result<TrackSystem> {
    let dim = IMU_DIM + POSE_DIM * x.clones.len();
    let anchor = obs.first().map(|o| o.0).ok_or(Error::Triangulation("empty track"))?;
    let mut rows = Vec::with_capacity(obs.len());
    for &(k, uv) in obs {
        let c = &x.clones.get(k).ok_or(Error::Dimension { expected: x.clones.len(), actual: k })?.pose;
        let rt = c.rotation.transpose();
        let y = rt * (f - c.translation);
        let Ok(zhat) = cam.project(&y) else { continue };
        let dpi: Matrix2x3<f64> = cam.projection_jacobian(&y);
        let hf = dpi * rt;
        let mut hx = DMatrix::zeros(2, dim);
        let ok = MsckfState::clone_offset(k);
        match rep {
            Representation::RightInvariant => {
                let sf = skew(f);
                let oa = MsckfState::clone_offset(anchor);
                let a = -(hf * sf);
                let mut th = hx.fixed_view_mut::<2, 3>(0, oa);
                th += a;
                let mut th = hx.fixed_view_mut::<2, 3>(0, ok);
                th += hf * sf;
            }
            Representation::Conventional => {
                hx.fixed_view_mut::<2, 3>(0, ok).copy_from(&(dpi * skew(&y)));
            }
        }
        hx.fixed_view_mut::<2, 3>(0, ok + 3).copy_from(&-hf);
        rows.push((hx, hf, uv - zhat));
    }
    let m = rows.len();
    let mut sys = TrackSystem {
        hx: DMatrix::zeros(2 * m, dim),
        hf: DMatrix::zeros(2 * m, 3),
        r: DVector::zeros(2 * m),
    };
    for (i, (hx, hf, r)) in rows.iter().enumerate() {
        sys.hx.rows_mut(2 * i, 2).copy_from(hx);
        sys.hf.fixed_view_mut::<2, 3>(2 * i, 0).copy_from(hf);
        sys.r.fixed_rows_mut::<2>(2 * i).copy_from(r);
    }
    Ok(sys)
}

/// Projects a track system onto the left null space of `H_f`. Returns
/// `None` when fewer than two observations remain.
pub fn nullspace_project(sys: &TrackSystem) -> Option<(DMatrix<f64>, DVector<f64>)> {
    let rows = sys.hf.nrows();
    if rows <= 3 {
        return None;
    }
    let dim = sys.hx.ncols();
    let qr = sys.hf.clone().qr();
    let mut aug = DMatrix::zeros(rows, dim + 1);
    aug.columns_mut(0, dim).copy_from(&sys.hx);
    aug.set_column(dim, &sys.r);
    qr.q_tr_mul(&mut aug);
    let kept = aug.rows(3, rows - 3);
    Some((kept.columns(0, dim).into_owned(), kept.column(dim).into_owned()))
}

/// Replaces a tall system `(H, r)` by an equivalent one with at most
/// `H.ncols()` rows. Isotropic measurement noise is preserved.
pub fn compress(h: DMatrix<f64>, r: DVector<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let (rows, dim) = h.shape();
    if rows <= dim {
        return (h, r);
    }
    let qr = h.clone().qr();
    let mut aug = DMatrix::zeros(rows, dim + 1);
    aug.columns_mut(0, dim).copy_from(&h);
    aug.set_column(dim, &r);
    qr.q_tr_mul(&mut aug);
    let top = aug.rows(0, dim);
    (top.columns(0, dim).into_owned(), top.column(dim).into_owned())
}

/// Summary of one camera frame.
#[derive(Clone, Debug)]
pub struct FrameReport {
    pub h: DMatrix<f64>,
    pub gain: Option<DMatrix<f64>>,
    pub status: UpdateStatus,
    pub tracks_used: usize,
    pub tracks_dropped: usize,
}

#[derive(Clone, Debug)]
pub struct MsckfFilter {
    pub rep: Representation,
    pub belief: Belief<MsckfState>,
    pub gravity: Vector3<f64>,
    pub noise: NoiseConfig,
    pub camera: CameraModel,
    pub window: WindowConfig,
    tracks: BTreeMap<usize, FeatureTrack>,
    q: DMatrix<f64>,
}

impl MsckfFilter {
    pub fn new(
        rep: Representation,
        imu: Belief<MsckfState>,
        gravity: Vector3<f64>,
        noise: NoiseConfig,
        camera: CameraModel,
        window: WindowConfig,
    ) -> Self {
        Self {
            rep,
            belief: imu,
            gravity,
            q: noise.q_matrix(),
            noise,
            camera,
            window,
            tracks: BTreeMap::new(),
        }
    }

    pub fn tracks(&self) -> impl Iterator<Item = &FeatureTrack> {
        self.tracks.values()
    }

    pub fn propagate(&mut self, samples: &[ImuSample]) -> Result<DMatrix<f64>> {
        propagate_window(&mut self.belief, samples, &self.gravity, &self.q, self.rep)
    }

    /// Updates with finished tracks, slides the window and clones the
    /// current pose at time `t`.
    pub fn process_frame(&mut self, t: f64, obs: &[Measurement]) -> Result<FrameReport> {
        let seen: BTreeSet<usize> = obs.iter().map(|m| m.landmark_id).collect();
        let full = self.belief.mean.clones.len() >= self.window.max_clones;
        let oldest = self.belief.mean.clones.first().map(|c| c.time);

        let mut ready = Vec::new();
        let mut finished = Vec::new();
        for (id, track) in self.tracks.iter_mut() {
            let long_enough = track.observations.len() >= self.window.min_track_len;
            let touches_oldest = full && track.observations.first().map(|o| o.0) == oldest;
            if !seen.contains(id) {
                finished.push(*id);
                if long_enough {
                    ready.push(track.clone());
                }
            } else if touches_oldest {
                if long_enough {
                    finished.push(*id);
                    ready.push(track.clone());
                } else {
                    track.observations.remove(0);
                }
            }
        }
        for id in finished {
            self.tracks.remove(&id);
        }
        self.tracks.retain(|_, t| !t.observations.is_empty());

        let report = self.update(&ready)?;
        if full {
            self.belief = prune_oldest(&self.belief);
        }
        self.belief = augment(&self.belief, t, &self.camera, self.rep);
        for m in obs {
            self.tracks
                .entry(m.landmark_id)
                .or_insert_with(|| FeatureTrack {
                    landmark_id: m.landmark_id,
                    observations: Vec::new(),
                })
                .observations
                .push((t, m.uv));
        }
        Ok(report)
    }

    /// Stacked null-space update over the given tracks.
    pub fn update(&mut self, tracks: &[FeatureTrack]) -> Result<FrameReport> {
        let x = &self.belief.mean;
        let dim = self.belief.cov.nrows();
        let sigma2 = self.noise.pixel_sigma * self.noise.pixel_sigma;
        let index: BTreeMap<u64, usize> = x.clones.iter().enumerate().map(|(i, c)| (c.time.to_bits(), i)).collect();

        let mut blocks: Vec<(DMatrix<f64>, DVector<f64>)> = Vec::new();
        let mut dropped = 0;
        for track in tracks {
            let obs: Vec<(usize, Vector2<f64>)> = track
                .observations
                .iter()
                .filter_map(|(t, uv)| index.get(&t.to_bits()).map(|&k| (k, *uv)))
                .collect();
            let views: Vec<(Pose, Vector2<f64>)> = obs.iter().map(|&(k, uv)| (x.clones[k].pose, uv)).collect();
            let Ok(f) = triangulate(&self.camera, &views) else {
                dropped += 1;
                continue;
            };
            let sys = track_jacobians(x, &self.camera, &obs, &f, self.rep)?;
            let Some((h, r)) = nullspace_project(&sys) else {
                dropped += 1;
                continue;
            };
            if let Some(p) = self.window.chi2_gate {
                if !self.passes_gate(&h, &r, sigma2, p) {
                    dropped += 1;
                    continue;
                }
            }
            blocks.push((h, r));
        }

        let rows: usize = blocks.iter().map(|b| b.0.nrows()).sum();
        let mut h = DMatrix::zeros(rows, dim);
        let mut r = DVector::zeros(rows);
        let mut at = 0;
        for (hb, rb) in &blocks {
            h.rows_mut(at, hb.nrows()).copy_from(hb);
            r.rows_mut(at, rb.len()).copy_from(rb);
            at += hb.nrows();
        }
        let (h, r) = compress(h, r);
        let v = DMatrix::identity(h.nrows(), h.nrows()) * sigma2;
        let out = ekf::ekf_update(&self.belief, &h, &r, &v, self.rep)?;
        self.belief = out.belief;
        Ok(FrameReport {
            h,
            gain: out.gain,
            status: out.status,
            tracks_used: blocks.len(),
            tracks_dropped: dropped,
        })
    }

    fn passes_gate(&self, h: &DMatrix<f64>, r: &DVector<f64>, sigma2: f64, p: f64) -> bool {
        let s = h * &self.belief.cov * h.transpose() + DMatrix::identity(h.nrows(), h.nrows()) * sigma2;
        let Some(chol) = s.cholesky() else { return false };
        let gamma = r.dot(&chol.solve(r));
        match ChiSquared::new(r.len() as f64) {
            Ok(dist) => gamma <= dist.inverse_cdf(p),
            Err(_) => false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie::exp_so3;
    use crate::state::testing::{rand_imu, rand_msckf, rng};
    use crate::state::{anchored_landmark_retract, pose_retract, ErrorState, FD_STEP};
    use rand::Rng;

    fn camera() -> CameraModel {
        CameraModel::default().with_extrinsics(Pose::new(
            exp_so3(&Vector3::new(0.1, -0.2, 0.05)),
            Vector3::new(0.05, -0.02, 0.01),
        ))
    }

    fn random_cov(r: &mut impl Rng, n: usize) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |_, _| r.random_range(-0.1..0.1));
        &a * a.transpose() + DMatrix::identity(n, n) * 1e-4
    }

    fn min_eig_ok(p: &DMatrix<f64>) -> bool {
        p.clone().symmetric_eigenvalues().min() >= -1e-9 * p.trace()
    }

    #[test]
    fn clone_jacobian_matches_finite_differences() {
        let cam = camera();
        let mut r = rng(1);
        for rep in [Representation::RightInvariant, Representation::Conventional] {
            for _ in 0..10 {
                let x = rand_msckf(&mut r, 2);
                let dim = x.error_dim();
                let j = clone_jacobian(&x.imu, &cam, dim, rep);
                let c0 = clone_mean(&x.imu, &cam);
                for col in 0..dim {
                    let mut e = vec![0.0; dim];
                    e[col] = FD_STEP;
                    let plus = crate::state::pose_inverse_retract(&c0, &clone_mean(&x.retract(&e, rep).unwrap().imu, &cam), rep).unwrap();
                    e[col] = -FD_STEP;
                    let minus = crate::state::pose_inverse_retract(&c0, &clone_mean(&x.retract(&e, rep).unwrap().imu, &cam), rep).unwrap();
                    for row in 0..6 {
                        let fd = (plus[row] - minus[row]) / (2.0 * FD_STEP);
                        assert!((fd - j[(row, col)]).abs() < 1e-6, "{rep:?} {row} {col}");
                    }
                }
            }
        }
    }

    #[test]
    fn right_invariant_clone_copies_orientation_covariance() {
        let mut r = rng(2);
        let x = MsckfState { imu: rand_imu(&mut r), clones: vec![] };
        let b = Belief::new(x, random_cov(&mut r, IMU_DIM)).unwrap();
        let a = augment(&b, 0.0, &camera(), Representation::RightInvariant);
        assert_eq!(a.cov.view((15, 15), (3, 3)), a.cov.view((0, 0), (3, 3)));
        assert!(min_eig_ok(&a.cov));
    }

    #[test]
    fn identity_extrinsics_clone_equals_imu_pose() {
        let mut r = rng(3);
        let x = MsckfState { imu: rand_imu(&mut r), clones: vec![] };
        let b = Belief::new(x.clone(), DMatrix::identity(IMU_DIM, IMU_DIM)).unwrap();
        let a = augment(&b, 1.5, &CameraModel::default(), Representation::Conventional);
        assert_eq!(a.mean.clones[0].pose, x.imu.pose());
        assert_eq!(a.mean.clones[0].time, 1.5);
    }

    #[test]
    fn pruning_takes_the_submatrix() {
        let mut r = rng(4);
        let x = rand_msckf(&mut r, 3);
        let cov = random_cov(&mut r, x.error_dim());
        let b = Belief::new(x.clone(), cov.clone()).unwrap();
        let p = prune_oldest(&b);
        assert_eq!(p.mean.clones, x.clones[1..].to_vec());
        assert_eq!(p.cov.view((0, 0), (15, 15)), cov.view((0, 0), (15, 15)));
        assert_eq!(p.cov.view((15, 15), (12, 12)), cov.view((21, 21), (12, 12)));
        assert_eq!(p.cov.view((0, 15), (15, 12)), cov.view((0, 21), (15, 12)));
    }

    #[test]
    fn zero_motion_leaves_clone_blocks() {
        let mut r = rng(5);
        let mut x = rand_msckf(&mut r, 2);
        x.imu = ImuState::default();
        let g = Vector3::new(0.0, 0.0, -9.81);
        let cov = random_cov(&mut r, x.error_dim());
        let mut b = Belief::new(x, cov.clone()).unwrap();
        let samples: Vec<_> = (0..5)
            .map(|k| ImuSample { t: k as f64 * 0.005, gyro: Vector3::zeros(), accel: -g })
            .collect();
        let q = DMatrix::zeros(12, 12);
        let phi = propagate_window(&mut b, &samples, &g, &q, Representation::RightInvariant).unwrap();
        assert_eq!(b.cov.view((15, 15), (12, 12)), cov.view((15, 15), (12, 12)));
        let expected = &phi * cov.view((0, 15), (15, 12));
        assert!((b.cov.view((0, 15), (15, 12)) - expected).amax() < 1e-15);
    }

    /// World landmark visible from every clone.
    fn scene(seed: u64) -> (MsckfState, Vector3<f64>) {
        let mut r = rng(seed);
        let imu = rand_imu(&mut r);
        let f = imu.position + imu.rotation * Vector3::new(0.2, -0.1, 4.0);
        let clones = (0..4)
            .map(|k| {
                let p = imu.position + imu.rotation * Vector3::new(0.2 * k as f64, 0.05 * k as f64, 0.0);
                let rot = imu.rotation * exp_so3(&Vector3::new(0.0, 0.02 * k as f64, 0.0));
                CloneState { time: k as f64, pose: Pose::new(rot, p) }
            })
            .collect();
        (MsckfState { imu, clones }, f)
    }

    fn predicted(x: &MsckfState, cam: &CameraModel, k: usize, f: &Vector3<f64>) -> Vector2<f64> {
        let c = &x.clones[k].pose;
        cam.project(&(c.rotation.transpose() * (f - c.translation))).unwrap()
    }

    #[test]
    fn track_jacobians_match_anchored_finite_differences() {
        let cam = CameraModel::default();
        for rep in [Representation::RightInvariant, Representation::Conventional] {
            for seed in 0..5 {
                let (x, f) = scene(10 + seed);
                let obs: Vec<_> = (1..4).map(|k| (k, Vector2::zeros())).collect();
                let sys = track_jacobians(&x, &cam, &obs, &f, rep).unwrap();
                let dim = x.error_dim();
                let anchor = 1;
                // full perturbation vector [state error, landmark error]
                let eval = |e: &[f64]| -> DVector<f64> {
                    let y = x.retract(&e[..dim], rep).unwrap();
                    let oa = MsckfState::clone_offset(anchor);
                    let mut e9 = [0.0; 9];
                    e9[..6].copy_from_slice(&e[oa..oa + 6]);
                    e9[6..].copy_from_slice(&e[dim..]);
                    let (_, fy) = anchored_landmark_retract(&x.clones[anchor].pose, &f, &e9, rep);
                    let mut out = DVector::zeros(6);
                    for (i, &(k, _)) in obs.iter().enumerate() {
                        out.fixed_rows_mut::<2>(2 * i).copy_from(&predicted(&y, &cam, k, &fy));
                    }
                    out
                };
                for col in 0..dim + 3 {
                    let mut e = vec![0.0; dim + 3];
                    e[col] = FD_STEP;
                    let plus = eval(&e);
                    e[col] = -FD_STEP;
                    let minus = eval(&e);
                    let fd = (plus - minus) / (2.0 * FD_STEP);
                    let analytic = if col < dim { sys.hx.column(col).into_owned() } else { sys.hf.column(col - dim).into_owned() };
                    let scale = sys.hx.amax().max(1.0);
                    assert!((fd - analytic).amax() / scale < 1e-5, "{rep:?} col {col}");
                }
            }
        }
    }

    #[test]
    fn anchor_theta_columns_cancel_on_self_observation() {
        let (x, f) = scene(20);
        let obs: Vec<_> = (0..3).map(|k| (k, Vector2::zeros())).collect();
        let sys = track_jacobians(&x, &CameraModel::default(), &obs, &f, Representation::RightInvariant).unwrap();
        let o = MsckfState::clone_offset(0);
        assert!(sys.hx.view((0, o), (2, 3)).amax() < 1e-12);
        let rt = x.clones[0].pose.rotation.transpose();
        let y = rt * (f - x.clones[0].pose.translation);
        let expected = -(CameraModel::default().projection_jacobian(&y) * rt);
        assert!((sys.hx.view((0, o + 3), (2, 3)) - expected).amax() < 1e-12);
    }

    #[test]
    fn nullspace_removes_landmark() {
        let (x, f) = scene(21);
        let cam = CameraModel::default();
        let obs: Vec<_> = (0..4).map(|k| (k, predicted(&x, &cam, k, &f) + Vector2::new(0.5, -0.3))).collect();
        let sys = track_jacobians(&x, &cam, &obs, &f, Representation::RightInvariant).unwrap();
        let qr = sys.hf.clone().qr();
        let mut hf = sys.hf.clone();
        qr.q_tr_mul(&mut hf);
        assert!(hf.rows(3, 5).amax() < 1e-12);
        let (h, r) = nullspace_project(&sys).unwrap();
        assert_eq!(h.nrows(), 5);
        assert_eq!(r.len(), 5);
        // orthonormal projector: rows of Q2^T are orthonormal
        let mut eye = DMatrix::<f64>::identity(8, 8);
        qr.q_tr_mul(&mut eye);
        let q2t = eye.rows(3, 5).into_owned();
        assert!((&q2t * q2t.transpose() - DMatrix::identity(5, 5)).amax() < 1e-12);
    }

    #[test]
    fn short_track_is_skipped() {
        let (x, f) = scene(22);
        let sys = track_jacobians(&x, &CameraModel::default(), &[(0, Vector2::zeros())], &f, Representation::Conventional).unwrap();
        assert!(nullspace_project(&sys).is_none());
    }

    #[test]
    fn compression_preserves_information() {
        let mut r = rng(6);
        let h = DMatrix::from_fn(40, 9, |_, _| r.random_range(-1.0..1.0));
        let res = DVector::from_fn(40, |_, _| r.random_range(-1.0..1.0));
        let (hc, rc) = compress(h.clone(), res.clone());
        assert_eq!(hc.nrows(), 9);
        assert!((hc.transpose() * &hc - h.transpose() * &h).amax() < 1e-10);
        assert!((hc.transpose() * rc - h.transpose() * res).amax() < 1e-10);
    }

    #[test]
    fn pose_retract_is_used_for_clones() {
        let mut r = rng(7);
        let x = rand_msckf(&mut r, 1);
        let mut e = vec![0.0; x.error_dim()];
        e[15..21].copy_from_slice(&[0.01, 0.02, -0.01, 0.1, 0.0, 0.2]);
        let y = x.retract(&e, Representation::RightInvariant).unwrap();
        assert_eq!(y.clones[0].pose, pose_retract(&x.clones[0].pose, &e[15..21], Representation::RightInvariant));
    }

    #[test]
    fn window_never_exceeds_limit() {
        let mut r = rng(8);
        let x = MsckfState { imu: rand_imu(&mut r), clones: vec![] };
        let b = Belief::new(x, DMatrix::identity(IMU_DIM, IMU_DIM) * 1e-4).unwrap();
        let mut filter = MsckfFilter::new(
            Representation::RightInvariant,
            b,
            Vector3::new(0.0, 0.0, -9.81),
            NoiseConfig::default(),
            camera(),
            WindowConfig { max_clones: 4, ..Default::default() },
        );
        for k in 0..10 {
            filter.process_frame(k as f64, &[]).unwrap();
            assert!(filter.belief.mean.clones.len() <= 4);
            let times: Vec<f64> = filter.belief.mean.clones.iter().map(|c| c.time).collect();
            assert!(times.windows(2).all(|w| w[0] < w[1]));
        }
        assert_eq!(filter.belief.mean.clones.len(), 4);
        assert_eq!(filter.belief.mean.clones[0].time, 6.0);
    }
}
