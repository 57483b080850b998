//! Estimation error, NEES and cross-run aggregation.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::state::{ImuState, Representation};

const POSE_INDICES: [usize; 6] = [0, 1, 2, 6, 7, 8];

/// `e^T P^-1 e`; infinite when `P` is not positive definite.
pub fn nees(e: &DVector<f64>, p: &DMatrix<f64>) -> f64 {
    match p.clone().cholesky() {
        Some(c) => e.dot(&c.solve(e)),
        None => f64::INFINITY,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepError {
    /// Rotation angle between truth and estimate (rad).
    pub ori: f64,
    /// Position error norm (m).
    pub pos: f64,
    pub nees_ori: f64,
    pub nees_pose: f64,
}

/// Error of `est` against `truth` in the filter's own coordinates, so that
/// `truth = est ⊕ e`. `cov` is the covariance whose leading 15x15 block
/// belongs to the IMU state.
pub fn step_error(truth: &ImuState, est: &ImuState, cov: &DMatrix<f64>, rep: Representation) -> Result<StepError> {
    let e = est.inverse_retract(truth, rep)?;
    let e_ori = e.rows(0, 3).into_owned();
    let p_ori = cov.view((0, 0), (3, 3)).into_owned();
    let e_pose = DVector::from_iterator(6, POSE_INDICES.iter().map(|&i| e[i]));
    let p_pose = DMatrix::from_fn(6, 6, |r, c| cov[(POSE_INDICES[r], POSE_INDICES[c])]);
    Ok(StepError {
        ori: e_ori.norm(),
        pos: (truth.position - est.position).norm(),
        nees_ori: nees(&e_ori, &p_ori),
        nees_pose: nees(&e_pose, &p_pose),
    })
}

/// Per-step errors of one filter over one run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub t: Vec<f64>,
    pub steps: Vec<StepError>,
}

impl RunMetrics {
    pub fn push(&mut self, t: f64, e: StepError) {
        self.t.push(t);
        self.steps.push(e);
    }
}

/// Root mean square errors and average NEES across runs at each step.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub t: Vec<f64>,
    pub rms_ori: Vec<f64>,
    pub rms_pos: Vec<f64>,
    pub nees_ori: Vec<f64>,
    pub nees_pose: Vec<f64>,
}

impl Aggregate {
    fn time_average(v: &[f64]) -> f64 {
        v.iter().sum::<f64>() / v.len().max(1) as f64
    }

    pub fn mean_nees_ori(&self) -> f64 {
        Self::time_average(&self.nees_ori)
    }

    pub fn mean_nees_pose(&self) -> f64 {
        Self::time_average(&self.nees_pose)
    }
}

/// Aggregates runs of equal length step by step.
pub fn aggregate(runs: &[RunMetrics]) -> Aggregate {
    let Some(first) = runs.first() else {
        return Aggregate::default();
    };
    let steps = runs.iter().map(|r| r.steps.len()).min().unwrap_or(0);
    let n = runs.len() as f64;
    let mut out = Aggregate {
        t: first.t[..steps].to_vec(),
        ..Default::default()
    };
    for k in 0..steps {
        let col = runs.iter().map(|r| &r.steps[k]);
        let (mut so, mut sp, mut no, mut np) = (0.0, 0.0, 0.0, 0.0);
        for s in col {
            so += s.ori * s.ori;
            sp += s.pos * s.pos;
            no += s.nees_ori;
            np += s.nees_pose;
        }
        out.rms_ori.push((so / n).sqrt());
        out.rms_pos.push((sp / n).sqrt());
        out.nees_ori.push(no / n);
        out.nees_pose.push(np / n);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::testing::{rand_imu, rng};
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn perfect_estimate_has_zero_error() {
        let mut r = rng(1);
        let x = rand_imu(&mut r);
        let cov = DMatrix::identity(15, 15) * 1e-3;
        for rep in [Representation::Conventional, Representation::RightInvariant] {
            let e = step_error(&x, &x, &cov, rep).unwrap();
            assert_eq!(e, StepError { ori: 0.0, pos: 0.0, nees_ori: 0.0, nees_pose: 0.0 });
        }
    }

    #[test]
    fn nees_is_chi_square_calibrated() {
        let mut r = rng(2);
        for dim in [3usize, 6] {
            let a = DMatrix::from_fn(dim, dim, |_, _| r.random_range(-1.0..1.0));
            let p = &a * a.transpose() + DMatrix::identity(dim, dim) * 0.1;
            let l = p.clone().cholesky().unwrap().l();
            let n = 10_000;
            let mean = (0..n)
                .map(|_| {
                    let z = DVector::from_fn(dim, |_, _| r.sample::<f64, _>(StandardNormal));
                    nees(&(&l * z), &p)
                })
                .sum::<f64>()
                / n as f64;
            assert!((mean / dim as f64 - 1.0).abs() < 0.1, "{dim}: {mean}");
        }
    }

    #[test]
    fn aggregation_is_rms_and_mean() {
        let mk = |o: f64, p: f64, n: f64| {
            let mut m = RunMetrics::default();
            m.push(0.0, StepError { ori: o, pos: p, nees_ori: n, nees_pose: 2.0 * n });
            m
        };
        let a = aggregate(&[mk(3.0, 1.0, 2.0), mk(4.0, 1.0, 4.0)]);
        assert!((a.rms_ori[0] - (12.5f64).sqrt()).abs() < 1e-15);
        assert_eq!(a.rms_pos[0], 1.0);
        assert_eq!(a.nees_ori[0], 3.0);
        assert_eq!(a.nees_pose[0], 6.0);
    }
}
