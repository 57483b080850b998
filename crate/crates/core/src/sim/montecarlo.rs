//! Monte Carlo runs of several filters on shared measurement streams.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, Vector3};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{aggregate, generate_landmarks, step_error, synthesize_camera, synthesize_imu, Aggregate, Frame, ImuStream, RunMetrics, ScenarioConfig, Trajectory};
use crate::ekf::NoiseConfig;
use crate::error::{Error, Result};
use crate::msckf::{MsckfFilter, WindowConfig};
use crate::state::{Belief, MsckfState, Representation, VinsState, IMU_DIM};
use crate::vins::VinsFilter;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterKind {
    Msckf,
    RiMsckf,
    Conekf,
    Riekf,
}

impl FilterKind {
    pub const ALL: [FilterKind; 4] = [FilterKind::Msckf, FilterKind::RiMsckf, FilterKind::Conekf, FilterKind::Riekf];

    pub fn name(self) -> &'static str {
        match self {
            FilterKind::Msckf => "msckf",
            FilterKind::RiMsckf => "ri-msckf",
            FilterKind::Conekf => "conekf",
            FilterKind::Riekf => "riekf",
        }
    }

    pub fn representation(self) -> Representation {
        match self {
            FilterKind::Msckf | FilterKind::Conekf => Representation::Conventional,
            FilterKind::RiMsckf | FilterKind::Riekf => Representation::RightInvariant,
        }
    }

    pub fn is_sliding_window(self) -> bool {
        matches!(self, FilterKind::Msckf | FilterKind::RiMsckf)
    }
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for FilterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FilterKind::ALL
            .into_iter()
            .find(|k| k.name() == s.trim())
            .ok_or_else(|| Error::InvalidConfig(format!("unknown filter '{s}' (expected msckf, ri-msckf, conekf or riekf)")))
    }
}

/// Full description of a Monte Carlo experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub scenario: ScenarioConfig,
    pub window: WindowConfig,
    /// Variance placed on every diagonal entry of the initial covariance.
    pub initial_variance: f64,
    pub runs: usize,
    pub filters: Vec<FilterKind>,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig::default(),
            window: WindowConfig::default(),
            initial_variance: 1e-6,
            runs: 50,
            filters: vec![FilterKind::Msckf, FilterKind::RiMsckf],
        }
    }
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.window.validate()?;
        if !(self.initial_variance > 0.0) {
            return Err(Error::InvalidConfig("initial_variance must be positive".into()));
        }
        if self.filters.is_empty() {
            return Err(Error::InvalidConfig("no filters selected".into()));
        }
        Ok(())
    }

    /// Noise seed of each run, derived from the scenario seed.
    pub fn run_seeds(&self) -> Vec<u64> {
        (0..self.runs as u64)
            .map(|k| {
                let mut rng = ChaCha8Rng::seed_from_u64(self.scenario.seed);
                rng.set_stream(k + 1);
                rng.next_u64()
            })
            .collect()
    }
}

/// Measurements and ground truth of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub imu: ImuStream,
    pub frames: Vec<Frame>,
}

pub fn scenario_landmarks(cfg: &ScenarioConfig) -> Vec<Vector3<f64>> {
    generate_landmarks(cfg, &mut ChaCha8Rng::seed_from_u64(cfg.seed))
}

pub fn simulate_dataset(cfg: &ScenarioConfig, landmarks: &[Vector3<f64>], seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let traj = Trajectory::from_config(cfg);
    let imu = synthesize_imu(&traj, cfg, &mut rng);
    let frames = synthesize_camera(&imu, landmarks, &cfg.camera, cfg, &mut rng);
    Dataset { imu, frames }
}

/// Runs one filter over a dataset starting from the true initial state with
/// zero bias estimates and covariance `initial_variance * I`.
/// `landmarks` seeds the state of the landmark-based filters and is ignored
/// by the sliding-window ones.
pub fn run_filter(
    kind: FilterKind,
    cfg: &ScenarioConfig,
    window: &WindowConfig,
    initial_variance: f64,
    filter_noise: &NoiseConfig,
    data: &Dataset,
    landmarks: &[Vector3<f64>],
) -> Result<RunMetrics> {
    let rep = kind.representation();
    let mut imu0 = data.imu.truth[0].clone();
    imu0.gyro_bias = Vector3::zeros();
    imu0.accel_bias = Vector3::zeros();
    let mut metrics = RunMetrics::default();
    let frames = &data.frames;
    let window_of = |j: usize| &data.imu.samples[frames[j - 1].imu_index..=frames[j].imu_index];

    if kind.is_sliding_window() {
        let belief = Belief::new(
            MsckfState { imu: imu0, clones: vec![] },
            DMatrix::identity(IMU_DIM, IMU_DIM) * initial_variance,
        )?;
        let mut f = MsckfFilter::new(rep, belief, cfg.gravity, *filter_noise, cfg.camera, *window);
        for (j, frame) in frames.iter().enumerate() {
            if j > 0 {
                f.propagate(window_of(j))?;
            }
            f.process_frame(frame.t, &frame.measurements)?;
            let truth = &data.imu.truth[frame.imu_index];
            metrics.push(frame.t, step_error(truth, &f.belief.mean.imu, &f.belief.cov, rep)?);
        }
    } else {
        let dim = IMU_DIM + 3 * landmarks.len();
        let belief = Belief::new(
            VinsState { imu: imu0, landmarks: landmarks.to_vec() },
            DMatrix::identity(dim, dim) * initial_variance,
        )?;
        let mut f = VinsFilter::new(rep, belief, cfg.gravity, *filter_noise, cfg.camera);
        for (j, frame) in frames.iter().enumerate() {
            if j > 0 {
                f.propagate(window_of(j))?;
            }
            let obs: Vec<_> = frame.measurements.iter().copied().filter(|m| m.landmark_id < landmarks.len()).collect();
            f.update(&obs)?;
            let truth = &data.imu.truth[frame.imu_index];
            metrics.push(frame.t, step_error(truth, &f.belief.mean.imu, &f.belief.cov, rep)?);
        }
    }
    Ok(metrics)
}

#[derive(Clone, Debug, PartialEq)]
pub struct McResult {
    pub run_seeds: Vec<u64>,
    /// `runs[k][i]` belongs to run `k` and filter `cfg.filters[i]`.
    pub runs: Vec<Vec<RunMetrics>>,
    /// One per filter, in `cfg.filters` order.
    pub aggregates: Vec<Aggregate>,
}

fn one_run(cfg: &McConfig, landmarks: &[Vector3<f64>], seed: u64) -> Result<Vec<RunMetrics>> {
    let data = simulate_dataset(&cfg.scenario, landmarks, seed);
    cfg.filters
        .iter()
        .map(|&kind| {
            run_filter(kind, &cfg.scenario, &cfg.window, cfg.initial_variance, &cfg.scenario.noise, &data, landmarks)
        })
        .collect()
}

#[cfg(feature = "parallel")]
fn map_runs<T, F>(seeds: &[u64], threads: Option<usize>, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    pool.install(|| seeds.par_iter().map(|&s| f(s)).collect())
}

#[cfg(not(feature = "parallel"))]
fn map_runs<T, F>(seeds: &[u64], _threads: Option<usize>, f: F) -> Result<Vec<T>>
where
    F: Fn(u64) -> Result<T>,
{
    seeds.iter().map(|&s| f(s)).collect()
}

/// Runs `cfg.runs` independent noise realizations over the same trajectory
/// and landmarks. Results do not depend on `threads`.
pub fn run_monte_carlo(cfg: &McConfig, threads: Option<usize>) -> Result<McResult> {
    cfg.validate()?;
    if cfg.filters.iter().any(|k| !k.is_sliding_window()) {
        return Err(Error::InvalidConfig(
            "Monte Carlo runs support the sliding-window filters (msckf, ri-msckf) only".into(),
        ));
    }
    let landmarks = scenario_landmarks(&cfg.scenario);
    let run_seeds = cfg.run_seeds();
    let runs = map_runs(&run_seeds, threads, |seed| one_run(cfg, &landmarks, seed))?;
    let aggregates = (0..cfg.filters.len())
        .map(|i| aggregate(&runs.iter().map(|r| r[i].clone()).collect::<Vec<_>>()))
        .collect();
    Ok(McResult { run_seeds, runs, aggregates })
}
