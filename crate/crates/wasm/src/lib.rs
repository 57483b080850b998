//! Browser bindings for three experiments: the Jacobian audit, a twin
//! invariance run and a small Monte Carlo comparison. Each returns JSON.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use ivins::audit::{audit_jacobians, AuditOptions};
use ivins::invariance::{judge, lab_transform, run_twin_experiment, LabScenario, TwinMode};
use ivins::sim::{run_monte_carlo, FilterKind, McConfig};

pub const MAX_SAMPLES: u32 = 500;
pub const MAX_STEPS: u32 = 1000;
pub const MAX_RUNS: u32 = 50;
pub const MAX_DURATION: f64 = 120.0;

fn bounded<T: PartialOrd + std::fmt::Display>(name: &str, v: T, lo: T, hi: T) -> Result<T, String> {
    if v < lo || v > hi {
        Err(format!("{name} must be between {lo} and {hi}"))
    } else {
        Ok(v)
    }
}

#[derive(Serialize)]
struct AuditRow {
    matrix: &'static str,
    max_rel_error: f64,
}

pub fn audit_json(filter: &str, samples: u32, seed: u64) -> Result<String, String> {
    let kind: FilterKind = filter.parse().map_err(|e: ivins::Error| e.to_string())?;
    let samples = bounded("samples", samples, 1, MAX_SAMPLES)?;
    let opts = AuditOptions { samples: samples as usize, seed, sign_flip: None };
    let report = audit_jacobians(kind, &opts).map_err(|e| e.to_string())?;
    let rows: Vec<_> = report
        .entries
        .iter()
        .map(|e| AuditRow { matrix: e.matrix.name(), max_rel_error: e.max_rel_error })
        .collect();
    serde_json::to_string(&rows).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct TwinJson {
    verdict: &'static str,
    max_divergence: f64,
    t: Vec<f64>,
    divergence_mean: Vec<f64>,
    divergence_meas: Vec<f64>,
    residual: Vec<f64>,
}

pub fn twin_json(filter: &str, mode: &str, steps: u32, seed: u64) -> Result<String, String> {
    let kind: FilterKind = filter.parse().map_err(|e: ivins::Error| e.to_string())?;
    let mode: TwinMode = mode.parse().map_err(|e: ivins::Error| e.to_string())?;
    let steps = bounded("steps", steps, 1, MAX_STEPS)?;
    let lab = LabScenario::new(seed, steps as usize);
    let t = lab_transform(mode, seed);
    let trace = run_twin_experiment(kind, &lab, &t, mode).map_err(|e| e.to_string())?;
    let out = TwinJson {
        verdict: judge(kind, mode, &t, &trace).label(),
        max_divergence: trace.max_divergence(),
        t: trace.steps.iter().map(|s| s.t).collect(),
        divergence_mean: trace.steps.iter().map(|s| s.divergence_mean).collect(),
        divergence_meas: trace.steps.iter().map(|s| s.divergence_meas).collect(),
        residual: trace.steps.iter().map(|s| s.residual).collect(),
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct Curves {
    filter: &'static str,
    mean_nees_ori: f64,
    mean_nees_pose: f64,
    rms_ori: Vec<f64>,
    rms_pos: Vec<f64>,
    nees_ori: Vec<f64>,
    nees_pose: Vec<f64>,
}

#[derive(Serialize)]
struct MonteCarloJson {
    t: Vec<f64>,
    filters: Vec<Curves>,
}

pub fn monte_carlo_json(runs: u32, duration: f64, seed: u64) -> Result<String, String> {
    let runs = bounded("runs", runs, 1, MAX_RUNS)?;
    let duration = bounded("duration", duration, 0.5, MAX_DURATION)?;
    let mut cfg = McConfig { runs: runs as usize, ..Default::default() };
    cfg.scenario.duration = duration;
    cfg.scenario.seed = seed;
    let res = run_monte_carlo(&cfg, Some(1)).map_err(|e| e.to_string())?;
    let out = MonteCarloJson {
        t: res.aggregates.first().map(|a| a.t.clone()).unwrap_or_default(),
        filters: cfg
            .filters
            .iter()
            .zip(res.aggregates)
            .map(|(k, a)| Curves {
                filter: k.name(),
                mean_nees_ori: a.mean_nees_ori(),
                mean_nees_pose: a.mean_nees_pose(),
                rms_ori: a.rms_ori,
                rms_pos: a.rms_pos,
                nees_ori: a.nees_ori,
                nees_pose: a.nees_pose,
            })
            .collect(),
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

/// Largest relative finite-difference error of every Jacobian of `filter`.
#[wasm_bindgen(js_name = auditJacobians)]
pub fn audit_jacobians_js(filter: &str, samples: u32, seed: u64) -> Result<String, JsError> {
    audit_json(filter, samples, seed).map_err(|e| JsError::new(&e))
}

/// Twin run under a random unobservable transformation.
#[wasm_bindgen(js_name = twinExperiment)]
pub fn twin_experiment_js(filter: &str, mode: &str, steps: u32, seed: u64) -> Result<String, JsError> {
    twin_json(filter, mode, steps, seed).map_err(|e| JsError::new(&e))
}

/// MSCKF against RI-MSCKF on the circular scenario.
#[wasm_bindgen(js_name = monteCarlo)]
pub fn monte_carlo_js(runs: u32, duration: f64, seed: u64) -> Result<String, JsError> {
    monte_carlo_json(runs, duration, seed).map_err(|e| JsError::new(&e))
}
