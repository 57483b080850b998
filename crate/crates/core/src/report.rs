//! CSV and JSON outputs. CSV files use a header row, `.` decimals and LF
//! line endings; numbers are printed in shortest round-trip form.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::Settings;
use crate::error::Result;
use crate::invariance::TwinTrace;
use crate::sim::{FilterKind, McConfig, McResult, RunMetrics};

pub const AGGREGATE_HEADER: &str = "t,filter,rms_ori,rms_pos,nees_ori,nees_pose";
pub const RUN_HEADER: &str = "t,filter,err_ori,err_pos,nees_ori,nees_pose";
pub const INVARIANCE_HEADER: &str = "step,residual,divergence_mean,divergence_meas";

/// Rows grouped by filter, in time order within each filter.
pub fn aggregate_csv(filters: &[FilterKind], result: &McResult) -> String {
    let mut out = format!("{AGGREGATE_HEADER}\n");
    for (kind, a) in filters.iter().zip(&result.aggregates) {
        for k in 0..a.t.len() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                a.t[k], kind, a.rms_ori[k], a.rms_pos[k], a.nees_ori[k], a.nees_pose[k]
            );
        }
    }
    out
}

/// Per-step errors of one run, rows grouped by filter.
pub fn run_csv(filters: &[FilterKind], runs: &[RunMetrics]) -> String {
    let mut out = format!("{RUN_HEADER}\n");
    for (kind, m) in filters.iter().zip(runs) {
        for (t, s) in m.t.iter().zip(&m.steps) {
            let _ = writeln!(out, "{},{},{},{},{},{}", t, kind, s.ori, s.pos, s.nees_ori, s.nees_pose);
        }
    }
    out
}

pub fn invariance_csv(trace: &TwinTrace) -> String {
    let mut out = format!("{INVARIANCE_HEADER}\n");
    for s in &trace.steps {
        let _ = writeln!(out, "{},{},{},{}", s.step, s.residual, s.divergence_mean, s.divergence_meas);
    }
    out
}

/// Everything needed to reproduce a Monte Carlo output directory.
#[derive(Clone, Debug, Serialize)]
pub struct Manifest<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    /// Resolved configuration in config-file syntax.
    pub config_text: String,
    pub config: &'a McConfig,
    pub run_seeds: &'a [u64],
    pub files: Vec<String>,
}

/// Writes `aggregate.csv`, `run_<k>.csv` and `manifest.json` into `dir`
/// and returns the written paths.
pub fn write_monte_carlo(dir: &Path, settings: &Settings, result: &McResult) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let filters = &settings.mc.filters;
    let mut files = vec![("aggregate.csv".to_string(), aggregate_csv(filters, result))];
    for (k, runs) in result.runs.iter().enumerate() {
        files.push((format!("run_{k}.csv"), run_csv(filters, runs)));
    }
    let manifest = Manifest {
        tool: "ivins",
        version: env!("CARGO_PKG_VERSION"),
        config_text: settings.render(),
        config: &settings.mc,
        run_seeds: &result.run_seeds,
        files: files.iter().map(|f| f.0.clone()).collect(),
    };
    files.push(("manifest.json".into(), serde_json::to_string_pretty(&manifest)? + "\n"));
    let mut written = Vec::with_capacity(files.len());
    for (name, body) in files {
        let path = dir.join(name);
        std::fs::write(&path, body)?;
        written.push(path);
    }
    Ok(written)
}
