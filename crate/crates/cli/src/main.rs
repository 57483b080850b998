//! Command-line driver for the Monte Carlo harness, the invariance lab and
//! the Jacobian audit.
//!
//! Exit codes: 0 success, 1 experiment-level failure, 2 usage or config
//! error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ivins::audit::{audit_jacobians, AuditMatrix, AuditOptions};
use ivins::config::{parse_filters, Settings};
use ivins::invariance::{judge, lab_transform, run_twin_experiment, LabScenario, TwinMode, Verdict};
use ivins::report::{invariance_csv, write_monte_carlo};
use ivins::sim::{run_monte_carlo, FilterKind};
use ivins::state::UnobsTransform;
use ivins::Error;

const THREADS_ENV: &str = "IVINS_THREADS";

#[derive(Parser)]
#[command(name = "ivins", version, about = "Visual-inertial filters and invariance experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo comparison of sliding-window filters.
    Simulate {
        /// Flat `key = value` config file.
        #[arg(long)]
        config: PathBuf,
        /// Number of runs (default 50 unless set in the config).
        #[arg(long)]
        runs: Option<usize>,
        /// Scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Comma-separated filter names.
        #[arg(long)]
        filters: Option<String>,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Twin experiment on the short lab scenario.
    Invariance {
        #[arg(long)]
        filter: FilterKind,
        /// deterministic, stochastic-identity or full.
        #[arg(long)]
        mode: TwinMode,
        #[arg(long, default_value_t = 200)]
        steps: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Use the identity transformation instead of a random one.
        #[arg(long)]
        identity: bool,
        /// CSV file for the per-step trace.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Finite-difference audit of the analytic Jacobians.
    Jacobians {
        /// Filter to audit; all filters when omitted.
        #[arg(long)]
        filter: Option<FilterKind>,
        #[arg(long, default_value_t = 100)]
        samples: usize,
        #[arg(long, default_value_t = 1e-5)]
        tol: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Negate one analytic matrix to check that the audit catches it.
        #[arg(long, hide = true)]
        inject_sign_flip: Option<AuditMatrix>,
    },
}

enum Failure {
    Usage(String),
    Experiment(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::ConfigLine { .. } | Error::InvalidConfig(_) => Failure::Usage(e.to_string()),
            other => Failure::Experiment(other.to_string()),
        }
    }
}

fn env_threads() -> Result<Option<usize>, Failure> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Failure::Usage(format!("{THREADS_ENV} must be a positive integer, got '{v}'"))),
        },
        Err(_) => Ok(None),
    }
}

fn simulate(
    config: PathBuf,
    runs: Option<usize>,
    seed: Option<u64>,
    filters: Option<String>,
    out: PathBuf,
) -> Result<(), Failure> {
    let text = std::fs::read_to_string(&config)
        .map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", config.display())))?;
    let mut settings = Settings::parse(&text)?;
    if let Some(r) = runs {
        settings.mc.runs = r;
    }
    if let Some(s) = seed {
        settings.mc.scenario.seed = s;
    }
    if let Some(f) = filters {
        settings.mc.filters = parse_filters(&f).map_err(Failure::Usage)?;
    }
    let threads = match (env_threads()?, settings.threads) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, b) => a.or(b),
    };
    let result = run_monte_carlo(&settings.mc, threads)?;
    write_monte_carlo(&out, &settings, &result)?;
    println!("{} runs written to {}", settings.mc.runs, out.display());
    for (kind, a) in settings.mc.filters.iter().zip(&result.aggregates) {
        let last = a.t.len().saturating_sub(1);
        println!(
            "{kind:>9}: mean NEES ori {:.3} pose {:.3}, final RMS ori {:.5} rad pos {:.4} m",
            a.mean_nees_ori(),
            a.mean_nees_pose(),
            a.rms_ori.get(last).copied().unwrap_or(f64::NAN),
            a.rms_pos.get(last).copied().unwrap_or(f64::NAN),
        );
    }
    Ok(())
}

fn invariance(
    filter: FilterKind,
    mode: TwinMode,
    steps: usize,
    seed: u64,
    identity: bool,
    out: Option<PathBuf>,
) -> Result<(), Failure> {
    if steps == 0 {
        return Err(Failure::Usage("steps must be at least 1".into()));
    }
    let lab = LabScenario::new(seed, steps);
    let t = if identity { UnobsTransform::identity() } else { lab_transform(mode, seed) };
    let trace = run_twin_experiment(filter, &lab, &t, mode)?;
    if let Some(path) = out {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(Error::from)?;
        }
        std::fs::write(&path, invariance_csv(&trace)).map_err(Error::from)?;
    }
    let verdict = judge(filter, mode, &t, &trace);
    println!(
        "{filter} {mode}: max divergence {:.3e}, max gain residual {:.3e}, max residual {:.3e} -> {}",
        trace.max_divergence(),
        trace.max_gain_residual(),
        trace.max_residual(),
        verdict.label()
    );
    match verdict {
        Verdict::Pass | Verdict::ExpectedViolation => Ok(()),
        Verdict::Fail => Err(Failure::Experiment("invariance check failed".into())),
    }
}

fn jacobians(
    filter: Option<FilterKind>,
    samples: usize,
    tol: f64,
    seed: u64,
    sign_flip: Option<AuditMatrix>,
) -> Result<(), Failure> {
    if samples == 0 {
        return Err(Failure::Usage("samples must be at least 1".into()));
    }
    if !(tol > 0.0) {
        return Err(Failure::Usage("tol must be positive".into()));
    }
    let kinds = filter.map_or(FilterKind::ALL.to_vec(), |k| vec![k]);
    let opts = AuditOptions { samples, seed, sign_flip };
    let mut ok = true;
    for kind in kinds {
        let report = audit_jacobians(kind, &opts)?;
        for e in &report.entries {
            let status = if e.max_rel_error <= tol { "ok" } else { "FAIL" };
            println!("{kind:>9} {:<3} max rel error {:.3e} {status}", e.matrix.name(), e.max_rel_error);
        }
        ok &= report.passes(tol);
    }
    if ok {
        println!("all Jacobians within {tol:e}");
        Ok(())
    } else {
        Err(Failure::Experiment(format!("Jacobian audit exceeded tolerance {tol:e}")))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    let outcome = match cli.command {
        Command::Simulate { config, runs, seed, filters, out } => simulate(config, runs, seed, filters, out),
        Command::Invariance { filter, mode, steps, seed, identity, out } => invariance(filter, mode, steps, seed, identity, out),
        Command::Jacobians { filter, samples, tol, seed, inject_sign_flip } => jacobians(filter, samples, tol, seed, inject_sign_flip),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Experiment(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
