//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::time::{Duration, Instant};

use ivins::audit::{audit_jacobians, AuditOptions};
use ivins::config::Settings;
use ivins::ekf::NoiseConfig;
use ivins::invariance::{
    check_chain_condition, lab_transform, propagation_identities, record_vins_run, run_twin_experiment, yaw_sigma,
    LabScenario, TwinMode,
};
use ivins::msckf::WindowConfig;
use ivins::report::write_monte_carlo;
use ivins::sim::montecarlo::scenario_landmarks;
use ivins::sim::{nees, run_filter, run_monte_carlo, simulate_dataset, FilterKind, McConfig, ScenarioConfig};
use ivins::state::{Representation, UnobsTransform};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn jacobian_audit() -> Outcome {
    let opts = AuditOptions::default();
    let mut worst: f64 = 0.0;
    let mut parts = vec![];
    for kind in FilterKind::ALL {
        let r = audit_jacobians(kind, &opts).expect("audit runs");
        worst = worst.max(r.worst());
        parts.push(format!("{kind} {:.1e}", r.worst()));
    }
    outcome(worst <= 1e-5, format!("max rel error over {} states: {}", opts.samples, parts.join(", ")))
}

fn propagation_identities_hold() -> Outcome {
    let lab = LabScenario::new(11, 100);
    let rep = Representation::RightInvariant;
    let rec = record_vins_run(rep, &lab).expect("run");
    let mut phi_gap: f64 = 0.0;
    let mut h_gap: f64 = 0.0;
    for t in [UnobsTransform::stochastic_identity(yaw_sigma()), lab_transform(TwinMode::Full, 11)] {
        let (p, h) = propagation_identities(&rec, &t, &lab.cfg.gravity, rep);
        phi_gap = phi_gap.max(p);
        h_gap = h_gap.max(h);
    }
    outcome(
        phi_gap < 1e-6 && h_gap < 1e-8,
        format!("max |Phi N - N'| = {phi_gap:.2e}, max |H N|/|H| = {h_gap:.2e} over {} steps", rec.phi.len()),
    )
}

fn chain_condition() -> Outcome {
    let lab = LabScenario::new(12, 200);
    let g = lab.cfg.gravity;
    let t = UnobsTransform::stochastic_identity(yaw_sigma());
    let mut worst = [0.0f64; 2];
    for (slot, rep) in [Representation::RightInvariant, Representation::Conventional].into_iter().enumerate() {
        let rec = record_vins_run(rep, &lab).expect("run");
        for start in [0, 50, 100] {
            let r = check_chain_condition(&rec, &t, &g, rep, start, 200);
            worst[slot] = r.into_iter().fold(worst[slot], f64::max);
        }
    }
    outcome(
        worst[0] < 1e-6 && worst[1] > 1e-3,
        format!("max residual RIEKF {:.2e}, ConEKF {:.2e}", worst[0], worst[1]),
    )
}

fn deterministic_invariance() -> Outcome {
    let mut div: f64 = 0.0;
    let mut gain: f64 = 0.0;
    for seed in [21, 22, 23] {
        let lab = LabScenario::new(seed, 200);
        let t = lab_transform(TwinMode::Deterministic, seed);
        for kind in [FilterKind::Conekf, FilterKind::Riekf] {
            let tr = run_twin_experiment(kind, &lab, &t, TwinMode::Deterministic).expect("twin run");
            div = div.max(tr.max_divergence());
            gain = gain.max(tr.max_gain_residual());
        }
    }
    outcome(
        div < 1e-8 && gain < 1e-8,
        format!("ConEKF and RIEKF, 3 random T_D: max divergence {div:.2e}, max |K_y - W K| {gain:.2e}"),
    )
}

fn stochastic_identity_split() -> Outcome {
    let lab = LabScenario::new(31, 200);
    let mode = TwinMode::StochasticIdentity;
    let t = lab_transform(mode, 31);
    let ri = run_twin_experiment(FilterKind::Riekf, &lab, &t, mode).expect("twin run").max_divergence();
    let con = run_twin_experiment(FilterKind::Conekf, &lab, &t, mode).expect("twin run").max_divergence();
    outcome(ri < 1e-6 && con > 1e-4, format!("max divergence RIEKF {ri:.2e}, ConEKF {con:.2e}"))
}

fn monte_carlo_consistency() -> Outcome {
    let cfg = McConfig {
        runs: 25,
        ..Default::default()
    };
    let res = run_monte_carlo(&cfg, None).expect("monte carlo");
    let idx = |k| cfg.filters.iter().position(|f| *f == k).expect("filter present");
    let base = &res.aggregates[idx(FilterKind::Msckf)];
    let ri = &res.aggregates[idx(FilterKind::RiMsckf)];
    let pose = ((ri.mean_nees_pose() - 6.0).abs(), (base.mean_nees_pose() - 6.0).abs());
    let ori = ((ri.mean_nees_ori() - 3.0).abs(), (base.mean_nees_ori() - 3.0).abs());
    let rms = (*ri.rms_ori.last().unwrap(), *base.rms_ori.last().unwrap());
    let checks = [pose.0 < pose.1, ori.0 < ori.1, rms.0 <= rms.1];
    outcome(
        checks.iter().all(|c| *c),
        format!(
            "25 runs x {} s: NEES pose RI {:.2} vs MSCKF {:.2} [{}], NEES ori RI {:.2} vs MSCKF {:.2} [{}], final RMS ori RI {:.4} vs MSCKF {:.4} rad [{}]",
            cfg.scenario.duration,
            ri.mean_nees_pose(),
            base.mean_nees_pose(),
            if checks[0] { "ok" } else { "no" },
            ri.mean_nees_ori(),
            base.mean_nees_ori(),
            if checks[1] { "ok" } else { "no" },
            rms.0,
            rms.1,
            if checks[2] { "ok" } else { "no" },
        ),
    )
}

fn noise_free_sanity() -> Outcome {
    let quiet = NoiseConfig {
        gyro_noise: 0.0,
        gyro_walk: 0.0,
        accel_noise: 0.0,
        accel_walk: 0.0,
        pixel_sigma: 0.0,
    };
    let cfg = ScenarioConfig {
        duration: 10.0,
        noise: quiet,
        ..Default::default()
    };
    let landmarks = scenario_landmarks(&cfg);
    let data = simulate_dataset(&cfg, &landmarks, 5);
    let filter_noise = NoiseConfig {
        pixel_sigma: 1e-6,
        ..quiet
    };
    let mut worst = (0.0f64, 0.0f64);
    for kind in FilterKind::ALL {
        let state_landmarks = if kind.is_sliding_window() { &landmarks[..] } else { &landmarks[..60] };
        let m = run_filter(kind, &cfg, &WindowConfig::default(), 1e-12, &filter_noise, &data, state_landmarks).expect("run");
        for s in &m.steps {
            worst.0 = worst.0.max(s.pos);
            worst.1 = worst.1.max(s.ori);
        }
    }
    outcome(
        worst.0 < 1e-5 && worst.1 < 1e-6,
        format!("all filters, 10 s: max position error {:.2e} m, max orientation error {:.2e} rad", worst.0, worst.1),
    )
}

fn nees_calibration() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    let mut parts = vec![];
    for dim in [3usize, 6, 15] {
        let a = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-1.0..1.0));
        let p = &a * a.transpose() + DMatrix::identity(dim, dim) * 0.05;
        let l = p.clone().cholesky().expect("positive definite").l();
        let n = 10_000;
        let mean = (0..n)
            .map(|_| {
                let z = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
                nees(&(&l * z), &p)
            })
            .sum::<f64>()
            / n as f64;
        let rel = (mean / dim as f64 - 1.0).abs();
        worst = worst.max(rel);
        parts.push(format!("dim {dim}: {mean:.3}"));
    }
    outcome(worst < 0.1, format!("mean NEES over 10^4 draws: {}", parts.join(", ")))
}

fn determinism() -> Outcome {
    let mut settings = Settings::default();
    settings.mc.runs = 3;
    settings.mc.scenario.duration = 5.0;
    settings.mc.scenario.seed = 7;
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut contents = vec![];
    for (dir, threads) in dirs.iter().zip([Some(1), Some(3)]) {
        let res = run_monte_carlo(&settings.mc, threads).expect("monte carlo");
        let files = write_monte_carlo(dir.path(), &settings, &res).expect("write");
        contents.push(files.iter().map(|f| std::fs::read(f).unwrap()).collect::<Vec<_>>());
    }
    let same = contents[0] == contents[1];
    outcome(same, format!("{} files compared byte for byte across two invocations", contents[0].len()))
}

fn main() {
    let criteria: [(&str, Duration, fn() -> Outcome); 9] = [
        ("Jacobian audit", Duration::from_secs(30), jacobian_audit),
        ("propagation identities", Duration::from_secs(10), propagation_identities_hold),
        ("chain condition", Duration::from_secs(10), chain_condition),
        ("deterministic invariance", Duration::from_secs(20), deterministic_invariance),
        ("stochastic-identity split", Duration::from_secs(20), stochastic_identity_split),
        ("Monte Carlo consistency", Duration::from_secs(15 * 60), monte_carlo_consistency),
        ("noise-free sanity", Duration::from_secs(60), noise_free_sanity),
        ("NEES calibration", Duration::from_secs(60), nees_calibration),
        ("determinism", Duration::from_secs(120), determinism),
    ];
    let mut failed = 0;
    for (name, budget, check) in criteria {
        let start = Instant::now();
        let o = check();
        let elapsed = start.elapsed();
        let pass = o.pass && elapsed < budget;
        if !pass {
            failed += 1;
        }
        println!(
            "{} {name}: {} ({:.1} s, budget {} s)",
            if pass { "PASS" } else { "FAIL" },
            o.detail,
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
