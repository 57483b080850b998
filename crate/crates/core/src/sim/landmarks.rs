use std::f64::consts::TAU;

use nalgebra::Vector3;
use rand::Rng;

use super::ScenarioConfig;

/// Points on the lateral surface of a cylinder around the z axis, centered
/// at `z = 0`. Each point is drawn uniformly inside its own cell of a
/// near-square azimuth by height grid, so coverage is uniform without
/// large gaps.
pub fn generate_landmarks(cfg: &ScenarioConfig, rng: &mut impl Rng) -> Vec<Vector3<f64>> {
    let n = cfg.landmark_count;
    if n == 0 {
        return Vec::new();
    }
    let r = cfg.landmark_radius;
    let h = cfg.landmark_height;
    let aspect = TAU * r / h.max(1e-9);
    let target = (n as f64 / aspect).sqrt();
    let rows = (1..=n)
        .filter(|d| n % d == 0)
        .min_by(|a, b| (*a as f64 - target).abs().total_cmp(&(*b as f64 - target).abs()))
        .unwrap_or(1);
    let cols = n / rows;
    let mut out = Vec::with_capacity(n);
    for i in 0..cols {
        for j in 0..rows {
            let az = TAU * (i as f64 + rng.random::<f64>()) / cols as f64;
            let z = h * ((j as f64 + rng.random::<f64>()) / rows as f64 - 0.5);
            out.push(Vector3::new(r * az.cos(), r * az.sin(), z));
        }
    }
    out
}
