//! Flat `key = value` configuration with dotted section keys.
//!
//! ```text
//! # comment
//! sim.duration = 60
//! sim.imu_rate_hz = 200
//! mc.filters = msckf, ri-msckf
//! ```
//!
//! Unset keys keep their defaults. Errors carry the offending line number.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::sim::{FilterKind, McConfig};

/// Every accepted key, in rendering order.
pub const KEYS: [&str; 34] = [
    "sim.radius",
    "sim.angular_rate",
    "sim.vertical_amplitude",
    "sim.vertical_frequency",
    "sim.tilt_amplitude",
    "sim.duration",
    "sim.imu_rate_hz",
    "sim.camera_rate_hz",
    "sim.gravity",
    "sim.seed",
    "landmarks.radius",
    "landmarks.height",
    "landmarks.count",
    "noise.gyro",
    "noise.gyro_walk",
    "noise.accel",
    "noise.accel_walk",
    "noise.pixel",
    "camera.fx",
    "camera.fy",
    "camera.cx",
    "camera.cy",
    "camera.width",
    "camera.height",
    "camera.z_min",
    "camera.fov_check",
    "camera.fov_half_angle",
    "filter.window",
    "filter.min_track_len",
    "filter.chi2_gate",
    "filter.initial_variance",
    "mc.runs",
    "mc.filters",
    "mc.threads",
];

fn float(v: &str) -> std::result::Result<f64, String> {
    let x: f64 = v.parse().map_err(|_| format!("expected a number, got '{v}'"))?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(format!("expected a finite number, got '{v}'"))
    }
}

fn integer<T: std::str::FromStr>(v: &str) -> std::result::Result<T, String> {
    v.parse().map_err(|_| format!("expected a non-negative integer, got '{v}'"))
}

fn boolean(v: &str) -> std::result::Result<bool, String> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("expected true or false, got '{v}'")),
    }
}

fn vector(v: &str) -> std::result::Result<Vector3<f64>, String> {
    let parts: Vec<&str> = v.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("expected three comma-separated numbers, got '{v}'"));
    }
    Ok(Vector3::new(float(parts[0])?, float(parts[1])?, float(parts[2])?))
}

pub fn parse_filters(v: &str) -> std::result::Result<Vec<FilterKind>, String> {
    let kinds = v
        .split(',')
        .map(|s| s.trim().parse::<FilterKind>().map_err(|e| e.to_string()))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    if kinds.is_empty() {
        return Err("empty filter list".into());
    }
    Ok(kinds)
}

/// Experiment settings read from a config file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Settings {
    pub mc: McConfig,
    /// Worker cap; `None` uses every core.
    pub threads: Option<usize>,
}

impl Settings {
    fn set(&mut self, key: &str, v: &str) -> std::result::Result<(), String> {
        let s = &mut self.mc.scenario;
        let n = &mut s.noise;
        let c = &mut s.camera;
        let w = &mut self.mc.window;
        match key {
            "sim.radius" => s.radius = float(v)?,
            "sim.angular_rate" => s.angular_rate = float(v)?,
            "sim.vertical_amplitude" => s.vertical_amplitude = float(v)?,
            "sim.vertical_frequency" => s.vertical_frequency = float(v)?,
            "sim.tilt_amplitude" => s.tilt_amplitude = float(v)?,
            "sim.duration" => s.duration = float(v)?,
            "sim.imu_rate_hz" => s.imu_rate = float(v)?,
            "sim.camera_rate_hz" => s.camera_rate = float(v)?,
            "sim.gravity" => s.gravity = vector(v)?,
            "sim.seed" => s.seed = integer(v)?,
            "landmarks.radius" => s.landmark_radius = float(v)?,
            "landmarks.height" => s.landmark_height = float(v)?,
            "landmarks.count" => s.landmark_count = integer(v)?,
            "noise.gyro" => n.gyro_noise = float(v)?,
            "noise.gyro_walk" => n.gyro_walk = float(v)?,
            "noise.accel" => n.accel_noise = float(v)?,
            "noise.accel_walk" => n.accel_walk = float(v)?,
            "noise.pixel" => n.pixel_sigma = float(v)?,
            "camera.fx" => c.fx = float(v)?,
            "camera.fy" => c.fy = float(v)?,
            "camera.cx" => c.cx = float(v)?,
            "camera.cy" => c.cy = float(v)?,
            "camera.width" => c.width = float(v)?,
            "camera.height" => c.height = float(v)?,
            "camera.z_min" => c.z_min = float(v)?,
            "camera.fov_check" => c.fov_check = boolean(v)?,
            "camera.fov_half_angle" => c.fov_half_angle = float(v)?,
            "filter.window" => w.max_clones = integer(v)?,
            "filter.min_track_len" => w.min_track_len = integer(v)?,
            "filter.chi2_gate" => w.chi2_gate = if v == "none" { None } else { Some(float(v)?) },
            "filter.initial_variance" => self.mc.initial_variance = float(v)?,
            "mc.runs" => self.mc.runs = integer(v)?,
            "mc.filters" => self.mc.filters = parse_filters(v)?,
            "mc.threads" => self.threads = if v == "auto" { None } else { Some(integer(v)?) },
            _ => return Err(format!("unknown key '{key}'")),
        }
        Ok(())
    }

    fn value(&self, key: &str) -> String {
        let s = &self.mc.scenario;
        let n = &s.noise;
        let c = &s.camera;
        let w = &self.mc.window;
        match key {
            "sim.radius" => s.radius.to_string(),
            "sim.angular_rate" => s.angular_rate.to_string(),
            "sim.vertical_amplitude" => s.vertical_amplitude.to_string(),
            "sim.vertical_frequency" => s.vertical_frequency.to_string(),
            "sim.tilt_amplitude" => s.tilt_amplitude.to_string(),
            "sim.duration" => s.duration.to_string(),
            "sim.imu_rate_hz" => s.imu_rate.to_string(),
            "sim.camera_rate_hz" => s.camera_rate.to_string(),
            "sim.gravity" => format!("{}, {}, {}", s.gravity.x, s.gravity.y, s.gravity.z),
            "sim.seed" => s.seed.to_string(),
            "landmarks.radius" => s.landmark_radius.to_string(),
            "landmarks.height" => s.landmark_height.to_string(),
            "landmarks.count" => s.landmark_count.to_string(),
            "noise.gyro" => n.gyro_noise.to_string(),
            "noise.gyro_walk" => n.gyro_walk.to_string(),
            "noise.accel" => n.accel_noise.to_string(),
            "noise.accel_walk" => n.accel_walk.to_string(),
            "noise.pixel" => n.pixel_sigma.to_string(),
            "camera.fx" => c.fx.to_string(),
            "camera.fy" => c.fy.to_string(),
            "camera.cx" => c.cx.to_string(),
            "camera.cy" => c.cy.to_string(),
            "camera.width" => c.width.to_string(),
            "camera.height" => c.height.to_string(),
            "camera.z_min" => c.z_min.to_string(),
            "camera.fov_check" => c.fov_check.to_string(),
            "camera.fov_half_angle" => c.fov_half_angle.to_string(),
            "filter.window" => w.max_clones.to_string(),
            "filter.min_track_len" => w.min_track_len.to_string(),
            "filter.chi2_gate" => w.chi2_gate.map_or("none".into(), |p| p.to_string()),
            "filter.initial_variance" => self.mc.initial_variance.to_string(),
            "mc.runs" => self.mc.runs.to_string(),
            "mc.filters" => self.mc.filters.iter().map(|k| k.name()).collect::<Vec<_>>().join(", "),
            "mc.threads" => self.threads.map_or("auto".into(), |t| t.to_string()),
            _ => unreachable!("key table and renderer disagree on '{key}'"),
        }
    }

    /// Parses config text over the defaults. Each key may appear once.
    pub fn parse(text: &str) -> Result<Self> {
        let mut out = Settings::default();
        let mut seen = BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let err = |msg: String| Error::ConfigLine { line, msg };
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| err(format!("expected 'key = value', got '{content}'")))?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() {
                return Err(err("missing key".into()));
            }
            if !seen.insert(key.to_string()) {
                return Err(err(format!("duplicate key '{key}'")));
            }
            out.set(key, value).map_err(err)?;
        }
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Every key with its current value; parses back to `self`.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            let _ = writeln!(out, "{key} = {}", self.value(key));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_text_gives_defaults() {
        assert_eq!(Settings::parse("").unwrap(), Settings::default());
        assert_eq!(Settings::parse("# only a comment\n\n   \n").unwrap(), Settings::default());
    }

    #[test]
    fn values_and_comments() {
        let s = Settings::parse("sim.imu_rate_hz = 400 # faster\nmc.filters = ri-msckf\nsim.gravity = 0, 0, -9.8\nfilter.chi2_gate = 0.95\n").unwrap();
        assert_eq!(s.mc.scenario.imu_rate, 400.0);
        assert_eq!(s.mc.filters, vec![FilterKind::RiMsckf]);
        assert_eq!(s.mc.scenario.gravity, Vector3::new(0.0, 0.0, -9.8));
        assert_eq!(s.mc.window.chi2_gate, Some(0.95));
    }

    #[test]
    fn errors_name_the_line() {
        let cases = [
            ("sim.radius = 5\nbogus line\n", 2),
            ("\n\nsim.nope = 1\n", 3),
            ("sim.radius = five\n", 1),
            ("sim.seed = 1\nsim.seed = 2\n", 2),
            ("mc.filters = msckf, ekf\n", 1),
            ("sim.duration = inf\n", 1),
            (" = 3\n", 1),
        ];
        for (text, expected) in cases {
            match Settings::parse(text) {
                Err(Error::ConfigLine { line, .. }) => assert_eq!(line, expected, "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
    }

    #[test]
    fn every_key_is_rendered_and_accepted() {
        let text = Settings::default().render();
        assert_eq!(text.lines().count(), KEYS.len());
        assert_eq!(Settings::parse(&text).unwrap(), Settings::default());
    }

    proptest! {
        #[test]
        fn render_parse_roundtrip(
            radius in 0.1f64..100.0,
            duration in 0.1f64..1000.0,
            pixel in 0.0f64..10.0,
            seed in any::<u64>(),
            runs in 0usize..10_000,
            window in 1usize..50,
            gate in proptest::option::of(0.5f64..0.999),
            threads in proptest::option::of(1usize..64),
            mask in 1u8..16,
        ) {
            let mut s = Settings::default();
            s.mc.scenario.radius = radius;
            s.mc.scenario.duration = duration;
            s.mc.scenario.noise.pixel_sigma = pixel;
            s.mc.scenario.seed = seed;
            s.mc.runs = runs;
            s.mc.window.max_clones = window;
            s.mc.window.chi2_gate = gate;
            s.threads = threads;
            s.mc.filters = FilterKind::ALL.into_iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, k)| k).collect();
            prop_assert_eq!(Settings::parse(&s.render()).unwrap(), s);
        }
    }
}
