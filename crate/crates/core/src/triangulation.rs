//! Multi-view point triangulation from known camera poses.

use nalgebra::{Matrix2x3, Matrix3, Vector2, Vector3};

use crate::camera::CameraModel;
use crate::error::{Error, Result};
use crate::lie::Pose;

const MAX_ITERATIONS: usize = 10;
const STEP_TOLERANCE: f64 = 1e-8;
pub const MIN_BASELINE: f64 = 0.02;

fn bearing(cam: &CameraModel, uv: &Vector2<f64>) -> Vector3<f64> {
    Vector3::new((uv.x - cam.cx) / cam.fx, (uv.y - cam.cy) / cam.fy, 1.0)
}

/// Closest point between the rays of the first and last views.
fn midpoint(a: &Pose, da: &Vector3<f64>, b: &Pose, db: &Vector3<f64>) -> Result<Vector3<f64>> {
    let u = (a.rotation * da).normalize();
    let v = (b.rotation * db).normalize();
    let w = a.translation - b.translation;
    let uv = u.dot(&v);
    let denom = 1.0 - uv * uv;
    if denom < 1e-12 {
        return Err(Error::Triangulation("parallel rays"));
    }
    let s = (uv * v.dot(&w) - u.dot(&w)) / denom;
    let t = (v.dot(&w) - uv * u.dot(&w)) / denom;
    if s <= 0.0 || t <= 0.0 {
        return Err(Error::Triangulation("negative depth"));
    }
    Ok(0.5 * (a.translation + u * s + b.translation + v * t))
}

/// Gauss-Newton triangulation of a world point from camera poses (camera to
/// world) and pixel observations.
pub fn triangulate(cam: &CameraModel, views: &[(Pose, Vector2<f64>)]) -> Result<Vector3<f64>> {
    if views.len() < 2 {
        return Err(Error::Triangulation("fewer than two observations"));
    }
    let (first, last) = (&views[0], &views[views.len() - 1]);
    if (first.0.translation - last.0.translation).norm() < MIN_BASELINE {
        return Err(Error::Triangulation("baseline too small"));
    }
    let mut f = midpoint(&first.0, &bearing(cam, &first.1), &last.0, &bearing(cam, &last.1))?;

    let mut converged = false;
    for _ in 0..MAX_ITERATIONS {
        let mut jtj = Matrix3::zeros();
        let mut jtr = Vector3::zeros();
        for (pose, uv) in views {
            let rt = pose.rotation.transpose();
            let p = rt * (f - pose.translation);
            if p.z <= cam.z_min {
                return Err(Error::Triangulation("negative depth"));
            }
            let m = bearing(cam, uv);
            let r = Vector2::new(m.x - p.x / p.z, m.y - p.y / p.z);
            let iz = 1.0 / p.z;
            let dp = Matrix2x3::new(iz, 0.0, -p.x * iz * iz, 0.0, iz, -p.y * iz * iz);
            let j = dp * rt;
            jtj += j.transpose() * j;
            jtr += j.transpose() * r;
        }
        let step = jtj.cholesky().ok_or(Error::Triangulation("degenerate geometry"))?.solve(&jtr);
        f += step;
        if step.norm() < STEP_TOLERANCE {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Triangulation("did not converge"));
    }
    for (pose, _) in views {
        if (pose.rotation.transpose() * (f - pose.translation)).z <= cam.z_min {
            return Err(Error::Triangulation("negative depth"));
        }
    }
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie::exp_so3;

    fn views(f: &Vector3<f64>, poses: &[Pose]) -> Vec<(Pose, Vector2<f64>)> {
        let cam = CameraModel::default();
        poses
            .iter()
            .map(|p| (*p, cam.project(&(p.rotation.transpose() * (f - p.translation))).unwrap()))
            .collect()
    }

    #[test]
    fn noise_free_track_is_recovered() {
        let f = Vector3::new(0.5, -0.3, 4.0);
        let poses: Vec<_> = (0..6)
            .map(|k| {
                let k = k as f64;
                Pose::new(exp_so3(&Vector3::new(0.01 * k, -0.02 * k, 0.0)), Vector3::new(0.15 * k, 0.02 * k, 0.0))
            })
            .collect();
        let est = triangulate(&CameraModel::default(), &views(&f, &poses)).unwrap();
        assert!((est - f).norm() < 1e-6);
    }

    #[test]
    fn single_observation_fails() {
        let f = Vector3::new(0.0, 0.0, 3.0);
        let v = views(&f, &[Pose::identity()]);
        assert!(triangulate(&CameraModel::default(), &v).is_err());
    }

    #[test]
    fn motion_along_the_ray_fails() {
        let f = Vector3::new(0.0, 0.0, 5.0);
        let poses: Vec<_> = (0..5).map(|k| Pose::new(Matrix3::identity(), Vector3::new(0.0, 0.0, 0.3 * k as f64))).collect();
        assert!(matches!(triangulate(&CameraModel::default(), &views(&f, &poses)), Err(Error::Triangulation(_))));
    }

    #[test]
    fn tiny_baseline_fails() {
        let f = Vector3::new(0.2, 0.1, 3.0);
        let poses = [Pose::identity(), Pose::new(Matrix3::identity(), Vector3::new(0.01, 0.0, 0.0))];
        assert!(triangulate(&CameraModel::default(), &views(&f, &poses)).is_err());
    }
}
