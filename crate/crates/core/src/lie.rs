//! Rotation and rigid-body primitives.
//!
//! Rotations are plain `Matrix3<f64>` values. Nothing in this module
//! re-orthonormalizes its inputs; filters propagate rotations with RK4 and
//! keep whatever drift that produces.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Below this angle (rad) the trigonometric coefficients switch to their
/// Taylor expansions.
pub const SMALL_ANGLE: f64 = 1e-6;

/// Skew-symmetric matrix with `skew(v) * y == v.cross(&y)`.
#[inline]
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

#[inline]
pub fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

/// Rodrigues exponential of an angle-axis vector.
pub fn exp_so3(y: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = y.norm_squared();
    let theta = theta2.sqrt();
    let (a, b) = if theta < SMALL_ANGLE {
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    let s = skew(y);
    Matrix3::identity() + s * a + s * s * b
}

/// Angle-axis vector of a rotation, with angle in `[0, pi]`.
pub fn log_so3(r: &Matrix3<f64>) -> Vector3<f64> {
    let w = vee(&(r - r.transpose())) * 0.5;
    let sin_t = w.norm();
    let cos_t = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let theta = sin_t.atan2(cos_t);

    if theta < SMALL_ANGLE {
        return w * (1.0 + theta * theta / 6.0);
    }
    if PI - theta > SMALL_ANGLE {
        return w * (theta / sin_t);
    }

    // Near pi the antisymmetric part vanishes; recover the axis from the
    // symmetric part, sym(R) = cos(t) I + (1 - cos(t)) a a^T.
    let sym = (r + r.transpose()) * 0.5;
    let aat = (sym - Matrix3::identity() * cos_t) / (1.0 - cos_t);
    let k = (0..3)
        .max_by(|&i, &j| aat[(i, i)].total_cmp(&aat[(j, j)]))
        .unwrap_or(0);
    let mut axis: Vector3<f64> = aat.column(k).into_owned() / aat[(k, k)].max(0.0).sqrt();
    axis.normalize_mut();
    let d = axis.dot(&w);
    let flip = if d.abs() > 1e-14 {
        d < 0.0
    } else {
        axis.iter().find(|c| c.abs() > 1e-12).is_some_and(|c| *c < 0.0)
    };
    if flip {
        axis = -axis;
    }
    axis * theta
}

/// Right Jacobian of SO(3): `exp(y + d) ~ exp(y) exp(J_r(y) d)`.
pub fn right_jacobian(y: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = y.norm_squared();
    let theta = theta2.sqrt();
    let (a, b) = if theta < SMALL_ANGLE {
        (0.5 - theta2 / 24.0, 1.0 / 6.0 - theta2 / 120.0)
    } else {
        (
            (1.0 - theta.cos()) / theta2,
            (theta - theta.sin()) / (theta2 * theta),
        )
    };
    let s = skew(y);
    Matrix3::identity() - s * a + s * s * b
}

/// Closed-form inverse of [`right_jacobian`], valid for angles below 2 pi.
pub fn right_jacobian_inv(y: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = y.norm_squared();
    let theta = theta2.sqrt();
    let c = if theta < SMALL_ANGLE {
        1.0 / 12.0 + theta2 / 720.0
    } else {
        1.0 / theta2 - (1.0 + theta.cos()) / (2.0 * theta * theta.sin())
    };
    let s = skew(y);
    Matrix3::identity() + s * 0.5 + s * s * c
}

/// Left Jacobian, `J_l(y) = J_r(-y)`.
#[inline]
pub fn left_jacobian(y: &Vector3<f64>) -> Matrix3<f64> {
    right_jacobian(&-y)
}

#[inline]
pub fn left_jacobian_inv(y: &Vector3<f64>) -> Matrix3<f64> {
    right_jacobian_inv(&-y)
}

/// Largest deviation of `R^T R` from identity, and of `det R` from one.
pub fn rotation_defect(r: &Matrix3<f64>) -> f64 {
    let ortho = (r.transpose() * r - Matrix3::identity()).amax();
    ortho.max((r.determinant() - 1.0).abs())
}

/// Rigid transform `x -> R x + t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::new(Matrix3::identity(), Vector3::zeros())
    }

    /// `self * other`: apply `other` first.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose::new(
            self.rotation * other.rotation,
            self.rotation * other.translation + self.translation,
        )
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose::new(rt, -(rt * self.translation))
    }

    pub fn transform_point(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * x + self.translation
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vec3() -> impl Strategy<Value = Vector3<f64>> {
        (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64).prop_map(|(a, b, c)| Vector3::new(a, b, c))
    }

    /// Rotation matrix from a unit quaternion (w, x, y, z).
    fn quat_to_matrix(w: f64, x: f64, y: f64, z: f64) -> Matrix3<f64> {
        Matrix3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        )
    }

    #[test]
    fn skew_examples() {
        assert_eq!(skew(&Vector3::zeros()), Matrix3::zeros());
        let v = Vector3::new(1.0, 2.0, 3.0);
        assert_eq!(skew(&v) * v, Vector3::zeros());
        let out = skew(&Vector3::x()) * Vector3::y();
        assert_eq!(out, Vector3::x().cross(&Vector3::y()));
        assert_eq!(out, Vector3::z());
        let s = skew(&v);
        assert_eq!(s, -s.transpose());
    }

    #[test]
    fn exp_examples() {
        assert_eq!(exp_so3(&Vector3::zeros()), Matrix3::identity());
        // quaternion for pi about x: (0, 1, 0, 0)
        let expected = quat_to_matrix(0.0, 1.0, 0.0, 0.0);
        assert_eq!(expected, Matrix3::from_diagonal(&Vector3::new(1.0, -1.0, -1.0)));
        let r = exp_so3(&Vector3::new(PI, 0.0, 0.0));
        assert!((r - expected).amax() < 1e-15);
    }

    #[test]
    fn exp_matches_quaternion() {
        let y = Vector3::<f64>::new(0.4, -1.1, 0.7);
        let t = y.norm();
        let a = y / t;
        let (s, c) = (t / 2.0).sin_cos();
        let q = quat_to_matrix(c, s * a.x, s * a.y, s * a.z);
        assert!((exp_so3(&y) - q).amax() < 1e-14);
    }

    #[test]
    fn log_examples() {
        assert_eq!(log_so3(&Matrix3::identity()), Vector3::zeros());
        let y = Vector3::new(0.3, -0.2, 0.1);
        assert!((log_so3(&exp_so3(&y)) - y).norm() < 1e-14);
        let r = quat_to_matrix(0.0, 1.0, 0.0, 0.0);
        assert!((log_so3(&r) - Vector3::new(PI, 0.0, 0.0)).norm() < 1e-14);
        // negative-x axis at pi gets the positive sign convention
        let r = exp_so3(&Vector3::new(-PI, 0.0, 0.0));
        assert!((log_so3(&r) - Vector3::new(PI, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn log_just_below_pi() {
        let a = Vector3::new(1.0, -2.0, 0.5).normalize();
        for delta in [1e-3, 1e-5, 1e-7, 1e-9] {
            let y = a * (PI - delta);
            assert!((log_so3(&exp_so3(&y)) - y).norm() < 1e-9, "delta {delta}");
        }
    }

    #[test]
    fn small_angle_branches_are_continuous() {
        let a = Vector3::new(0.3, -0.5, 0.8).normalize();
        let below = a * (SMALL_ANGLE * (1.0 - 1e-9));
        let above = a * (SMALL_ANGLE * (1.0 + 1e-9));
        assert!((exp_so3(&below) - exp_so3(&above)).amax() < 1e-10);
        assert!((right_jacobian(&below) - right_jacobian(&above)).amax() < 1e-10);
        assert!((right_jacobian_inv(&below) - right_jacobian_inv(&above)).amax() < 1e-10);
    }

    #[test]
    fn right_jacobian_at_zero() {
        assert_eq!(right_jacobian(&Vector3::zeros()), Matrix3::identity());
    }

    #[test]
    fn right_jacobian_finite_difference() {
        // exp(y)^T exp(y + d) = exp(J_r(y) d) + O(d^2)
        let y = Vector3::new(0.7, -0.3, 1.2);
        let step = 1e-6;
        let jr = right_jacobian(&y);
        let r0t = exp_so3(&y).transpose();
        for k in 0..3 {
            let mut d = Vector3::zeros();
            d[k] = step;
            let plus = log_so3(&(r0t * exp_so3(&(y + d))));
            let minus = log_so3(&(r0t * exp_so3(&(y - d))));
            let col = (plus - minus) / (2.0 * step);
            assert!((col - jr.column(k)).norm() < 1e-6);
        }
    }

    #[test]
    fn right_jacobian_series_oracle() {
        // J_r(y) = sum_k (-S)^k / (k+1)!
        let y = Vector3::new(0.4, 0.9, -0.6);
        let s = -skew(&y);
        let mut term = Matrix3::identity();
        let mut sum = Matrix3::zeros();
        for k in 0..40 {
            sum += term / (1..=k + 1).map(|i| i as f64).product::<f64>();
            term *= s;
        }
        assert!((right_jacobian(&y) - sum).amax() < 1e-14);
        assert!((right_jacobian(&-y) - sum.transpose()).amax() < 1e-14);
    }

    #[test]
    fn pose_examples() {
        let b = Pose::new(exp_so3(&Vector3::new(0.1, 0.2, -0.3)), Vector3::new(1.0, 2.0, 3.0));
        assert_eq!(Pose::identity().compose(&b), b);
        let x = Vector3::new(-1.0, 4.0, 0.5);
        assert_eq!(Pose::identity().transform_point(&x), x);
        let id = b.compose(&b.inverse());
        assert!((id.rotation - Matrix3::identity()).amax() < 1e-12);
        assert!(id.translation.norm() < 1e-12);
    }

    proptest! {
        #[test]
        fn log_inverts_exp(y in vec3(), scale in 0.0..(PI - 1e-6)) {
            let y = if y.norm() > 0.0 { y.normalize() * scale } else { y };
            prop_assert!((log_so3(&exp_so3(&y)) - y).norm() < 1e-9);
        }

        #[test]
        fn exp_is_rotation(y in vec3(), scale in 0.0..10.0f64) {
            let r = exp_so3(&(y * scale));
            prop_assert!(rotation_defect(&r) < 1e-12);
            prop_assert!((r * exp_so3(&(-y * scale)) - Matrix3::identity()).amax() < 1e-12);
        }

        #[test]
        fn jacobian_inverse_is_inverse(y in vec3(), scale in 0.0..3.0f64) {
            let y = y * scale;
            prop_assert!((right_jacobian(&y) * right_jacobian_inv(&y) - Matrix3::identity()).amax() < 1e-10);
        }

        #[test]
        fn right_jacobian_transpose_symmetry(y in vec3(), scale in 0.0..3.0f64) {
            let y = y * scale;
            prop_assert!((right_jacobian(&-y) - right_jacobian(&y).transpose()).amax() < 1e-14);
        }
    }
}
