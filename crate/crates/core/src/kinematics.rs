//! Poses, Euler rotations and homogeneous transforms.
//!
//! Angles cross the public API in degrees and are converted to radians at
//! the point of use. Rotation order is fixed: `R = Rz(γ) · Ry(β) · Rx(α)`.

use nalgebra::{Matrix3, Matrix4, Vector3};
use serde::{Deserialize, Serialize};

/// Wraps an angle in degrees into `(-180, 180]`.
pub fn normalize_angle(deg: f64) -> f64 {
    let wrapped = deg.rem_euclid(360.0);
    if wrapped > 180.0 {
        wrapped - 360.0
    } else {
        wrapped
    }
}

/// Wraps an angle in degrees into `[0, 360)`.
pub fn normalize_angle_positive(deg: f64) -> f64 {
    let wrapped = deg.rem_euclid(360.0);
    // rem_euclid can round up to exactly 360.0 for tiny negative inputs
    if wrapped >= 360.0 {
        0.0
    } else {
        wrapped
    }
}

/// Six-DOF pose of the grip center: translation in mm, roll/pitch/yaw in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub dx: f64,
    pub dy: f64,
    pub dz: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Pose {
    pub fn new(dx: f64, dy: f64, dz: f64, alpha: f64, beta: f64, gamma: f64) -> Self {
        Pose {
            dx,
            dy,
            dz,
            alpha: normalize_angle(alpha),
            beta: normalize_angle(beta),
            gamma: normalize_angle(gamma),
        }
    }

    pub fn from_array(v: [f64; 6]) -> Self {
        Pose::new(v[0], v[1], v[2], v[3], v[4], v[5])
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.dx, self.dy, self.dz, self.alpha, self.beta, self.gamma]
    }

    pub fn position(&self) -> Vector3<f64> {
        Vector3::new(self.dx, self.dy, self.dz)
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

/// Proper rotation matrix (orthonormal, det = +1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation(Matrix3<f64>);

impl Rotation {
    pub fn identity() -> Self {
        Rotation(Matrix3::identity())
    }

    /// Wraps a matrix without checking it. Callers own the invariant.
    pub fn from_matrix_unchecked(m: Matrix3<f64>) -> Self {
        Rotation(m)
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn transpose(&self) -> Rotation {
        Rotation(self.0.transpose())
    }

    pub fn mul(&self, other: &Rotation) -> Rotation {
        Rotation(self.0 * other.0)
    }

    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.0 * v
    }

    /// Largest entry of `RᵀR − I`, plus `|det R − 1|`.
    pub fn orthonormality_error(&self) -> f64 {
        let gram = self.0.transpose() * self.0 - Matrix3::identity();
        gram.amax().max((self.0.determinant() - 1.0).abs())
    }

    /// Magnitude in degrees of the relative rotation `selfᵀ · other`.
    pub fn angle_to(&self, other: &Rotation) -> f64 {
        let rel = self.0.transpose() * other.0;
        let cos = ((rel.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
        cos.acos().to_degrees()
    }
}

pub fn axis_rotation(axis: Axis, angle_deg: f64) -> Rotation {
    let (s, c) = angle_deg.to_radians().sin_cos();
    let m = match axis {
        Axis::X => Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c),
        Axis::Y => Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c),
        Axis::Z => Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0),
    };
    Rotation(m)
}

/// Platform orientation `Rz(γ) · Ry(β) · Rx(α)`.
pub fn combined_rotation(pose: &Pose) -> Rotation {
    let rz = axis_rotation(Axis::Z, pose.gamma);
    let ry = axis_rotation(Axis::Y, pose.beta);
    let rx = axis_rotation(Axis::X, pose.alpha);
    rz.mul(&ry).mul(&rx)
}

/// 4×4 rigid transform. The last row is always `(0, 0, 0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transform(Matrix4<f64>);

impl Transform {
    pub fn identity() -> Self {
        Transform(Matrix4::identity())
    }

    pub fn from_parts(rotation: &Rotation, translation: &Vector3<f64>) -> Self {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(rotation.matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(translation);
        Transform(m)
    }

    /// Wraps a matrix without checking it. Callers own the invariant.
    pub fn from_matrix_unchecked(m: Matrix4<f64>) -> Self {
        Transform(m)
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.0
    }

    pub fn rotation(&self) -> Rotation {
        Rotation(self.0.fixed_view::<3, 3>(0, 0).into_owned())
    }

    pub fn translation(&self) -> Vector3<f64> {
        self.0.fixed_view::<3, 1>(0, 3).into_owned()
    }

    pub fn apply(&self, point: &Vector3<f64>) -> Vector3<f64> {
        let r = self.0.fixed_view::<3, 3>(0, 0);
        r * point + self.0.fixed_view::<3, 1>(0, 3)
    }

    pub fn inverse(&self) -> Transform {
        let rt = self.rotation().transpose();
        let t = -rt.rotate(&self.translation());
        Transform::from_parts(&rt, &t)
    }

    pub fn then(&self, next: &Transform) -> Transform {
        compose(self, next)
    }
}

pub fn homogeneous(pose: &Pose) -> Transform {
    Transform::from_parts(&combined_rotation(pose), &pose.position())
}

pub fn apply(transform: &Transform, point: &Vector3<f64>) -> Vector3<f64> {
    transform.apply(point)
}

/// Matrix product `a · b`: `b` expressed in `a`'s child frame.
pub fn compose(a: &Transform, b: &Transform) -> Transform {
    Transform(a.0 * b.0)
}

/// Grip-center distance between the target pose and a reached position, mm.
pub fn pose_error(target: &Pose, reached: &Vector3<f64>) -> f64 {
    (target.position() - reached).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_rotation_is_identity() {
        assert_eq!(*axis_rotation(Axis::X, 0.0).matrix(), Matrix3::identity());
        let r = combined_rotation(&Pose::new(0.0, 0.0, 0.0, 0.0, 0.0, 0.0));
        assert_eq!(*r.matrix(), Matrix3::identity());
    }

    #[test]
    fn quarter_turn_about_z() {
        let v = axis_rotation(Axis::Z, 90.0).rotate(&Vector3::x());
        assert_abs_diff_eq!(v, Vector3::y(), epsilon = 1e-15);
    }

    #[test]
    fn pitch_sine_placement() {
        let r = axis_rotation(Axis::Y, 30.0);
        assert_abs_diff_eq!(r.matrix()[(0, 2)], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(r.matrix()[(2, 0)], -0.5, epsilon = 1e-15);
    }

    #[test]
    fn single_axis_reduction() {
        let r = combined_rotation(&Pose::new(0.0, 0.0, 0.0, 90.0, 0.0, 0.0));
        assert_abs_diff_eq!(*r.matrix(), *axis_rotation(Axis::X, 90.0).matrix(), epsilon = 1e-15);
    }

    #[test]
    fn combined_rotation_bottom_left_is_minus_sin_pitch() {
        let r = combined_rotation(&Pose::new(0.0, 0.0, 0.0, 10.0, 20.0, 30.0));
        // -sin(20°)
        assert_abs_diff_eq!(r.matrix()[(2, 0)], -0.342_020_143_325_668_7, epsilon = 1e-12);
    }

    #[test]
    fn homogeneous_basics() {
        assert_eq!(*homogeneous(&Pose::new(0.0, 0.0, 0.0, 0.0, 0.0, 0.0)).matrix(), Matrix4::identity());
        let t = homogeneous(&Pose::new(1.0, 2.0, 3.0, 0.0, 0.0, 0.0));
        assert_eq!(*t.rotation().matrix(), Matrix3::identity());
        assert_eq!(t.translation(), Vector3::new(1.0, 2.0, 3.0));
        let yaw = homogeneous(&Pose::new(0.0, 0.0, 0.0, 0.0, 0.0, 90.0));
        assert_abs_diff_eq!(yaw.apply(&Vector3::x()), Vector3::y(), epsilon = 1e-15);
    }

    #[test]
    fn apply_identity_and_translation() {
        let p = Vector3::new(5.0, -3.0, 7.0);
        assert_eq!(Transform::identity().apply(&p), p);
        let t = homogeneous(&Pose::new(0.0, 0.0, 10.0, 0.0, 0.0, 0.0));
        assert_eq!(t.apply(&Vector3::zeros()), Vector3::new(0.0, 0.0, 10.0));
    }

    #[test]
    fn compose_with_identity_and_inverse() {
        let t = homogeneous(&Pose::new(12.0, -4.0, 300.0, 17.0, -25.0, 48.0));
        assert_eq!(compose(&Transform::identity(), &t), t);
        let round = compose(&t, &t.inverse());
        assert_abs_diff_eq!(*round.matrix(), Matrix4::identity(), epsilon = 1e-9);
    }

    #[test]
    fn pose_error_cases() {
        let target = Pose::new(0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        assert_eq!(pose_error(&target, &Vector3::zeros()), 0.0);
        assert_eq!(pose_error(&target, &Vector3::new(3.0, 4.0, 0.0)), 5.0);
        let a = Pose::new(1.0, 2.0, 3.0, 0.0, 0.0, 0.0);
        let b = Pose::new(-4.0, 0.5, 9.0, 0.0, 0.0, 0.0);
        assert_eq!(pose_error(&a, &b.position()), pose_error(&b, &a.position()));
    }

    #[test]
    fn angles_normalize_into_half_open_interval() {
        assert_eq!(normalize_angle(180.0), 180.0);
        assert_eq!(normalize_angle(-180.0), 180.0);
        assert_eq!(normalize_angle(190.0), -170.0);
        assert_abs_diff_eq!(normalize_angle_positive(366.6), 6.6, epsilon = 1e-12);
        assert_eq!(normalize_angle_positive(-1e-20), 0.0);
    }

    #[test]
    fn angle_between_rotations() {
        let a = axis_rotation(Axis::Z, 10.0);
        let b = axis_rotation(Axis::Z, 35.0);
        assert_abs_diff_eq!(a.angle_to(&b), 25.0, epsilon = 1e-6);
    }
}
