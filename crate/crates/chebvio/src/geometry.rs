//! Quaternion and rotation-matrix algebra.
//!
//! Hamilton convention, scalar-first storage, fixed once for the whole
//! crate. For an attitude quaternion propagated by
//! `q_dot = 0.5 * q * (0, omega_body)`, [`Quat::to_rotation_matrix`] maps
//! body-frame vectors into the world frame; the world-to-body attitude
//! matrix used by the measurement equations is its transpose.

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};

/// Scalar-first Hamilton quaternion. Not forced to unit norm: trajectory
/// polynomials evaluate to raw (slightly non-unit) quaternions by design.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quat {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quat {
    pub const IDENTITY: Quat = Quat { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Quat { w, x, y, z }
    }

    pub fn from_parts(w: f64, v: Vector3<f64>) -> Self {
        Quat { w, x: v.x, y: v.y, z: v.z }
    }

    pub fn pure(v: Vector3<f64>) -> Self {
        Quat::from_parts(0.0, v)
    }

    pub fn from_vector4(v: &Vector4<f64>) -> Self {
        Quat { w: v[0], x: v[1], y: v[2], z: v[3] }
    }

    pub fn as_vector4(&self) -> Vector4<f64> {
        Vector4::new(self.w, self.x, self.y, self.z)
    }

    /// Rotation of `angle` radians about `axis` (normalized internally).
    pub fn from_axis_angle(axis: Vector3<f64>, angle: f64) -> Self {
        let n = axis.norm();
        if n == 0.0 {
            return Quat::IDENTITY;
        }
        let half = 0.5 * angle;
        Quat::from_parts(half.cos(), axis * (half.sin() / n))
    }

    /// Exponential of the rotation vector `rv` (angle = |rv|).
    pub fn exp_rotvec(rv: Vector3<f64>) -> Self {
        let angle = rv.norm();
        if angle < 1e-12 {
            return Quat::from_parts(1.0, rv * 0.5).normalized();
        }
        Quat::from_parts((0.5 * angle).cos(), rv * ((0.5 * angle).sin() / angle))
    }

    /// Vector (imaginary) part.
    pub fn vec(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn conjugate(&self) -> Self {
        Quat { w: self.w, x: -self.x, y: -self.y, z: -self.z }
    }

    pub fn dot(&self, rhs: &Quat) -> f64 {
        self.w * rhs.w + self.x * rhs.x + self.y * rhs.y + self.z * rhs.z
    }

    pub fn norm_squared(&self) -> f64 {
        self.dot(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }

    pub fn normalized(&self) -> Self {
        let n = self.norm();
        Quat { w: self.w / n, x: self.x / n, y: self.y / n, z: self.z / n }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Quat { w: self.w * s, x: self.x * s, y: self.y * s, z: self.z * s }
    }

    /// Rotation matrix of the sandwich product `q (0,v) q*`. A homomorphism:
    /// `(a*b).to_rotation_matrix() == a.to_rotation_matrix() * b.to_rotation_matrix()`.
    /// For an attitude quaternion this maps body vectors to world vectors;
    /// its transpose is the world-to-body attitude matrix. The input is
    /// normalized first.
    pub fn to_rotation_matrix(&self) -> Matrix3<f64> {
        let q = self.normalized();
        let (w, x, y, z) = (q.w, q.x, q.y, q.z);
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

    /// Shepperd's method; sign chosen with non-negative scalar part.
    pub fn from_rotation_matrix(m: &Matrix3<f64>) -> Self {
        let trace = m[(0, 0)] + m[(1, 1)] + m[(2, 2)];
        let q = if trace > 0.0 {
            let s = (trace + 1.0).sqrt() * 2.0;
            Quat::new(
                0.25 * s,
                (m[(2, 1)] - m[(1, 2)]) / s,
                (m[(0, 2)] - m[(2, 0)]) / s,
                (m[(1, 0)] - m[(0, 1)]) / s,
            )
        } else if m[(0, 0)] > m[(1, 1)] && m[(0, 0)] > m[(2, 2)] {
            let s = (1.0 + m[(0, 0)] - m[(1, 1)] - m[(2, 2)]).sqrt() * 2.0;
            Quat::new(
                (m[(2, 1)] - m[(1, 2)]) / s,
                0.25 * s,
                (m[(0, 1)] + m[(1, 0)]) / s,
                (m[(0, 2)] + m[(2, 0)]) / s,
            )
        } else if m[(1, 1)] > m[(2, 2)] {
            let s = (1.0 + m[(1, 1)] - m[(0, 0)] - m[(2, 2)]).sqrt() * 2.0;
            Quat::new(
                (m[(0, 2)] - m[(2, 0)]) / s,
                (m[(0, 1)] + m[(1, 0)]) / s,
                0.25 * s,
                (m[(1, 2)] + m[(2, 1)]) / s,
            )
        } else {
            let s = (1.0 + m[(2, 2)] - m[(0, 0)] - m[(1, 1)]).sqrt() * 2.0;
            Quat::new(
                (m[(1, 0)] - m[(0, 1)]) / s,
                (m[(0, 2)] + m[(2, 0)]) / s,
                (m[(1, 2)] + m[(2, 1)]) / s,
                0.25 * s,
            )
        };
        let q = q.normalized();
        if q.w < 0.0 {
            q.scaled(-1.0)
        } else {
            q
        }
    }

    /// Rotation vector (axis times angle, radians) of the normalized
    /// quaternion; sign canonicalized so the angle lies in [0, pi].
    /// `-q` and `q` map to the same vector.
    pub fn log(&self) -> Vector3<f64> {
        let q = self.normalized();
        let q = if q.w < 0.0 { q.scaled(-1.0) } else { q };
        let s = q.vec().norm();
        if s < 1e-12 {
            // angle / sin(angle/2) -> 2 as angle -> 0
            return q.vec() * 2.0;
        }
        let angle = 2.0 * s.atan2(q.w);
        q.vec() * (angle / s)
    }

    /// Spherical linear interpolation between unit quaternions,
    /// shortest path (sign of `other` flipped if needed).
    pub fn slerp(&self, other: &Quat, t: f64) -> Quat {
        let a = self.normalized();
        let mut b = other.normalized();
        let mut cos_half = a.dot(&b);
        if cos_half < 0.0 {
            b = b.scaled(-1.0);
            cos_half = -cos_half;
        }
        if cos_half > 1.0 - 1e-12 {
            let q = Quat::new(
                a.w + t * (b.w - a.w),
                a.x + t * (b.x - a.x),
                a.y + t * (b.y - a.y),
                a.z + t * (b.z - a.z),
            );
            return q.normalized();
        }
        let half = cos_half.clamp(-1.0, 1.0).acos();
        let sin_half = half.sin();
        let wa = ((1.0 - t) * half).sin() / sin_half;
        let wb = (t * half).sin() / sin_half;
        Quat::new(
            wa * a.w + wb * b.w,
            wa * a.x + wb * b.x,
            wa * a.y + wb * b.y,
            wa * a.z + wb * b.z,
        )
    }

    /// Left product matrix `L(q)` with `L(a) b_vec = (a * b)_vec`.
    pub fn left_product_matrix(&self) -> Matrix4<f64> {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        Matrix4::new(
            w, -x, -y, -z, //
            x, w, -z, y, //
            y, z, w, -x, //
            z, -y, x, w,
        )
    }

    /// Right product matrix `R(q)` with `R(b) a_vec = (a * b)_vec`.
    pub fn right_product_matrix(&self) -> Matrix4<f64> {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        Matrix4::new(
            w, -x, -y, -z, //
            x, w, z, -y, //
            y, -z, w, x, //
            z, y, -x, w,
        )
    }
}

impl std::ops::Mul for Quat {
    type Output = Quat;

    /// Hamilton product.
    fn mul(self, rhs: Quat) -> Quat {
        Quat {
            w: self.w * rhs.w - self.x * rhs.x - self.y * rhs.y - self.z * rhs.z,
            x: self.w * rhs.x + self.x * rhs.w + self.y * rhs.z - self.z * rhs.y,
            y: self.w * rhs.y - self.x * rhs.z + self.y * rhs.w + self.z * rhs.x,
            z: self.w * rhs.z + self.x * rhs.y - self.y * rhs.x + self.z * rhs.w,
        }
    }
}

/// `diag(1, -1, -1, -1)`: conjugation as a linear map on components.
pub fn conjugation_matrix() -> Matrix4<f64> {
    Matrix4::from_diagonal(&Vector4::new(1.0, -1.0, -1.0, -1.0))
}

/// Skew-symmetric cross-product matrix `[v]x`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};

    fn random_unit(rng: &mut impl Rng) -> Quat {
        loop {
            let q = Quat::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            if q.norm() > 0.1 {
                return q.normalized();
            }
        }
    }

    #[test]
    fn identity_is_neutral() {
        let q = Quat::new(0.3, -0.2, 0.8, 0.4).normalized();
        let p = Quat::IDENTITY * q;
        assert_abs_diff_eq!((p.as_vector4() - q.as_vector4()).norm(), 0.0, epsilon = 1e-15);
        let p = q * Quat::IDENTITY;
        assert_abs_diff_eq!((p.as_vector4() - q.as_vector4()).norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn conjugate_is_inverse_for_unit() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(10);
        for _ in 0..20 {
            let q = random_unit(&mut rng);
            let p = q * q.conjugate();
            assert_abs_diff_eq!(p.w, 1.0, epsilon = 1e-14);
            assert_abs_diff_eq!(p.vec().norm(), 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn ij_equals_k() {
        let i = Quat::new(0.0, 1.0, 0.0, 0.0);
        let j = Quat::new(0.0, 0.0, 1.0, 0.0);
        let k = i * j;
        assert_eq!((k.w, k.x, k.y, k.z), (0.0, 0.0, 0.0, 1.0));
    }

    #[test]
    fn product_norm_is_multiplicative() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(11);
        for _ in 0..20 {
            let a = Quat::new(
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
            );
            let b = Quat::new(
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
            );
            assert_abs_diff_eq!((a * b).norm(), a.norm() * b.norm(), epsilon = 1e-12);
        }
    }

    #[test]
    fn product_matrices_match_product() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(12);
        for _ in 0..20 {
            let a = random_unit(&mut rng);
            let b = random_unit(&mut rng);
            let ab = (a * b).as_vector4();
            assert_abs_diff_eq!(
                (a.left_product_matrix() * b.as_vector4() - ab).norm(),
                0.0,
                epsilon = 1e-14
            );
            assert_abs_diff_eq!(
                (b.right_product_matrix() * a.as_vector4() - ab).norm(),
                0.0,
                epsilon = 1e-14
            );
        }
    }

    #[test]
    fn rotation_of_identity_is_identity() {
        let r = Quat::IDENTITY.to_rotation_matrix();
        assert_abs_diff_eq!((r - Matrix3::identity()).norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn rotation_is_homomorphism_and_orthonormal() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(13);
        for _ in 0..1000 {
            let a = random_unit(&mut rng);
            let b = random_unit(&mut rng);
            let ra = a.to_rotation_matrix();
            let rb = b.to_rotation_matrix();
            assert_abs_diff_eq!(
                ((a * b).to_rotation_matrix() - ra * rb).norm(),
                0.0,
                epsilon = 1e-12
            );
            assert_abs_diff_eq!(
                (ra * ra.transpose() - Matrix3::identity()).norm(),
                0.0,
                epsilon = 1e-10
            );
            assert_abs_diff_eq!(ra.determinant(), 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn ninety_degrees_about_z_sends_e1_to_e2() {
        let q = Quat::from_axis_angle(Vector3::z(), std::f64::consts::FRAC_PI_2);
        let r = q.to_rotation_matrix();
        assert_abs_diff_eq!((r * Vector3::x() - Vector3::y()).norm(), 0.0, epsilon = 1e-14);
        // The world-to-body attitude matrix is the transpose.
        assert_abs_diff_eq!(
            (r.transpose() * Vector3::y() - Vector3::x()).norm(),
            0.0,
            epsilon = 1e-14
        );
    }

    /// Pins the quaternion convention: an attitude propagated by
    /// `q_dot = 0.5 q (0, omega_body)` must (a) return omega from
    /// `2 vec(q* q_dot)` and (b) reproduce world acceleration through
    /// `v_dot = R(q) f_body + g`.
    #[test]
    fn kinematics_convention_self_consistency() {
        let omega = Vector3::new(0.0, 0.0, 0.7);
        let t = 0.4;
        // q(t) = (cos(h t), 0, 0, sin(h t)), h = omega_z / 2.
        let half = 0.5 * omega.z;
        let q = Quat::from_axis_angle(Vector3::z(), omega.z * t);
        let q_dot = Quat::new(-half * (half * t).sin(), 0.0, 0.0, half * (half * t).cos());
        let recovered = (q.conjugate() * q_dot).vec() * 2.0;
        assert_abs_diff_eq!((recovered - omega).norm(), 0.0, epsilon = 1e-13);

        // Known world acceleration pushed through the body frame and back.
        let g = Vector3::new(0.0, 0.0, -9.81);
        let q90 = Quat::from_axis_angle(Vector3::z(), std::f64::consts::FRAC_PI_2);
        let world_acc = Vector3::new(-2.0, 0.0, 0.0);
        let f_body = q90.to_rotation_matrix().transpose() * (world_acc - g);
        assert_abs_diff_eq!(
            (q90.to_rotation_matrix() * f_body + g - world_acc).norm(),
            0.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn euler_step_preserves_consistency() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(14);
        for _ in 0..50 {
            let q = random_unit(&mut rng);
            let omega = Vector3::new(
                rng.random_range(-1.0_f64..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let dt = 1e-4 / omega.norm().max(1.0);
            let q_dot = (q * Quat::pure(omega)).scaled(0.5);
            let stepped = Quat::new(
                q.w + dt * q_dot.w,
                q.x + dt * q_dot.x,
                q.y + dt * q_dot.y,
                q.z + dt * q_dot.z,
            )
            .normalized();
            assert_abs_diff_eq!(stepped.norm(), 1.0, epsilon = 1e-14);
            let recovered = (q.conjugate() * q_dot).vec() * 2.0;
            assert_abs_diff_eq!((recovered - omega).norm(), 0.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn log_basics() {
        assert_abs_diff_eq!(Quat::IDENTITY.log().norm(), 0.0, epsilon = 1e-15);
        let q = Quat::from_axis_angle(Vector3::x(), std::f64::consts::FRAC_PI_2);
        let rv = q.log();
        assert_abs_diff_eq!(rv.x, std::f64::consts::FRAC_PI_2, epsilon = 1e-14);
        assert_abs_diff_eq!(rv.y, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(rv.z, 0.0, epsilon = 1e-15);
        let rv_neg = q.scaled(-1.0).log();
        assert_abs_diff_eq!((rv - rv_neg).norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn log_range_is_at_most_pi() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(15);
        for _ in 0..200 {
            let q = random_unit(&mut rng);
            let n = q.log().norm();
            assert!((0.0..=std::f64::consts::PI + 1e-12).contains(&n));
        }
    }

    #[test]
    fn exp_log_round_trip() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(16);
        for _ in 0..100 {
            let rv = Vector3::new(
                rng.random_range(-1.5..1.5),
                rng.random_range(-1.5..1.5),
                rng.random_range(-1.5..1.5),
            );
            if rv.norm() >= std::f64::consts::PI {
                continue;
            }
            let back = Quat::exp_rotvec(rv).log();
            assert_abs_diff_eq!((back - rv).norm(), 0.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn vec_extraction() {
        assert_eq!(Quat::IDENTITY.vec(), Vector3::zeros());
        assert_eq!(Quat::new(0.0, 1.0, 2.0, 3.0).vec(), Vector3::new(1.0, 2.0, 3.0));
        let v = Vector3::new(-0.4, 0.2, 0.9);
        assert_eq!(Quat::pure(v).vec(), v);
    }

    #[test]
    fn conjugate_twice_is_identity_map() {
        let q = Quat::new(0.1, -0.5, 0.2, 0.7);
        assert_eq!(q.conjugate().conjugate(), q);
    }

    #[test]
    fn from_rotation_matrix_round_trip() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(17);
        for _ in 0..200 {
            let q = random_unit(&mut rng);
            let back = Quat::from_rotation_matrix(&q.to_rotation_matrix());
            assert_abs_diff_eq!(q.dot(&back).abs(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn slerp_endpoints_and_unit_norm() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(18);
        for _ in 0..50 {
            let a = random_unit(&mut rng);
            let b = random_unit(&mut rng);
            assert_abs_diff_eq!(a.slerp(&b, 0.0).dot(&a).abs(), 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(a.slerp(&b, 1.0).dot(&b).abs(), 1.0, epsilon = 1e-12);
            let t: f64 = rng.random_range(0.0..1.0);
            assert_abs_diff_eq!(a.slerp(&b, t).norm(), 1.0, epsilon = 1e-12);
        }
    }
}
