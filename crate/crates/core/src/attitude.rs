//! Unit quaternions and Modified Rodrigues Parameters.
//!
//! Quaternions are stored scalar-first, `[q0, qv]`, and use the Hamilton
//! product. A quaternion `q` describes the vehicle orientation such that
//! [`AttitudeQuaternion::body_to_global`] maps body-frame vectors into the
//! global frame. Attitude perturbations are applied on the left,
//! `q = dq * q_ref`, so an error quaternion (and its MRP) lives in the global
//! frame.

use std::ops::Mul;

use nalgebra::{Matrix3, Matrix4, Rotation3, UnitQuaternion, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Error quaternions with `dq0 <= -1 + MRP_SINGULARITY_EPS` are rejected.
pub const MRP_SINGULARITY_EPS: f64 = 1e-6;

/// Below this rotation angle (rad) over one step the rate transition uses the
/// first-order expansion of `sin`.
pub const SMALL_ANGLE_THRESHOLD: f64 = 1e-8;

#[inline]
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Unit quaternion `[q0, qv]`. Every constructor re-normalizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct AttitudeQuaternion {
    q0: f64,
    qv: Vector3<f64>,
}

impl AttitudeQuaternion {
    pub fn identity() -> Self {
        Self { q0: 1.0, qv: Vector3::zeros() }
    }

    /// Builds a quaternion from raw components and normalizes it.
    ///
    /// Panics if the components are all zero or not finite.
    pub fn new(q0: f64, x: f64, y: f64, z: f64) -> Self {
        Self::try_new(q0, x, y, z).expect("quaternion components must be finite and non-zero")
    }

    pub fn try_new(q0: f64, x: f64, y: f64, z: f64) -> Option<Self> {
        let n = (q0 * q0 + x * x + y * y + z * z).sqrt();
        if !n.is_finite() || n < f64::EPSILON {
            return None;
        }
        // Leave components that are already unit up to rounding untouched.
        if (n - 1.0).abs() <= 4.0 * f64::EPSILON {
            return Some(Self { q0, qv: Vector3::new(x, y, z) });
        }
        Some(Self { q0: q0 / n, qv: Vector3::new(x, y, z) / n })
    }

    pub fn from_vector(v: &Vector4<f64>) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }

    /// Rotation by `angle` radians about `axis` (need not be normalized).
    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Self {
        let n = axis.norm();
        if n == 0.0 || angle == 0.0 {
            return Self::identity();
        }
        let half = 0.5 * angle;
        let v = axis * (half.sin() / n);
        Self::new(half.cos(), v.x, v.y, v.z)
    }

    /// Quaternion whose [`Self::body_to_global`] is `m` (assumed orthonormal).
    pub fn from_body_to_global(m: &Matrix3<f64>) -> Self {
        let r = Rotation3::from_matrix_unchecked(*m);
        let q = UnitQuaternion::from_rotation_matrix(&r);
        Self::new(q.w, q.i, q.j, q.k).canonical()
    }

    /// Rotation vector (axis times angle), inverse of [`Self::from_axis_angle`]
    /// on the short arc.
    pub fn to_rotation_vector(&self) -> Vector3<f64> {
        let c = self.canonical();
        let s = c.qv.norm();
        if s < 1e-12 {
            return 2.0 * c.qv;
        }
        let angle = 2.0 * s.atan2(c.q0);
        c.qv * (angle / s)
    }

    pub fn q0(&self) -> f64 {
        self.q0
    }

    pub fn qv(&self) -> &Vector3<f64> {
        &self.qv
    }

    pub fn as_vector(&self) -> Vector4<f64> {
        Vector4::new(self.q0, self.qv.x, self.qv.y, self.qv.z)
    }

    pub fn norm(&self) -> f64 {
        self.as_vector().norm()
    }

    /// Same rotation with `q0 >= 0`.
    pub fn canonical(&self) -> Self {
        if self.q0 < 0.0 {
            Self { q0: -self.q0, qv: -self.qv }
        } else {
            *self
        }
    }

    /// Hamilton product `self * rhs`: applies `rhs` first, then `self`.
    pub fn multiply(&self, rhs: &Self) -> Self {
        let (a0, av) = (self.q0, &self.qv);
        let (b0, bv) = (rhs.q0, &rhs.qv);
        let q0 = a0 * b0 - av.dot(bv);
        let qv = bv * a0 + av * b0 + av.cross(bv);
        Self::new(q0, qv.x, qv.y, qv.z)
    }

    /// Conjugate, which is the inverse for unit quaternions.
    pub fn inverse(&self) -> Self {
        Self { q0: self.q0, qv: -self.qv }
    }

    /// Rᵀ: maps body-frame coordinates to global-frame coordinates.
    pub fn body_to_global(&self) -> RotationMatrix {
        let (q0, qv) = (self.q0, &self.qv);
        let m = Matrix3::identity() * (2.0 * q0 * q0 - 1.0)
            + 2.0 * qv * qv.transpose()
            + 2.0 * q0 * skew(qv);
        RotationMatrix(m)
    }

    /// R: maps global-frame coordinates to body-frame coordinates.
    pub fn global_to_body(&self) -> RotationMatrix {
        RotationMatrix(self.body_to_global().0.transpose())
    }

    pub fn rotate_body_to_global(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.body_to_global().0 * v
    }

    pub fn rotate_global_to_body(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.global_to_body().0 * v
    }

    /// Angle of the rotation in `[0, pi]`.
    pub fn angle(&self) -> f64 {
        let c = self.canonical();
        2.0 * c.qv.norm().atan2(c.q0)
    }
}

impl Default for AttitudeQuaternion {
    fn default() -> Self {
        Self::identity()
    }
}

impl Mul for AttitudeQuaternion {
    type Output = AttitudeQuaternion;

    fn mul(self, rhs: Self) -> Self {
        self.multiply(&rhs)
    }
}

impl TryFrom<[f64; 4]> for AttitudeQuaternion {
    type Error = String;

    fn try_from(v: [f64; 4]) -> std::result::Result<Self, String> {
        Self::try_new(v[0], v[1], v[2], v[3]).ok_or_else(|| format!("invalid quaternion {v:?}"))
    }
}

impl From<AttitudeQuaternion> for [f64; 4] {
    fn from(q: AttitudeQuaternion) -> Self {
        [q.q0, q.qv.x, q.qv.y, q.qv.z]
    }
}

/// Orthonormal 3×3 matrix with determinant +1. Which direction it maps is
/// fixed by the method that produced it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMatrix(pub Matrix3<f64>);

impl RotationMatrix {
    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }
}

/// Modified Rodrigues Parameters of an attitude perturbation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MrpVector(pub Vector3<f64>);

impl MrpVector {
    pub fn zero() -> Self {
        Self(Vector3::zeros())
    }

    /// `rho = dqv / (1 + dq0)`. No sign flip is applied here; callers that
    /// want the short arc canonicalize first.
    pub fn from_error_quat(dq: &AttitudeQuaternion) -> Result<Self> {
        let dq0 = dq.q0();
        if dq0 <= -1.0 + MRP_SINGULARITY_EPS {
            return Err(Error::NearSingularRotation { dq0 });
        }
        Ok(Self(dq.qv() / (1.0 + dq0)))
    }

    pub fn to_error_quat(&self) -> AttitudeQuaternion {
        let r2 = self.0.norm_squared();
        let dq0 = (1.0 - r2) / (1.0 + r2);
        let dqv = self.0 * (1.0 + dq0);
        AttitudeQuaternion::new(dq0, dqv.x, dqv.y, dqv.z)
    }

    pub fn vector(&self) -> &Vector3<f64> {
        &self.0
    }
}

/// MRP of the short-arc perturbation taking `reference` to `q`, i.e. of
/// `canonical(q * reference⁻¹)`.
pub fn relative_mrp(q: &AttitudeQuaternion, reference: &AttitudeQuaternion) -> Result<MrpVector> {
    let dq = q.multiply(&reference.inverse()).canonical();
    MrpVector::from_error_quat(&dq)
}

/// Applies an MRP perturbation on the left of `reference`.
pub fn apply_mrp(rho: &Vector3<f64>, reference: &AttitudeQuaternion) -> AttitudeQuaternion {
    MrpVector(*rho).to_error_quat().multiply(reference)
}

/// 4×4 transition `q_k = M q_{k-1}` for constant body rate `omega` held over
/// `dt` seconds. Equivalent to right-multiplying by the body-frame increment
/// rotating `|omega| dt` about `omega`.
pub fn angular_rate_transition(omega: &Vector3<f64>, dt: f64) -> Matrix4<f64> {
    let rate = omega.norm();
    let theta = rate * dt;
    let c = (0.5 * theta).cos();
    let psi = if theta < SMALL_ANGLE_THRESHOLD {
        0.5 * dt * omega
    } else {
        omega * ((0.5 * theta).sin() / rate)
    };
    let mut m = Matrix4::identity() * c;
    for i in 0..3 {
        m[(0, i + 1)] = -psi[i];
        m[(i + 1, 0)] = psi[i];
    }
    let block = -skew(&psi);
    for r in 0..3 {
        for col in 0..3 {
            m[(r + 1, col + 1)] += block[(r, col)];
        }
    }
    m
}

/// Propagates `q` by body rate `omega` over `dt`, re-normalizing.
pub fn integrate_body_rate(q: &AttitudeQuaternion, omega: &Vector3<f64>, dt: f64) -> AttitudeQuaternion {
    AttitudeQuaternion::from_vector(&(angular_rate_transition(omega, dt) * q.as_vector()))
}
