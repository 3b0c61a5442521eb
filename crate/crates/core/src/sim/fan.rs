//! Parametric wind field of a fan.

use nalgebra::Vector3;

use crate::error::{Error, Result};

/// Fan blowing along `axis` from `position`, optionally translating at
/// `velocity` once `motion_start_s` has passed.
///
/// The axial force decays exponentially with distance along the axis and is
/// bell-shaped in radial offset. The torque about global z depends on the
/// signed lateral offset `r` (measured along `z × axis`) only:
/// `τz = T0 (r / r_peak) exp(½(1 − (r / r_peak)²))`, whose magnitude peaks at
/// `|T0|` for `|r| = r_peak`. Nothing acts behind the fan.
#[derive(Debug, Clone, PartialEq)]
pub struct FanModel {
    pub position: Vector3<f64>,
    pub axis: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub motion_start_s: f64,
    /// Axial force on the axis at the fan face, N.
    pub force_scale_n: f64,
    pub decay_length_m: f64,
    pub radial_sigma_m: f64,
    /// Signed peak torque, N·m. Negative values push the vehicle back towards
    /// the axis under a positive-gain admittance law.
    pub torque_peak_nm: f64,
    pub torque_peak_offset_m: f64,
}

impl Default for FanModel {
    fn default() -> Self {
        Self {
            position: Vector3::zeros(),
            axis: Vector3::x(),
            velocity: Vector3::zeros(),
            motion_start_s: 0.0,
            // 0.3 N on the axis 1 m away.
            force_scale_n: 0.3 * 0.5f64.exp(),
            decay_length_m: 2.0,
            radial_sigma_m: 0.5,
            torque_peak_nm: -0.04,
            torque_peak_offset_m: 0.5,
        }
    }
}

impl FanModel {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("fan: {m}")));
        if (self.axis.norm() - 1.0).abs() > 1e-9 {
            return bad("axis must be a unit vector");
        }
        if self.axis.xy().norm() < 1e-9 {
            return bad("axis must not be vertical");
        }
        if !(self.force_scale_n >= 0.0) {
            return bad("force scale must be non-negative");
        }
        if !(self.decay_length_m > 0.0 && self.radial_sigma_m > 0.0 && self.torque_peak_offset_m > 0.0) {
            return bad("length scales must be positive");
        }
        Ok(())
    }

    pub fn center_at(&self, t: f64) -> Vector3<f64> {
        self.position + self.velocity * (t - self.motion_start_s).max(0.0)
    }

    /// Unit vector of positive lateral offset, `z × axis` normalized.
    pub fn lateral_direction(&self) -> Vector3<f64> {
        Vector3::z().cross(&self.axis).normalize()
    }

    pub fn axial_force(&self, axial_m: f64, radial_m: f64) -> f64 {
        if axial_m <= 0.0 {
            return 0.0;
        }
        let s = self.radial_sigma_m;
        self.force_scale_n * (-axial_m / self.decay_length_m).exp() * (-radial_m * radial_m / (2.0 * s * s)).exp()
    }

    pub fn torque_z(&self, lateral_m: f64) -> f64 {
        let u = lateral_m / self.torque_peak_offset_m;
        self.torque_peak_nm * u * (0.5 * (1.0 - u * u)).exp()
    }

    /// Signed lateral offset of `p` from the fan axis at time `t`.
    pub fn lateral_offset(&self, p: &Vector3<f64>, t: f64) -> f64 {
        (p - self.center_at(t)).dot(&self.lateral_direction())
    }

    /// External force and torque (global frame) on a vehicle at `p`.
    pub fn wrench_at(&self, p: &Vector3<f64>, t: f64) -> (Vector3<f64>, Vector3<f64>) {
        let rel = p - self.center_at(t);
        let axial = rel.dot(&self.axis);
        if axial <= 0.0 {
            return (Vector3::zeros(), Vector3::zeros());
        }
        let radial = (rel - axial * self.axis).norm();
        let lateral = rel.dot(&self.lateral_direction());
        (self.axis * self.axial_force(axial, radial), Vector3::new(0.0, 0.0, self.torque_z(lateral)))
    }
}
