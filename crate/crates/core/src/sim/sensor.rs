//! Motion-capture pose and motor-telemetry models.

use nalgebra::Vector3;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::attitude::apply_mrp;
use crate::error::{Error, Result};
use crate::model::{MotorSpeeds, NoiseConfig, VehicleState};
use crate::usque::PoseMeasurement;

/// Number of levels of the 8-bit motor telemetry.
pub const QUANTIZATION_LEVELS: f64 = 255.0;

/// Rounds `speed` to the nearest of 256 levels spanning `[0, max_speed]`.
pub fn quantize_speed(speed: f64, max_speed: f64) -> f64 {
    let step = max_speed / QUANTIZATION_LEVELS;
    ((speed / step).round().clamp(0.0, QUANTIZATION_LEVELS)) * step
}

pub fn quantize(speeds: &MotorSpeeds, max_speed: f64) -> MotorSpeeds {
    MotorSpeeds(speeds.0.map(|w| quantize_speed(w, max_speed)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorModel {
    pub position_std_m: Vector3<f64>,
    /// Standard deviation of the multiplicative attitude error, MRP units.
    pub attitude_std_mrp: Vector3<f64>,
    pub max_motor_speed: f64,
    pub quantize_motors: bool,
}

impl SensorModel {
    /// Pose noise taken from the measurement block of `noise`.
    pub fn from_noise(noise: &NoiseConfig, max_motor_speed: f64, quantize_motors: bool) -> Self {
        Self {
            position_std_m: noise.position.map(f64::sqrt),
            attitude_std_mrp: noise.attitude_mrp.map(f64::sqrt),
            max_motor_speed,
            quantize_motors,
        }
    }

    pub fn noiseless(max_motor_speed: f64) -> Self {
        Self {
            position_std_m: Vector3::zeros(),
            attitude_std_mrp: Vector3::zeros(),
            max_motor_speed,
            quantize_motors: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.max_motor_speed > 0.0) {
            return Err(Error::Config("sensor: max motor speed must be positive".into()));
        }
        if self.position_std_m.iter().chain(self.attitude_std_mrp.iter()).any(|s| !(*s >= 0.0)) {
            return Err(Error::Config("sensor: standard deviations must be non-negative".into()));
        }
        Ok(())
    }

    /// Samples a noisy pose of `truth` and the telemetry of `applied` speeds.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        time_s: f64,
        truth: &VehicleState,
        applied: &MotorSpeeds,
        rng: &mut R,
    ) -> (PoseMeasurement, MotorSpeeds) {
        let mut gauss = || -> Vector3<f64> {
            Vector3::new(
                StandardNormal.sample(rng),
                StandardNormal.sample(rng),
                StandardNormal.sample(rng),
            )
        };
        let position = truth.position + self.position_std_m.component_mul(&gauss());
        let rho = self.attitude_std_mrp.component_mul(&gauss());
        let q = if rho == Vector3::zeros() { truth.q } else { apply_mrp(&rho, &truth.q) };
        let speeds = if self.quantize_motors {
            quantize(applied, self.max_motor_speed)
        } else {
            *applied
        };
        (PoseMeasurement { time_s, position, q }, speeds)
    }
}

/// Quantization step of the telemetry, rad/s.
pub fn quantization_step(max_speed: f64) -> f64 {
    max_speed / QUANTIZATION_LEVELS
}
