//! Momentum-based nonlinear wrench observer with low-passed inputs, used as
//! the baseline against the unscented estimator.
//!
//! Linear and angular momentum residuals are integrated so that, with clean
//! signals and a constant wrench, the estimate obeys first-order error
//! dynamics `d/dt ê = K (e - ê)`. Velocities come from low-passed first
//! differences of the measured pose.

use nalgebra::Vector3;

use crate::attitude::AttitudeQuaternion;
use crate::error::{Error, Result};
use crate::model::{collective_thrust, motor_torques, MotorSpeeds, VehicleParams};
use crate::usque::PoseMeasurement;

/// Smoothing factor of a first-order discrete low-pass with cutoff `hz`.
pub fn smoothing_factor(cutoff_hz: f64, dt: f64) -> f64 {
    dt / (dt + 1.0 / (2.0 * std::f64::consts::PI * cutoff_hz))
}

/// `y_k = y_{k-1} + a (u_k - y_{k-1})`.
pub fn lowpass_step(prev: &Vector3<f64>, input: &Vector3<f64>, alpha: f64) -> Vector3<f64> {
    prev + alpha * (input - prev)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LowPassFilter {
    cutoff_hz: f64,
    alpha: f64,
    state: Option<Vector3<f64>>,
}

impl LowPassFilter {
    pub fn new(cutoff_hz: f64, dt: f64) -> Result<Self> {
        if !(cutoff_hz > 0.0 && cutoff_hz < 0.5 / dt) {
            return Err(Error::Config(format!(
                "low-pass cutoff {cutoff_hz} Hz must lie in (0, {}) Hz",
                0.5 / dt
            )));
        }
        Ok(Self { cutoff_hz, alpha: smoothing_factor(cutoff_hz, dt), state: None })
    }

    pub fn cutoff_hz(&self) -> f64 {
        self.cutoff_hz
    }

    /// The first sample initializes the filter state.
    pub fn step(&mut self, input: &Vector3<f64>) -> Vector3<f64> {
        let next = match &self.state {
            Some(prev) => lowpass_step(prev, input, self.alpha),
            None => *input,
        };
        self.state = Some(next);
        next
    }

    pub fn value(&self) -> Option<Vector3<f64>> {
        self.state
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObserverConfig {
    /// Bandwidth of the force estimate, 1/s.
    pub force_gain: f64,
    /// Bandwidth of the torque estimate, 1/s.
    pub torque_gain: f64,
    pub position_cutoff_hz: f64,
    pub rate_cutoff_hz: f64,
}

impl Default for ObserverConfig {
    fn default() -> Self {
        // ln(9)/2.2 ≈ 1 s rise time.
        Self { force_gain: 2.2, torque_gain: 2.2, position_cutoff_hz: 8.0, rate_cutoff_hz: 5.0 }
    }
}

#[derive(Debug, Clone)]
struct Previous {
    position: Vector3<f64>,
    q: AttitudeQuaternion,
}

/// Observer state: estimates, momentum integrals and signal filters.
#[derive(Debug, Clone)]
pub struct MomentumObserver {
    params: VehicleParams,
    config: ObserverConfig,
    dt: f64,
    velocity_lp: LowPassFilter,
    rate_lp: LowPassFilter,
    previous: Option<Previous>,
    momentum0: Vector3<f64>,
    ang_momentum0: Vector3<f64>,
    force_integral: Vector3<f64>,
    torque_integral: Vector3<f64>,
    force: Vector3<f64>,
    torque_body: Vector3<f64>,
    attitude: AttitudeQuaternion,
}

impl MomentumObserver {
    /// `dt` is the spacing of the pose samples fed to [`Self::step`].
    pub fn new(params: VehicleParams, config: ObserverConfig, dt: f64) -> Result<Self> {
        if !(config.force_gain > 0.0 && config.torque_gain > 0.0) {
            return Err(Error::Config("observer gains must be positive".into()));
        }
        if config.force_gain * dt >= 1.0 || config.torque_gain * dt >= 1.0 {
            return Err(Error::Config("observer gain too large for the sample time".into()));
        }
        Ok(Self {
            velocity_lp: LowPassFilter::new(config.position_cutoff_hz, dt)?,
            rate_lp: LowPassFilter::new(config.rate_cutoff_hz, dt)?,
            params,
            config,
            dt,
            previous: None,
            momentum0: Vector3::zeros(),
            ang_momentum0: Vector3::zeros(),
            force_integral: Vector3::zeros(),
            torque_integral: Vector3::zeros(),
            force: Vector3::zeros(),
            torque_body: Vector3::zeros(),
            attitude: AttitudeQuaternion::identity(),
        })
    }

    pub fn config(&self) -> &ObserverConfig {
        &self.config
    }

    /// External force estimate, global frame.
    pub fn force(&self) -> Vector3<f64> {
        self.force
    }

    /// External torque estimate, global frame.
    pub fn torque(&self) -> Vector3<f64> {
        self.attitude.rotate_body_to_global(&self.torque_body)
    }

    /// Feeds one pose sample. `speeds` are the motor rates applied over the
    /// interval ending at this sample.
    pub fn step(&mut self, y: &PoseMeasurement, speeds: &MotorSpeeds) {
        let Some(prev) = self.previous.replace(Previous { position: y.position, q: y.q }) else {
            self.attitude = y.q;
            return;
        };
        let dt = self.dt;
        let m = self.params.mass_kg();
        let inertia = *self.params.inertia();

        let raw_velocity = (y.position - prev.position) / dt;
        let body_increment = prev.q.inverse().multiply(&y.q);
        let raw_rate = body_increment.to_rotation_vector() / dt;
        let first = self.velocity_lp.value().is_none();
        let velocity = self.velocity_lp.step(&raw_velocity);
        let rate = self.rate_lp.step(&raw_rate);
        self.attitude = y.q;

        let momentum = m * velocity;
        let ang_momentum = inertia * rate;
        if first {
            self.momentum0 = momentum;
            self.ang_momentum0 = ang_momentum;
        }

        let thrust = collective_thrust(&self.params, speeds);
        let thrust_global = prev.q.rotate_body_to_global(&Vector3::new(0.0, 0.0, thrust));
        self.force_integral += dt * (thrust_global - m * self.params.gravity() + self.force);
        self.force = self.config.force_gain * (momentum - self.momentum0 - self.force_integral);

        let gyro = rate.cross(&(inertia * rate));
        self.torque_integral += dt * (motor_torques(&self.params, speeds) - gyro + self.torque_body);
        self.torque_body = self.config.torque_gain * (ang_momentum - self.ang_momentum0 - self.torque_integral);
    }
}
