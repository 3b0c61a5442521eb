//! Cascaded position/attitude controller and motor mixer for the simulator.

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};

use crate::attitude::AttitudeQuaternion;
use crate::error::{Error, Result};
use crate::model::{MotorSpeeds, VehicleParams, VehicleState};
use crate::sim::sensor::quantize;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerGains {
    pub position_kp: f64,
    pub position_kd: f64,
    pub position_ki: f64,
    pub attitude_kp: f64,
    pub attitude_kd: f64,
    pub attitude_ki: f64,
    pub max_tilt_rad: f64,
    /// Clamp on each integrator state.
    pub integral_limit: f64,
    /// Position errors larger than this (per axis, m) are not integrated.
    pub integral_zone_m: f64,
}

impl Default for ControllerGains {
    fn default() -> Self {
        Self {
            // Triple closed-loop pole at -2.5 rad/s.
            position_kp: 18.75,
            position_kd: 7.5,
            position_ki: 15.625,
            attitude_kp: 225.0,
            attitude_kd: 27.0,
            attitude_ki: 100.0,
            max_tilt_rad: 0.5,
            integral_limit: 1.0,
            integral_zone_m: 0.05,
        }
    }
}

/// Desired pose and velocity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reference {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub yaw_rad: f64,
}

impl Reference {
    pub fn hold(position: Vector3<f64>, yaw_rad: f64) -> Self {
        Self { position, velocity: Vector3::zeros(), yaw_rad }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlOutput {
    pub speeds: MotorSpeeds,
    /// Some motor hit zero or the speed limit.
    pub saturated: bool,
}

/// Inverts collective thrust and motor torques into motor speeds.
#[derive(Debug, Clone, PartialEq)]
pub struct Mixer {
    inverse: Matrix4<f64>,
    thrust_coeff: Vector4<f64>,
    max_speed: f64,
    quantize: bool,
}

impl Mixer {
    pub fn new(params: &VehicleParams, max_speed: f64, quantize: bool) -> Result<Self> {
        let l = params.arm_length_m();
        let k = params.thrust_coeff();
        let p = params.drag_coeff();
        let r: Vec<f64> = (0..4).map(|i| p[i] / k[i]).collect();
        #[rustfmt::skip]
        let forward = Matrix4::new(
            1.0, 1.0, 1.0, 1.0,
            l, l, -l, -l,
            -l, l, l, -l,
            r[0], -r[1], r[2], -r[3],
        );
        let inverse = forward
            .try_inverse()
            .ok_or_else(|| Error::Config("mixer matrix is singular".into()))?;
        if !(max_speed > 0.0) {
            return Err(Error::Config("max motor speed must be positive".into()));
        }
        Ok(Self { inverse, thrust_coeff: Vector4::from(*k), max_speed, quantize })
    }

    /// Speeds producing `thrust` (N) and body `torque` (N·m).
    pub fn mix(&self, thrust: f64, torque: &Vector3<f64>) -> ControlOutput {
        let per_motor = self.inverse * Vector4::new(thrust, torque.x, torque.y, torque.z);
        let mut saturated = false;
        let speeds = Vector4::from_fn(|i, _| {
            let c = per_motor[i];
            if c < 0.0 {
                saturated = true;
                return 0.0;
            }
            let w = (c / self.thrust_coeff[i]).sqrt();
            if w > self.max_speed {
                saturated = true;
                self.max_speed
            } else {
                w
            }
        });
        let speeds = MotorSpeeds(speeds);
        let speeds = if self.quantize { quantize(&speeds, self.max_speed) } else { speeds };
        ControlOutput { speeds, saturated }
    }
}

/// PID position loop feeding a PID attitude loop.
#[derive(Debug, Clone)]
pub struct FlightController {
    params: VehicleParams,
    gains: ControllerGains,
    mixer: Mixer,
    position_integral: Vector3<f64>,
    attitude_integral: Vector3<f64>,
}

impl FlightController {
    pub fn new(params: VehicleParams, gains: ControllerGains, mixer: Mixer) -> Self {
        Self { params, gains, mixer, position_integral: Vector3::zeros(), attitude_integral: Vector3::zeros() }
    }

    /// Desired global-frame force for the position loop, updating integrators.
    fn desired_force(&mut self, s: &VehicleState, r: &Reference, dt: f64) -> Vector3<f64> {
        let g = &self.gains;
        let e_p = r.position - s.position;
        let e_v = r.velocity - s.velocity;
        let lim = g.integral_limit;
        let zone = g.integral_zone_m;
        let gated = e_p.map(|e| if e.abs() < zone { e } else { 0.0 });
        self.position_integral = (self.position_integral + dt * gated).map(|v| v.clamp(-lim, lim));
        let acc = g.position_kp * e_p + g.position_kd * e_v + g.position_ki * self.position_integral;
        let mut force = self.params.mass_kg() * (acc + self.params.gravity());
        // Limit tilt by shrinking the horizontal component.
        let horizontal = force.xy().norm();
        let max_horizontal = force.z.max(0.0) * g.max_tilt_rad.tan();
        if horizontal > max_horizontal && horizontal > 0.0 {
            let scale = max_horizontal / horizontal;
            force.x *= scale;
            force.y *= scale;
        }
        force
    }

    pub fn command(&mut self, s: &VehicleState, r: &Reference, dt: f64) -> ControlOutput {
        let force = self.desired_force(s, r, dt);
        let body_z = s.q.rotate_body_to_global(&Vector3::z());
        let thrust = force.dot(&body_z).max(0.0);

        let desired = desired_attitude(&force, r.yaw_rad);
        let error = desired.inverse().multiply(&s.q).to_rotation_vector();
        let g = &self.gains;
        let lim = g.integral_limit;
        self.attitude_integral = (self.attitude_integral - dt * error).map(|v| v.clamp(-lim, lim));
        let inertia = self.params.inertia();
        let angular_acc = -g.attitude_kp * error - g.attitude_kd * s.omega + g.attitude_ki * self.attitude_integral;
        let torque = inertia * angular_acc + s.omega.cross(&(inertia * s.omega));
        self.mixer.mix(thrust, &torque)
    }
}

/// Attitude whose body z is along `force` with heading `yaw`.
pub fn desired_attitude(force: &Vector3<f64>, yaw: f64) -> AttitudeQuaternion {
    let z = if force.norm() > 1e-9 { force.normalize() } else { Vector3::z() };
    let heading = Vector3::new(yaw.cos(), yaw.sin(), 0.0);
    let y = z.cross(&heading).normalize();
    let x = y.cross(&z);
    AttitudeQuaternion::from_body_to_global(&Matrix3::from_columns(&[x, y, z]))
}
