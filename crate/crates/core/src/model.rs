//! Discrete-time quadrotor process model.
//!
//! The same map drives the ground-truth simulator (with the scenario's wrench
//! injected) and the estimator (with sigma-point noise).

use nalgebra::{Matrix3, SMatrix, Vector3, Vector4};

use crate::attitude::{integrate_body_rate, AttitudeQuaternion};
use crate::error::{Error, Result};

/// Physical constants of the vehicle. Motors are numbered as in an `X` frame:
/// 1 at (+l, +l), 2 at (-l, +l), 3 at (-l, -l), 4 at (+l, -l); motors 2 and 4
/// spin about +body z.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleParams {
    mass_kg: f64,
    inertia: Matrix3<f64>,
    inertia_inv: Matrix3<f64>,
    arm_length_m: f64,
    thrust_coeff: [f64; 4],
    drag_coeff: [f64; 4],
    gravity: Vector3<f64>,
    step_s: f64,
}

impl VehicleParams {
    pub fn new(
        mass_kg: f64,
        inertia: Matrix3<f64>,
        arm_length_m: f64,
        thrust_coeff: [f64; 4],
        drag_coeff: [f64; 4],
        gravity: Vector3<f64>,
        step_s: f64,
    ) -> Result<Self> {
        let bad = |what: &str| Err(Error::Config(format!("vehicle: {what}")));
        if !(mass_kg > 0.0 && mass_kg.is_finite()) {
            return bad("mass must be positive");
        }
        if (inertia - inertia.transpose()).abs().max() > 1e-12 * inertia.abs().max() {
            return bad("inertia must be symmetric");
        }
        if inertia.cholesky().is_none() {
            return bad("inertia must be positive definite");
        }
        if !(arm_length_m > 0.0) {
            return bad("arm length must be positive");
        }
        if thrust_coeff.iter().chain(drag_coeff.iter()).any(|c| !(*c > 0.0)) {
            return bad("thrust and drag coefficients must be positive");
        }
        if !(step_s > 0.0) {
            return bad("step must be positive");
        }
        if !gravity.iter().all(|g| g.is_finite()) {
            return bad("gravity must be finite");
        }
        let inertia_inv = inertia.try_inverse().expect("positive definite");
        Ok(Self { mass_kg, inertia, inertia_inv, arm_length_m, thrust_coeff, drag_coeff, gravity, step_s })
    }

    /// AR.Drone-2.0-like defaults with a 5 ms step.
    pub fn ar_drone() -> Self {
        Self::new(
            0.48,
            Matrix3::from_diagonal(&Vector3::new(3.4e-3, 3.4e-3, 4.7e-3)),
            0.13,
            [8.0e-6; 4],
            [1.6e-7; 4],
            Vector3::new(0.0, 0.0, 9.81),
            0.005,
        )
        .expect("defaults are valid")
    }

    pub fn with_step(&self, step_s: f64) -> Result<Self> {
        Self::new(self.mass_kg, self.inertia, self.arm_length_m, self.thrust_coeff, self.drag_coeff, self.gravity, step_s)
    }

    pub fn mass_kg(&self) -> f64 {
        self.mass_kg
    }
    pub fn inertia(&self) -> &Matrix3<f64> {
        &self.inertia
    }
    pub fn inertia_inv(&self) -> &Matrix3<f64> {
        &self.inertia_inv
    }
    pub fn arm_length_m(&self) -> f64 {
        self.arm_length_m
    }
    pub fn thrust_coeff(&self) -> &[f64; 4] {
        &self.thrust_coeff
    }
    pub fn drag_coeff(&self) -> &[f64; 4] {
        &self.drag_coeff
    }
    pub fn gravity(&self) -> &Vector3<f64> {
        &self.gravity
    }
    pub fn step_s(&self) -> f64 {
        self.step_s
    }

    /// Motor speed at which the four motors together carry the vehicle weight.
    pub fn hover_speed(&self) -> f64 {
        let k: f64 = self.thrust_coeff.iter().sum();
        (self.mass_kg * self.gravity.norm() / k).sqrt()
    }
}

/// Motor turn rates in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MotorSpeeds(pub Vector4<f64>);

impl MotorSpeeds {
    pub fn uniform(speed: f64) -> Self {
        Self(Vector4::repeat(speed))
    }

    pub fn hover(params: &VehicleParams) -> Self {
        Self::uniform(params.hover_speed())
    }

    fn squared(&self) -> Vector4<f64> {
        self.0.component_mul(&self.0)
    }
}

/// Full vehicle state. `omega` is in the body frame; everything else is
/// global.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleState {
    pub q: AttitudeQuaternion,
    pub omega: Vector3<f64>,
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub torque_ext: Vector3<f64>,
    pub force_ext: Vector3<f64>,
}

impl VehicleState {
    pub fn at_rest(position: Vector3<f64>) -> Self {
        Self {
            q: AttitudeQuaternion::identity(),
            omega: Vector3::zeros(),
            position,
            velocity: Vector3::zeros(),
            torque_ext: Vector3::zeros(),
            force_ext: Vector3::zeros(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.q.as_vector().iter().all(|v| v.is_finite())
            && [self.omega, self.position, self.velocity, self.torque_ext, self.force_ext]
                .iter()
                .all(|v| v.iter().all(|c| c.is_finite()))
    }
}

impl Default for VehicleState {
    fn default() -> Self {
        Self::at_rest(Vector3::zeros())
    }
}

/// One draw of the process noise.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ProcessNoiseSample {
    /// Added to the body-frame thrust vector, N.
    pub thrust: Vector3<f64>,
    /// Added to the body-frame motor torque, N·m.
    pub motor_torque: Vector3<f64>,
    /// Random-walk increment of the external force, N.
    pub force_ext: Vector3<f64>,
    /// Random-walk increment of the external torque, N·m.
    pub torque_ext: Vector3<f64>,
}

impl ProcessNoiseSample {
    pub fn zero() -> Self {
        Self::default()
    }

    /// Unstacks a 12-vector ordered `(motor torque, ext torque, thrust, ext force)`.
    pub fn from_stacked(v: &SMatrix<f64, 12, 1>) -> Self {
        Self {
            motor_torque: v.fixed_rows::<3>(0).into_owned(),
            torque_ext: v.fixed_rows::<3>(3).into_owned(),
            thrust: v.fixed_rows::<3>(6).into_owned(),
            force_ext: v.fixed_rows::<3>(9).into_owned(),
        }
    }
}

/// Diagonal process and measurement covariances, stored as variances.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseConfig {
    /// Thrust-vector noise, N².
    pub thrust: Vector3<f64>,
    /// Motor-torque noise, (N·m)².
    pub motor_torque: Vector3<f64>,
    /// External-force random walk per step, N².
    pub force_ext: Vector3<f64>,
    /// External-torque random walk per step, (N·m)².
    pub torque_ext: Vector3<f64>,
    /// Position measurement, m².
    pub position: Vector3<f64>,
    /// Attitude measurement in MRP coordinates.
    pub attitude_mrp: Vector3<f64>,
}

impl NoiseConfig {
    /// Builds the config from standard deviations.
    pub fn from_std(
        thrust: Vector3<f64>,
        motor_torque: Vector3<f64>,
        force_ext: Vector3<f64>,
        torque_ext: Vector3<f64>,
        position: Vector3<f64>,
        attitude_mrp: Vector3<f64>,
    ) -> Result<Self> {
        let sq = |v: Vector3<f64>| v.component_mul(&v);
        let cfg = Self {
            thrust: sq(thrust),
            motor_torque: sq(motor_torque),
            force_ext: sq(force_ext),
            torque_ext: sq(torque_ext),
            position: sq(position),
            attitude_mrp: sq(attitude_mrp),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            ("thrust", &self.thrust),
            ("motor_torque", &self.motor_torque),
            ("force_ext", &self.force_ext),
            ("torque_ext", &self.torque_ext),
            ("position", &self.position),
            ("attitude_mrp", &self.attitude_mrp),
        ];
        for (name, v) in all {
            if v.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
                return Err(Error::Config(format!("noise: {name} variances must be positive")));
            }
        }
        Ok(())
    }

    /// Process-noise covariance ordered `(motor torque, ext torque, thrust, ext force)`.
    pub fn process_cov(&self) -> SMatrix<f64, 12, 12> {
        let mut q = SMatrix::<f64, 12, 12>::zeros();
        for (block, v) in [&self.motor_torque, &self.torque_ext, &self.thrust, &self.force_ext].iter().enumerate() {
            for i in 0..3 {
                q[(3 * block + i, 3 * block + i)] = v[i];
            }
        }
        q
    }

    /// Measurement covariance ordered `(position, attitude MRP)`.
    pub fn measurement_cov(&self) -> SMatrix<f64, 6, 6> {
        let mut g = SMatrix::<f64, 6, 6>::zeros();
        for i in 0..3 {
            g[(i, i)] = self.position[i];
            g[(i + 3, i + 3)] = self.attitude_mrp[i];
        }
        g
    }
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self::from_std(
            Vector3::new(0.025, 0.025, 0.05),
            Vector3::repeat(0.005),
            Vector3::repeat(6e-4),
            Vector3::repeat(6e-5),
            Vector3::repeat(0.001),
            Vector3::repeat(0.0005),
        )
        .expect("defaults are valid")
    }
}

/// Sum of the motor thrusts along body z, N.
pub fn collective_thrust(params: &VehicleParams, speeds: &MotorSpeeds) -> f64 {
    Vector4::from(params.thrust_coeff).dot(&speeds.squared())
}

/// Body-frame torque produced by the motors, N·m.
pub fn motor_torques(params: &VehicleParams, speeds: &MotorSpeeds) -> Vector3<f64> {
    let w2 = speeds.squared();
    let k = &params.thrust_coeff;
    let p = &params.drag_coeff;
    let c = [k[0] * w2[0], k[1] * w2[1], k[2] * w2[2], k[3] * w2[3]];
    let m = [p[0] * w2[0], p[1] * w2[1], p[2] * w2[2], p[3] * w2[3]];
    let l = params.arm_length_m;
    Vector3::new(
        l * (c[0] + c[1] - c[2] - c[3]),
        l * (-c[0] + c[1] + c[2] - c[3]),
        m[0] - m[1] + m[2] - m[3],
    )
}

/// Global-frame linear acceleration over the step starting at `s`.
pub fn linear_acceleration(
    s: &VehicleState,
    thrust: f64,
    thrust_noise: &Vector3<f64>,
    params: &VehicleParams,
) -> Vector3<f64> {
    let body_force = Vector3::new(0.0, 0.0, thrust) + thrust_noise;
    let m = params.mass_kg;
    s.q.rotate_body_to_global(&body_force) / m - params.gravity + s.force_ext / m
}

/// Advances the state by one step.
pub fn process_step(
    s: &VehicleState,
    speeds: &MotorSpeeds,
    noise: &ProcessNoiseSample,
    params: &VehicleParams,
) -> VehicleState {
    let dt = params.step_s;
    let thrust = collective_thrust(params, speeds);
    let acc = linear_acceleration(s, thrust, &noise.thrust, params);

    let position = s.position + dt * s.velocity + 0.5 * dt * dt * acc;
    let velocity = s.velocity + dt * acc;

    let q = integrate_body_rate(&s.q, &s.omega, dt);
    let ext_body = s.q.rotate_global_to_body(&s.torque_ext);
    let gyro = s.omega.cross(&(params.inertia * s.omega));
    let net = ext_body + motor_torques(params, speeds) + noise.motor_torque - gyro;
    let omega = s.omega + dt * (params.inertia_inv * net);

    VehicleState {
        q,
        omega,
        position,
        velocity,
        torque_ext: s.torque_ext + noise.torque_ext,
        force_ext: s.force_ext + noise.force_ext,
    }
}
