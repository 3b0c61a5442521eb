//! Ground-truth world: disturbances, trajectories, the inner-loop controller
//! and the sensors feeding the estimators.
//!
//! Runs are deterministic given the seed. All randomness comes from a single
//! `ChaCha8Rng` stream seeded with `Scenario::seed`.

pub mod controller;
pub mod fan;
pub mod sensor;

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::apps::{admittance_command, AdmittanceConfig};
use crate::error::{Error, Result};
use crate::log::{EstimatorId, LogRow, StateEstimate, TimeSeriesLog, WrenchEstimate};
use crate::model::{process_step, MotorSpeeds, NoiseConfig, ProcessNoiseSample, VehicleParams, VehicleState};
use crate::observer::{MomentumObserver, ObserverConfig};
use crate::usque::{BlockStd, UsqueConfig, UsqueFilter};

pub use controller::{ControllerGains, FlightController, Mixer, Reference};
pub use fan::FanModel;
pub use sensor::SensorModel;

/// Exogenous wrench applied to the truth model.
#[derive(Debug, Clone, PartialEq)]
pub enum Disturbance {
    None,
    /// A mass hanging from a body-frame point, attached at `onset_s`.
    StepMass { mass_kg: f64, offset_body_m: Vector3<f64>, onset_s: f64 },
    FanField(FanModel),
}

impl Disturbance {
    /// Global-frame `(force, torque)` acting on `s` at time `t`.
    pub fn wrench(&self, s: &VehicleState, t: f64, gravity: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
        match self {
            Disturbance::None => (Vector3::zeros(), Vector3::zeros()),
            Disturbance::StepMass { mass_kg, offset_body_m, onset_s } => {
                if t < *onset_s {
                    return (Vector3::zeros(), Vector3::zeros());
                }
                let force = -*mass_kg * gravity;
                let lever = s.q.rotate_body_to_global(offset_body_m);
                (force, lever.cross(&force))
            }
            Disturbance::FanField(fan) => fan.wrench_at(&s.position, t),
        }
    }

    pub fn fan(&self) -> Option<&FanModel> {
        match self {
            Disturbance::FanField(f) => Some(f),
            _ => None,
        }
    }
}

/// Serpentine survey over a rectangle, hovering at each grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSurvey {
    pub x_range_m: [f64; 2],
    pub y_range_m: [f64; 2],
    pub spacing_m: f64,
    pub dwell_s: f64,
    pub altitude_m: f64,
    pub transit_speed_mps: f64,
    pub yaw_rad: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Leg {
    from: Vector3<f64>,
    to: Vector3<f64>,
    start_s: f64,
    transit_s: f64,
    dwell_s: f64,
}

impl GridSurvey {
    fn axis_points(range: [f64; 2], spacing: f64) -> Vec<f64> {
        let n = ((range[1] - range[0]) / spacing + 1e-9).floor() as usize;
        (0..=n).map(|i| range[0] + i as f64 * spacing).collect()
    }

    /// Grid points in visiting order.
    pub fn waypoints(&self) -> Vec<Vector3<f64>> {
        let xs = Self::axis_points(self.x_range_m, self.spacing_m);
        let ys = Self::axis_points(self.y_range_m, self.spacing_m);
        let mut out = Vec::with_capacity(xs.len() * ys.len());
        for (i, x) in xs.iter().enumerate() {
            let row: Vec<f64> = if i % 2 == 0 { ys.clone() } else { ys.iter().rev().copied().collect() };
            out.extend(row.into_iter().map(|y| Vector3::new(*x, y, self.altitude_m)));
        }
        out
    }

    fn legs(&self) -> Vec<Leg> {
        let pts = self.waypoints();
        let mut legs = Vec::with_capacity(pts.len());
        let mut t = 0.0;
        for (i, p) in pts.iter().enumerate() {
            let from = if i == 0 { *p } else { pts[i - 1] };
            let transit_s = (p - from).norm() / self.transit_speed_mps;
            legs.push(Leg { from, to: *p, start_s: t, transit_s, dwell_s: self.dwell_s });
            t += transit_s + self.dwell_s;
        }
        legs
    }

    pub fn total_duration_s(&self) -> f64 {
        self.legs().last().map(|l| l.start_s + l.transit_s + l.dwell_s).unwrap_or(0.0)
    }

    /// Reference at `t` and the index of the dwell segment, if dwelling.
    pub fn reference_at(&self, t: f64) -> (Reference, Option<usize>) {
        let legs = self.legs();
        for (i, leg) in legs.iter().enumerate() {
            let end = leg.start_s + leg.transit_s + leg.dwell_s;
            if t < end || i + 1 == legs.len() {
                let into = t - leg.start_s;
                if into < leg.transit_s {
                    let dir = (leg.to - leg.from) / leg.transit_s;
                    let r = Reference { position: leg.from + dir * into, velocity: dir, yaw_rad: self.yaw_rad };
                    return (r, None);
                }
                let seg = if t < end { Some(i) } else { None };
                return (Reference::hold(leg.to, self.yaw_rad), seg);
            }
        }
        (Reference::hold(Vector3::new(0.0, 0.0, self.altitude_m), self.yaw_rad), None)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.spacing_m > 0.0
            && self.dwell_s > 0.0
            && self.transit_speed_mps > 0.0
            && self.x_range_m[1] >= self.x_range_m[0]
            && self.y_range_m[1] >= self.y_range_m[0];
        if ok {
            Ok(())
        } else {
            Err(Error::Config("grid survey: ranges must be ordered and spacing, dwell, speed positive".into()))
        }
    }
}

/// Hold a fixed stand-off in front of the fan and steer laterally with the
/// admittance law on the estimated yaw torque.
#[derive(Debug, Clone, PartialEq)]
pub struct FanTracking {
    pub standoff_m: f64,
    pub initial_offset_m: f64,
    pub altitude_m: f64,
    pub yaw_rad: f64,
    pub admittance: AdmittanceConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Trajectory {
    Hover { position: Vector3<f64>, yaw_rad: f64 },
    WaypointGrid(GridSurvey),
    TrackFan(FanTracking),
}

/// Which estimators to run alongside the truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorSelection {
    Usque,
    Observer,
    Both,
}

impl EstimatorSelection {
    pub fn ids(&self) -> Vec<EstimatorId> {
        match self {
            Self::Usque => vec![EstimatorId::Usque],
            Self::Observer => vec![EstimatorId::Observer],
            Self::Both => vec![EstimatorId::Usque, EstimatorId::Observer],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub duration_s: f64,
    pub seed: u64,
    pub sensor_rate_hz: f64,
    pub disturbance: Disturbance,
    pub trajectory: Trajectory,
    pub sensor: SensorModel,
}

/// Everything besides the scenario that a run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSetup {
    pub params: VehicleParams,
    pub noise: NoiseConfig,
    pub estimators: EstimatorSelection,
    pub usque: UsqueConfig,
    pub initial_std: BlockStd,
    pub observer: ObserverConfig,
    pub controller: ControllerGains,
    pub quantize_commands: bool,
}

impl Scenario {
    pub fn step_count(&self, dt: f64) -> usize {
        (self.duration_s / dt).round() as usize
    }

    /// Number of model steps between pose samples.
    pub fn decimation(&self, dt: f64) -> Result<usize> {
        let ratio = 1.0 / (dt * self.sensor_rate_hz);
        let n = ratio.round();
        if !(n >= 1.0) || (ratio - n).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "sensor rate {} Hz does not divide the model rate {} Hz",
                self.sensor_rate_hz,
                1.0 / dt
            )));
        }
        Ok(n as usize)
    }

    pub fn validate(&self, dt: f64) -> Result<()> {
        if !(self.duration_s > 0.0) {
            return Err(Error::Config("scenario: duration must be positive".into()));
        }
        self.decimation(dt)?;
        self.sensor.validate()?;
        if let Disturbance::FanField(f) = &self.disturbance {
            f.validate()?;
        }
        match &self.trajectory {
            Trajectory::WaypointGrid(g) => g.validate()?,
            Trajectory::TrackFan(t) => {
                if self.disturbance.fan().is_none() {
                    return Err(Error::Config("fan tracking needs a fan_field disturbance".into()));
                }
                t.admittance.validate()?;
            }
            Trajectory::Hover { .. } => {}
        }
        Ok(())
    }

    fn initial_reference(&self) -> Reference {
        match &self.trajectory {
            Trajectory::Hover { position, yaw_rad } => Reference::hold(*position, *yaw_rad),
            Trajectory::WaypointGrid(g) => g.reference_at(0.0).0,
            Trajectory::TrackFan(tr) => {
                let fan = self.disturbance.fan().expect("validated");
                let c = fan.center_at(0.0);
                let p = c + fan.axis * tr.standoff_m + fan.lateral_direction() * tr.initial_offset_m;
                Reference::hold(Vector3::new(p.x, p.y, tr.altitude_m), tr.yaw_rad)
            }
        }
    }
}

/// One truth step: the process model with the scenario wrench in place of
/// the random walk and no process noise.
pub fn truth_step(
    s: &VehicleState,
    command: &MotorSpeeds,
    force: &Vector3<f64>,
    torque: &Vector3<f64>,
    params: &VehicleParams,
) -> VehicleState {
    let mut with_wrench = *s;
    with_wrench.force_ext = *force;
    with_wrench.torque_ext = *torque;
    process_step(&with_wrench, command, &ProcessNoiseSample::zero(), params)
}

pub fn run_scenario(scenario: &Scenario, setup: &RunSetup) -> Result<TimeSeriesLog> {
    let params = &setup.params;
    let dt = params.step_s();
    scenario.validate(dt)?;
    setup.noise.validate()?;
    let decimation = scenario.decimation(dt)?;
    let steps = scenario.step_count(dt);
    let ids = setup.estimators.ids();

    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let mixer = Mixer::new(params, scenario.sensor.max_motor_speed, setup.quantize_commands)?;
    let mut controller = FlightController::new(params.clone(), setup.controller, mixer);

    let mut reference = scenario.initial_reference();
    let mut truth = VehicleState::at_rest(reference.position);
    truth.q = controller::desired_attitude(&Vector3::z(), reference.yaw_rad);
    let mut applied = MotorSpeeds::hover(params);

    let mut usque: Option<UsqueFilter> = None;
    let mut observer = if ids.contains(&EstimatorId::Observer) {
        Some(MomentumObserver::new(params.clone(), setup.observer, dt * decimation as f64)?)
    } else {
        None
    };

    let mut rows = Vec::with_capacity(steps + 1);
    for k in 0..steps {
        let t = k as f64 * dt;
        let (force, torque) = scenario.disturbance.wrench(&truth, t, params.gravity());
        truth.force_ext = force;
        truth.torque_ext = torque;

        let telemetry = if scenario.sensor.quantize_motors {
            sensor::quantize(&applied, scenario.sensor.max_motor_speed)
        } else {
            applied
        };
        let measurement = (k % decimation == 0).then(|| scenario.sensor.sample(t, &truth, &applied, &mut rng).0);

        let mut estimates = Vec::with_capacity(ids.len());
        for id in &ids {
            let est = match id {
                EstimatorId::Usque => {
                    match usque.as_mut() {
                        Some(f) => {
                            f.step(&telemetry, measurement.as_ref())?;
                        }
                        None => {
                            let y = measurement.as_ref().ok_or_else(|| Error::Config("no pose at t = 0".into()))?;
                            usque = Some(UsqueFilter::from_first_pose(
                                params.clone(),
                                setup.noise.clone(),
                                setup.usque,
                                y,
                                &setup.initial_std,
                            ));
                        }
                    }
                    let b = usque.as_ref().expect("initialized").belief();
                    WrenchEstimate {
                        force: b.mean.force_ext,
                        torque: b.mean.torque_ext,
                        state: Some(StateEstimate { mean: b.mean, cov_diag: b.cov.diagonal() }),
                    }
                }
                EstimatorId::Observer => {
                    let obs = observer.as_mut().expect("constructed");
                    if let Some(y) = &measurement {
                        obs.step(y, &telemetry);
                    }
                    WrenchEstimate { force: obs.force(), torque: obs.torque(), state: None }
                }
            };
            estimates.push(est);
        }

        let segment = match &scenario.trajectory {
            Trajectory::Hover { position, yaw_rad } => {
                reference = Reference::hold(*position, *yaw_rad);
                None
            }
            Trajectory::WaypointGrid(g) => {
                let (r, seg) = g.reference_at(t);
                reference = r;
                seg
            }
            Trajectory::TrackFan(tr) => {
                let torque_z = estimates.first().map(|e| e.torque.z).unwrap_or(0.0);
                let fan = scenario.disturbance.fan().expect("validated");
                let lateral = fan.lateral_direction();
                let speed = admittance_command(torque_z, &tr.admittance);
                reference.velocity = lateral * speed;
                reference.position += reference.velocity * dt;
                None
            }
        };

        let out = controller.command(&truth, &reference, dt);
        rows.push(LogRow {
            time_s: t,
            segment,
            reference: reference.position,
            truth,
            measurement,
            motors: telemetry,
            saturated: out.saturated,
            estimates,
        });
        applied = out.speeds;
        truth = truth_step(&truth, &applied, &force, &torque, params);
        if !truth.is_finite() {
            return Err(Error::Diverged { time_s: t });
        }
    }

    Ok(TimeSeriesLog { scenario: scenario.name.clone(), step_s: dt, estimators: ids, rows })
}
