//! TOML run configuration.
//!
//! Sections mirror the modules, every physical key carries its unit in the
//! name, and unknown keys are rejected. Any key can be overridden with a
//! dot path, e.g. `noise.position_std_m=[0.01, 0.01, 0.01]`.
//!
//! Attitude noise is given as a rotation angle in radians and converted to
//! MRP units with `ρ ≈ θ/4`.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::apps::{AdmittanceConfig, MetricsConfig, DEFAULT_SETTLING_S};
use crate::error::{Error, Result};
use crate::model::{NoiseConfig, VehicleParams};
use crate::observer::ObserverConfig;
use crate::sim::{
    ControllerGains, Disturbance, EstimatorSelection, FanModel, FanTracking, GridSurvey, RunSetup, Scenario,
    SensorModel, Trajectory,
};
use crate::usque::{BlockStd, UsqueConfig};

type V3 = [f64; 3];

fn v3(a: V3) -> Vector3<f64> {
    Vector3::from(a)
}

fn sq(a: V3) -> Vector3<f64> {
    v3(a).map(|s| s * s)
}

fn rad_to_mrp(a: V3) -> Vector3<f64> {
    v3(a) / 4.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioSection {
    pub name: String,
    pub description: String,
    pub duration_s: f64,
    pub seed: u64,
    pub sensor_rate_hz: f64,
    /// `usque`, `observer` or `both`.
    pub estimators: String,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        Self {
            name: "custom".into(),
            description: String::new(),
            duration_s: 20.0,
            seed: 1,
            sensor_rate_hz: 200.0,
            estimators: "both".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VehicleSection {
    pub mass_kg: f64,
    pub inertia_diag_kg_m2: V3,
    pub arm_length_m: f64,
    pub thrust_coeff_n_s2: [f64; 4],
    pub drag_coeff_nm_s2: [f64; 4],
    pub gravity_m_s2: V3,
    pub step_s: f64,
    pub max_motor_speed_rad_s: f64,
    /// Quantize motor commands and telemetry to 8 bits.
    pub quantize_motors: bool,
}

impl Default for VehicleSection {
    fn default() -> Self {
        let p = VehicleParams::ar_drone();
        let i = p.inertia();
        Self {
            mass_kg: p.mass_kg(),
            inertia_diag_kg_m2: [i[(0, 0)], i[(1, 1)], i[(2, 2)]],
            arm_length_m: p.arm_length_m(),
            thrust_coeff_n_s2: *p.thrust_coeff(),
            drag_coeff_nm_s2: *p.drag_coeff(),
            gravity_m_s2: (*p.gravity()).into(),
            step_s: p.step_s(),
            max_motor_speed_rad_s: 700.0,
            quantize_motors: true,
        }
    }
}

/// Filter noise model, as standard deviations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSection {
    pub thrust_std_n: V3,
    pub motor_torque_std_nm: V3,
    /// Per-step random-walk std of the external force.
    pub force_walk_std_n: V3,
    pub torque_walk_std_nm: V3,
    pub position_std_m: V3,
    pub attitude_std_rad: V3,
}

impl Default for NoiseSection {
    fn default() -> Self {
        let n = NoiseConfig::default();
        let s = |v: Vector3<f64>| -> V3 { v.map(f64::sqrt).into() };
        Self {
            thrust_std_n: s(n.thrust),
            motor_torque_std_nm: s(n.motor_torque),
            force_walk_std_n: s(n.force_ext),
            torque_walk_std_nm: s(n.torque_ext),
            position_std_m: s(n.position),
            attitude_std_rad: (s(n.attitude_mrp).map(|x| 4.0 * x)),
        }
    }
}

/// Truth sensor noise. Missing keys fall back to the filter's measurement
/// noise so that the filter model is matched by default.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensorSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub position_std_m: Option<V3>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attitude_std_rad: Option<V3>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UsqueSection {
    pub kappa: f64,
    /// Mahalanobis gate on the innovation; absent means no gating.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub innovation_gate: Option<f64>,
    pub initial_attitude_std_rad: f64,
    pub initial_omega_std_rad_s: f64,
    pub initial_position_std_m: f64,
    pub initial_velocity_std_m_s: f64,
    pub initial_torque_std_nm: f64,
    pub initial_force_std_n: f64,
}

impl Default for UsqueSection {
    fn default() -> Self {
        let c = UsqueConfig::default();
        let b = BlockStd::default();
        Self {
            kappa: c.kappa,
            innovation_gate: c.innovation_gate,
            initial_attitude_std_rad: 4.0 * b.attitude_mrp,
            initial_omega_std_rad_s: b.omega,
            initial_position_std_m: b.position,
            initial_velocity_std_m_s: b.velocity,
            initial_torque_std_nm: b.torque_ext,
            initial_force_std_n: b.force_ext,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObserverSection {
    pub force_gain_per_s: f64,
    pub torque_gain_per_s: f64,
    pub position_cutoff_hz: f64,
    pub rate_cutoff_hz: f64,
}

impl Default for ObserverSection {
    fn default() -> Self {
        let o = ObserverConfig::default();
        Self {
            force_gain_per_s: o.force_gain,
            torque_gain_per_s: o.torque_gain,
            position_cutoff_hz: o.position_cutoff_hz,
            rate_cutoff_hz: o.rate_cutoff_hz,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerSection {
    pub position_kp_per_s2: f64,
    pub position_kd_per_s: f64,
    pub position_ki_per_s3: f64,
    pub attitude_kp_per_s2: f64,
    pub attitude_kd_per_s: f64,
    pub attitude_ki_per_s3: f64,
    pub max_tilt_rad: f64,
    pub integral_limit: f64,
    pub integral_zone_m: f64,
}

impl Default for ControllerSection {
    fn default() -> Self {
        let g = ControllerGains::default();
        Self {
            position_kp_per_s2: g.position_kp,
            position_kd_per_s: g.position_kd,
            position_ki_per_s3: g.position_ki,
            attitude_kp_per_s2: g.attitude_kp,
            attitude_kd_per_s: g.attitude_kd,
            attitude_ki_per_s3: g.attitude_ki,
            max_tilt_rad: g.max_tilt_rad,
            integral_limit: g.integral_limit,
            integral_zone_m: g.integral_zone_m,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FanSection {
    pub position_m: V3,
    pub axis: V3,
    pub velocity_m_s: V3,
    pub motion_start_s: f64,
    pub force_scale_n: f64,
    pub decay_length_m: f64,
    pub radial_sigma_m: f64,
    pub torque_peak_nm: f64,
    pub torque_peak_offset_m: f64,
}

impl Default for FanSection {
    fn default() -> Self {
        let f = FanModel::default();
        Self {
            position_m: f.position.into(),
            axis: f.axis.into(),
            velocity_m_s: f.velocity.into(),
            motion_start_s: f.motion_start_s,
            force_scale_n: f.force_scale_n,
            decay_length_m: f.decay_length_m,
            radial_sigma_m: f.radial_sigma_m,
            torque_peak_nm: f.torque_peak_nm,
            torque_peak_offset_m: f.torque_peak_offset_m,
        }
    }
}

impl FanSection {
    fn build(&self) -> FanModel {
        FanModel {
            position: v3(self.position_m),
            axis: v3(self.axis),
            velocity: v3(self.velocity_m_s),
            motion_start_s: self.motion_start_s,
            force_scale_n: self.force_scale_n,
            decay_length_m: self.decay_length_m,
            radial_sigma_m: self.radial_sigma_m,
            torque_peak_nm: self.torque_peak_nm,
            torque_peak_offset_m: self.torque_peak_offset_m,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DisturbanceSection {
    /// `none`, `step_mass` or `fan_field`.
    pub kind: String,
    pub mass_kg: f64,
    /// Attachment point of the mass in the body frame.
    pub offset_m: V3,
    pub onset_s: f64,
    pub fan: FanSection,
}

impl Default for DisturbanceSection {
    fn default() -> Self {
        Self { kind: "none".into(), mass_kg: 0.053, offset_m: [0.0; 3], onset_s: 7.0, fan: FanSection::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrajectorySection {
    /// `hover`, `waypoint_grid` or `track_moving_fan`.
    pub kind: String,
    pub position_m: V3,
    pub yaw_rad: f64,
    pub x_range_m: [f64; 2],
    pub y_range_m: [f64; 2],
    pub spacing_m: f64,
    pub dwell_s: f64,
    pub transit_speed_m_s: f64,
    /// Distance in front of the fan along its axis.
    pub standoff_m: f64,
    pub initial_offset_m: f64,
}

impl Default for TrajectorySection {
    fn default() -> Self {
        Self {
            kind: "hover".into(),
            position_m: [0.0, 0.0, 1.0],
            yaw_rad: 0.0,
            x_range_m: [0.0, 2.0],
            y_range_m: [-1.0, 1.0],
            spacing_m: 0.5,
            dwell_s: 5.0,
            transit_speed_m_s: 0.5,
            standoff_m: 2.3,
            initial_offset_m: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdmittanceSection {
    pub gain_m_s_per_nm: f64,
    pub limit_m_s: f64,
    pub deadband_nm: f64,
}

impl Default for AdmittanceSection {
    fn default() -> Self {
        let a = AdmittanceConfig::default();
        Self { gain_m_s_per_nm: a.gain, limit_m_s: a.limit_mps, deadband_nm: a.deadband_nm }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsSection {
    pub steady_window_s: f64,
    pub rmse_skip_s: f64,
    /// Settling prefix dropped from each dwell when building wrench maps.
    pub map_settling_s: f64,
}

impl Default for MetricsSection {
    fn default() -> Self {
        let m = MetricsConfig::default();
        Self { steady_window_s: m.steady_window_s, rmse_skip_s: m.rmse_skip_s, map_settling_s: DEFAULT_SETTLING_S }
    }
}

/// One pose-noise level of a comparison sweep. Both the truth sensor and the
/// filter's measurement model use it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseLevel {
    pub name: String,
    pub position_std_m: f64,
    pub attitude_std_rad: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ComparisonSection {
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub levels: Vec<NoiseLevel>,
}

/// Complete, serializable configuration of a run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub scenario: ScenarioSection,
    pub vehicle: VehicleSection,
    pub noise: NoiseSection,
    pub sensor: SensorSection,
    pub usque: UsqueSection,
    pub observer: ObserverSection,
    pub controller: ControllerSection,
    pub disturbance: DisturbanceSection,
    pub trajectory: TrajectorySection,
    pub admittance: AdmittanceSection,
    pub metrics: MetricsSection,
    pub comparison: ComparisonSection,
}

/// A scenario ready to simulate, with its label in a comparison sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedRun {
    pub label: Option<String>,
    pub scenario: Scenario,
    pub setup: RunSetup,
}

fn parse_value(raw: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Sets `path` (dot separated) in `table` to the TOML value written in `raw`.
fn set_path(table: &mut toml::Table, path: &str, raw: &str) -> Result<()> {
    let mut keys: Vec<&str> = path.split('.').collect();
    let last = keys.pop().filter(|k| !k.is_empty()).ok_or_else(|| Error::Config(format!("empty override key '{path}'")))?;
    let mut at = table;
    for k in keys {
        let entry = at.entry(k.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        at = entry.as_table_mut().ok_or_else(|| Error::Config(format!("override '{path}': '{k}' is not a section")))?;
    }
    at.insert(last.to_string(), parse_value(raw));
    Ok(())
}

impl RunConfig {
    /// Parses `text` after applying `key=value` overrides.
    pub fn from_toml_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override '{o}' is not of the form key=value")))?;
            set_path(&mut table, k.trim(), v.trim())?;
        }
        let cfg: Self = table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.resolve()?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        Self::from_toml_with_overrides(text, &[])
    }

    /// The fully expanded configuration, defaults included.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn vehicle_params(&self) -> Result<VehicleParams> {
        let v = &self.vehicle;
        VehicleParams::new(
            v.mass_kg,
            Matrix3::from_diagonal(&v3(v.inertia_diag_kg_m2)),
            v.arm_length_m,
            v.thrust_coeff_n_s2,
            v.drag_coeff_nm_s2,
            v3(v.gravity_m_s2),
            v.step_s,
        )
    }

    pub fn noise_config(&self) -> Result<NoiseConfig> {
        let n = &self.noise;
        let cfg = NoiseConfig {
            thrust: sq(n.thrust_std_n),
            motor_torque: sq(n.motor_torque_std_nm),
            force_ext: sq(n.force_walk_std_n),
            torque_ext: sq(n.torque_walk_std_nm),
            position: sq(n.position_std_m),
            attitude_mrp: rad_to_mrp(n.attitude_std_rad).map(|s| s * s),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn metrics_config(&self) -> MetricsConfig {
        MetricsConfig { steady_window_s: self.metrics.steady_window_s, rmse_skip_s: self.metrics.rmse_skip_s }
    }

    pub fn estimator_selection(&self) -> Result<EstimatorSelection> {
        match self.scenario.estimators.as_str() {
            "usque" => Ok(EstimatorSelection::Usque),
            "observer" => Ok(EstimatorSelection::Observer),
            "both" => Ok(EstimatorSelection::Both),
            other => Err(Error::Config(format!("scenario.estimators: unknown selection '{other}'"))),
        }
    }

    fn disturbance(&self) -> Result<Disturbance> {
        let d = &self.disturbance;
        match d.kind.as_str() {
            "none" => Ok(Disturbance::None),
            "step_mass" => {
                if !(d.mass_kg >= 0.0) {
                    return Err(Error::Config("disturbance.mass_kg must be non-negative".into()));
                }
                Ok(Disturbance::StepMass { mass_kg: d.mass_kg, offset_body_m: v3(d.offset_m), onset_s: d.onset_s })
            }
            "fan_field" => Ok(Disturbance::FanField(d.fan.build())),
            other => Err(Error::Config(format!("disturbance.kind: unknown kind '{other}'"))),
        }
    }

    pub fn grid_survey(&self) -> GridSurvey {
        let t = &self.trajectory;
        GridSurvey {
            x_range_m: t.x_range_m,
            y_range_m: t.y_range_m,
            spacing_m: t.spacing_m,
            dwell_s: t.dwell_s,
            altitude_m: t.position_m[2],
            transit_speed_mps: t.transit_speed_m_s,
            yaw_rad: t.yaw_rad,
        }
    }

    fn trajectory(&self) -> Result<Trajectory> {
        let t = &self.trajectory;
        match t.kind.as_str() {
            "hover" => Ok(Trajectory::Hover { position: v3(t.position_m), yaw_rad: t.yaw_rad }),
            "waypoint_grid" => Ok(Trajectory::WaypointGrid(self.grid_survey())),
            "track_moving_fan" => {
                let a = &self.admittance;
                Ok(Trajectory::TrackFan(FanTracking {
                    standoff_m: t.standoff_m,
                    initial_offset_m: t.initial_offset_m,
                    altitude_m: t.position_m[2],
                    yaw_rad: t.yaw_rad,
                    admittance: AdmittanceConfig {
                        gain: a.gain_m_s_per_nm,
                        limit_mps: a.limit_m_s,
                        deadband_nm: a.deadband_nm,
                    },
                }))
            }
            other => Err(Error::Config(format!("trajectory.kind: unknown kind '{other}'"))),
        }
    }

    fn build(&self, level: Option<&NoiseLevel>) -> Result<ResolvedRun> {
        let params = self.vehicle_params()?;
        let mut noise = self.noise_config()?;
        let mut sensor = SensorModel::from_noise(&noise, self.vehicle.max_motor_speed_rad_s, self.vehicle.quantize_motors);
        if let Some(p) = self.sensor.position_std_m {
            sensor.position_std_m = v3(p);
        }
        if let Some(a) = self.sensor.attitude_std_rad {
            sensor.attitude_std_mrp = rad_to_mrp(a);
        }
        if let Some(l) = level {
            let pos = Vector3::repeat(l.position_std_m);
            let att = Vector3::repeat(l.attitude_std_rad / 4.0);
            sensor.position_std_m = pos;
            sensor.attitude_std_mrp = att;
            noise.position = pos.map(|s| s * s);
            noise.attitude_mrp = att.map(|s| s * s);
            noise.validate()?;
        }
        let u = &self.usque;
        if let Some(g) = u.innovation_gate {
            if !(g > 0.0) {
                return Err(Error::Config("usque.innovation_gate must be positive".into()));
            }
        }
        let o = &self.observer;
        let c = &self.controller;
        let setup = RunSetup {
            params,
            noise,
            estimators: self.estimator_selection()?,
            usque: UsqueConfig { kappa: u.kappa, innovation_gate: u.innovation_gate },
            initial_std: BlockStd {
                attitude_mrp: u.initial_attitude_std_rad / 4.0,
                omega: u.initial_omega_std_rad_s,
                position: u.initial_position_std_m,
                velocity: u.initial_velocity_std_m_s,
                torque_ext: u.initial_torque_std_nm,
                force_ext: u.initial_force_std_n,
            },
            observer: ObserverConfig {
                force_gain: o.force_gain_per_s,
                torque_gain: o.torque_gain_per_s,
                position_cutoff_hz: o.position_cutoff_hz,
                rate_cutoff_hz: o.rate_cutoff_hz,
            },
            controller: ControllerGains {
                position_kp: c.position_kp_per_s2,
                position_kd: c.position_kd_per_s,
                position_ki: c.position_ki_per_s3,
                attitude_kp: c.attitude_kp_per_s2,
                attitude_kd: c.attitude_kd_per_s,
                attitude_ki: c.attitude_ki_per_s3,
                max_tilt_rad: c.max_tilt_rad,
                integral_limit: c.integral_limit,
                integral_zone_m: c.integral_zone_m,
            },
            quantize_commands: self.vehicle.quantize_motors,
        };
        let s = &self.scenario;
        let scenario = Scenario {
            name: s.name.clone(),
            duration_s: s.duration_s,
            seed: s.seed,
            sensor_rate_hz: s.sensor_rate_hz,
            disturbance: self.disturbance()?,
            trajectory: self.trajectory()?,
            sensor,
        };
        scenario.validate(setup.params.step_s())?;
        if !(setup.usque.kappa + crate::usque::STATE_DIM as f64 > 0.0) {
            return Err(Error::Config("usque.kappa too negative".into()));
        }
        Ok(ResolvedRun { label: level.map(|l| l.name.clone()), scenario, setup })
    }

    /// Validated runs: one, or one per comparison level.
    pub fn resolve(&self) -> Result<Vec<ResolvedRun>> {
        if self.comparison.levels.is_empty() {
            return Ok(vec![self.build(None)?]);
        }
        let mut names: Vec<&str> = self.comparison.levels.iter().map(|l| l.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != self.comparison.levels.len() {
            return Err(Error::Config("comparison.levels: names must be unique".into()));
        }
        self.comparison.levels.iter().map(|l| self.build(Some(l))).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = RunConfig::from_toml("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        let runs = cfg.resolve().unwrap();
        assert_eq!(runs.len(), 1);
        assert_eq!(runs[0].setup.noise, NoiseConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(RunConfig::from_toml("[vehicle]\nmass = 1.0\n"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_toml("[bogus]\n"), Err(Error::Config(_))));
        let o = vec!["vehicle.weight_kg=1".to_string()];
        assert!(RunConfig::from_toml_with_overrides("", &o).is_err());
    }

    #[test]
    fn overrides_apply() {
        let o = vec!["vehicle.mass_kg=0.5".to_string(), "scenario.name=abc".to_string(), "noise.position_std_m=[0.01,0.01,0.01]".to_string()];
        let cfg = RunConfig::from_toml_with_overrides("[vehicle]\nmass_kg = 0.4\n", &o).unwrap();
        assert_eq!(cfg.vehicle.mass_kg, 0.5);
        assert_eq!(cfg.scenario.name, "abc");
        assert_eq!(cfg.noise.position_std_m, [0.01; 3]);
    }

    #[test]
    fn echo_round_trips() {
        let o = vec!["disturbance.kind=\"step_mass\"".to_string(), "usque.innovation_gate=12.6".to_string()];
        let cfg = RunConfig::from_toml_with_overrides("", &o).unwrap();
        let back = RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn invalid_values_are_config_errors() {
        for o in ["vehicle.mass_kg=-1", "scenario.sensor_rate_hz=70", "disturbance.kind=\"wind\"", "scenario.duration_s=0"] {
            let r = RunConfig::from_toml_with_overrides("", &[o.to_string()]);
            assert!(matches!(r, Err(Error::Config(_))), "{o}");
        }
    }
}
