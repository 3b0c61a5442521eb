//! Per-step run log and its CSV form.
//!
//! The first line of the file is a comment carrying the schema version and
//! run metadata, e.g.
//! `# quad-wrench timeseries v1 scenario=hover step_s=0.005 estimators=usque,observer`.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::str::FromStr;

use nalgebra::{SVector, Vector3, Vector4};

use crate::attitude::AttitudeQuaternion;
use crate::error::{Error, Result};
use crate::model::{MotorSpeeds, VehicleState};
use crate::usque::{PoseMeasurement, STATE_DIM};

pub const SCHEMA_TAG: &str = "quad-wrench timeseries v1";

/// Names of the minimal state coordinates, used for variance columns.
pub const MINIMAL_NAMES: [&str; STATE_DIM] = [
    "rho_x", "rho_y", "rho_z", "wx", "wy", "wz", "x", "y", "z", "vx", "vy", "vz", "tx", "ty", "tz", "fx", "fy",
    "fz",
];

const STATE_NAMES: [&str; 19] = [
    "q0", "q1", "q2", "q3", "wx", "wy", "wz", "x", "y", "z", "vx", "vy", "vz", "tx", "ty", "tz", "fx", "fy", "fz",
];

/// Wrench channels in log order.
pub const WRENCH_CHANNELS: [&str; 6] = ["fx", "fy", "fz", "tx", "ty", "tz"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EstimatorId {
    Usque,
    Observer,
}

impl EstimatorId {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Usque => "usque",
            Self::Observer => "observer",
        }
    }
}

impl FromStr for EstimatorId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "usque" => Ok(Self::Usque),
            "observer" => Ok(Self::Observer),
            other => Err(Error::Log(format!("unknown estimator '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateEstimate {
    pub mean: VehicleState,
    /// Diagonal of the covariance in minimal coordinates.
    pub cov_diag: SVector<f64, STATE_DIM>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WrenchEstimate {
    pub force: Vector3<f64>,
    pub torque: Vector3<f64>,
    pub state: Option<StateEstimate>,
}

impl WrenchEstimate {
    /// Value of a channel named in [`WRENCH_CHANNELS`].
    pub fn channel(&self, i: usize) -> f64 {
        if i < 3 {
            self.force[i]
        } else {
            self.torque[i - 3]
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub time_s: f64,
    /// Dwell segment of a survey, if any.
    pub segment: Option<usize>,
    pub reference: Vector3<f64>,
    pub truth: VehicleState,
    pub measurement: Option<PoseMeasurement>,
    /// Motor telemetry handed to the estimators.
    pub motors: MotorSpeeds,
    pub saturated: bool,
    /// One entry per estimator, in the order of `TimeSeriesLog::estimators`.
    pub estimates: Vec<WrenchEstimate>,
}

pub fn truth_channel(s: &VehicleState, i: usize) -> f64 {
    if i < 3 {
        s.force_ext[i]
    } else {
        s.torque_ext[i - 3]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesLog {
    pub scenario: String,
    pub step_s: f64,
    pub estimators: Vec<EstimatorId>,
    pub rows: Vec<LogRow>,
}

fn state_values(s: &VehicleState) -> Vec<f64> {
    let mut v = s.q.as_vector().iter().copied().collect::<Vec<_>>();
    for b in [&s.omega, &s.position, &s.velocity, &s.torque_ext, &s.force_ext] {
        v.extend(b.iter());
    }
    v
}

fn state_from(v: &[f64]) -> Result<VehicleState> {
    let q = AttitudeQuaternion::try_new(v[0], v[1], v[2], v[3])
        .ok_or_else(|| Error::Log("zero quaternion in log".into()))?;
    let b = |i: usize| Vector3::new(v[i], v[i + 1], v[i + 2]);
    Ok(VehicleState { q, omega: b(4), position: b(7), velocity: b(10), torque_ext: b(13), force_ext: b(16) })
}

impl TimeSeriesLog {
    pub fn estimator_index(&self, id: EstimatorId) -> Option<usize> {
        self.estimators.iter().position(|e| *e == id)
    }

    pub fn columns(&self) -> Vec<String> {
        let mut c: Vec<String> = vec!["time_s".into(), "segment".into(), "ref_x".into(), "ref_y".into(), "ref_z".into()];
        c.extend(STATE_NAMES.iter().map(|n| format!("true_{n}")));
        c.extend(["x", "y", "z", "q0", "q1", "q2", "q3"].iter().map(|n| format!("meas_{n}")));
        c.extend((1..=4).map(|i| format!("motor_{i}")));
        c.push("saturated".into());
        for id in &self.estimators {
            let p = id.as_str();
            c.extend(WRENCH_CHANNELS.iter().map(|n| format!("{p}_{n}")));
            if *id == EstimatorId::Usque {
                c.extend(STATE_NAMES[..13].iter().map(|n| format!("{p}_{n}")));
                c.extend(MINIMAL_NAMES.iter().map(|n| format!("{p}_var_{n}")));
            }
        }
        c
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let ids: Vec<&str> = self.estimators.iter().map(|e| e.as_str()).collect();
        writeln!(out, "# {SCHEMA_TAG} scenario={} step_s={} estimators={}", self.scenario, self.step_s, ids.join(","))?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.columns())?;
        let f = |x: f64| x.to_string();
        let blank = String::new;
        for row in &self.rows {
            let mut r: Vec<String> = vec![f(row.time_s), row.segment.map(|s| s.to_string()).unwrap_or_default()];
            r.extend(row.reference.iter().map(|x| f(*x)));
            r.extend(state_values(&row.truth).into_iter().map(f));
            match &row.measurement {
                Some(m) => {
                    r.extend(m.position.iter().map(|x| f(*x)));
                    r.extend(m.q.as_vector().iter().map(|x| f(*x)));
                }
                None => r.extend((0..7).map(|_| blank())),
            }
            r.extend(row.motors.0.iter().map(|x| f(*x)));
            r.push(if row.saturated { "1".into() } else { "0".into() });
            for (id, est) in self.estimators.iter().zip(&row.estimates) {
                r.extend((0..6).map(|i| f(est.channel(i))));
                if *id == EstimatorId::Usque {
                    match &est.state {
                        Some(s) => {
                            r.extend(state_values(&s.mean)[..13].iter().map(|x| f(*x)));
                            r.extend(s.cov_diag.iter().map(|x| f(*x)));
                        }
                        None => r.extend((0..13 + STATE_DIM).map(|_| blank())),
                    }
                }
            }
            w.write_record(&r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(mut input: R) -> Result<Self> {
        let mut text = String::new();
        input.read_to_string(&mut text)?;
        let first = text.lines().next().unwrap_or_default();
        let meta = first
            .strip_prefix("# ")
            .and_then(|l| l.strip_prefix(SCHEMA_TAG))
            .ok_or_else(|| Error::Log(format!("missing '{SCHEMA_TAG}' header")))?;
        let kv: HashMap<&str, &str> = meta.split_whitespace().filter_map(|t| t.split_once('=')).collect();
        let get = |k: &str| kv.get(k).copied().ok_or_else(|| Error::Log(format!("header lacks '{k}'")));
        let scenario = get("scenario")?.to_string();
        let step_s: f64 = get("step_s")?.parse().map_err(|_| Error::Log("bad step_s".into()))?;
        let estimators = get("estimators")?
            .split(',')
            .filter(|s| !s.is_empty())
            .map(EstimatorId::from_str)
            .collect::<Result<Vec<_>>>()?;
        let mut log = Self { scenario, step_s, estimators, rows: Vec::new() };

        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
        let headers = rdr.headers()?.clone();
        let expected = log.columns();
        if headers.iter().ne(expected.iter().map(String::as_str)) {
            return Err(Error::Log("column layout does not match the header".into()));
        }
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let num = |i: usize| -> Result<f64> {
                rec[i].parse().map_err(|_| Error::Log(format!("row {}: bad number in '{}'", line + 1, &headers[i])))
            };
            let opt = |i: usize| -> Result<Option<f64>> { if rec[i].is_empty() { Ok(None) } else { num(i).map(Some) } };
            let nums = |from: usize, n: usize| -> Result<Vec<f64>> { (from..from + n).map(num).collect() };

            let time_s = num(0)?;
            let segment = if rec[1].is_empty() {
                None
            } else {
                Some(rec[1].parse().map_err(|_| Error::Log(format!("row {}: bad segment", line + 1)))?)
            };
            let reference = Vector3::from_vec(nums(2, 3)?);
            let truth = state_from(&nums(5, 19)?)?;
            let mut at = 24;
            let measurement = match opt(at)? {
                None => None,
                Some(_) => {
                    let v = nums(at, 7)?;
                    let q = AttitudeQuaternion::try_new(v[3], v[4], v[5], v[6])
                        .ok_or_else(|| Error::Log("zero quaternion in log".into()))?;
                    Some(PoseMeasurement { time_s, position: Vector3::new(v[0], v[1], v[2]), q })
                }
            };
            at += 7;
            let motors = MotorSpeeds(Vector4::from_vec(nums(at, 4)?));
            at += 4;
            let saturated = &rec[at] == "1";
            at += 1;
            let mut estimates = Vec::with_capacity(log.estimators.len());
            for id in &log.estimators {
                let w = nums(at, 6)?;
                at += 6;
                let mut est = WrenchEstimate {
                    force: Vector3::new(w[0], w[1], w[2]),
                    torque: Vector3::new(w[3], w[4], w[5]),
                    state: None,
                };
                if *id == EstimatorId::Usque {
                    if opt(at)?.is_some() {
                        let mut v = nums(at, 13)?;
                        v.extend(w[3..6].iter().chain(&w[0..3]));
                        let cov_diag = SVector::from_vec(nums(at + 13, STATE_DIM)?);
                        est.state = Some(StateEstimate { mean: state_from(&v)?, cov_diag });
                    }
                    at += 13 + STATE_DIM;
                }
                estimates.push(est);
            }
            log.rows.push(LogRow { time_s, segment, reference, truth, measurement, motors, saturated, estimates });
        }
        Ok(log)
    }

    /// Time and channel `i` of the truth and of estimator `e`.
    pub fn channel_series(&self, e: usize, i: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let t = self.rows.iter().map(|r| r.time_s).collect();
        let truth = self.rows.iter().map(|r| truth_channel(&r.truth, i)).collect();
        let est = self.rows.iter().map(|r| r.estimates[e].channel(i)).collect();
        (t, truth, est)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_log() -> TimeSeriesLog {
        let mut truth = VehicleState::at_rest(Vector3::new(0.1, -0.2, 1.0));
        truth.force_ext = Vector3::new(0.0, 0.0, -0.5);
        truth.q = AttitudeQuaternion::from_axis_angle(&Vector3::new(0.3, 0.1, 1.0), 0.2);
        let est = WrenchEstimate {
            force: Vector3::new(0.01, 0.02, -0.48),
            torque: Vector3::new(1e-4, -2e-4, 3e-5),
            state: Some(StateEstimate { mean: truth, cov_diag: SVector::from_fn(|i, _| 1e-3 * (i + 1) as f64) }),
        };
        let mut est_state = est.clone();
        if let Some(s) = est_state.state.as_mut() {
            s.mean.force_ext = est.force;
            s.mean.torque_ext = est.torque;
        }
        let obs = WrenchEstimate { force: Vector3::new(0.1, 0.0, -0.4), torque: Vector3::zeros(), state: None };
        let rows = (0..4)
            .map(|k| LogRow {
                time_s: k as f64 * 0.005,
                segment: if k % 2 == 0 { Some(k) } else { None },
                reference: Vector3::new(0.0, 0.0, 1.0),
                truth,
                measurement: (k % 2 == 0).then_some(PoseMeasurement {
                    time_s: k as f64 * 0.005,
                    position: truth.position,
                    q: truth.q,
                }),
                motors: MotorSpeeds::uniform(380.0 + k as f64 / 3.0),
                saturated: k == 3,
                estimates: vec![est_state.clone(), obs.clone()],
            })
            .collect();
        TimeSeriesLog {
            scenario: "unit".into(),
            step_s: 0.005,
            estimators: vec![EstimatorId::Usque, EstimatorId::Observer],
            rows,
        }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let log = sample_log();
        let mut buf = Vec::new();
        log.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# quad-wrench timeseries v1 "));
        let back = TimeSeriesLog::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, log);
    }

    #[test]
    fn missing_header_is_rejected() {
        let err = TimeSeriesLog::read_csv("time_s\n0\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Log(_)));
    }
}
