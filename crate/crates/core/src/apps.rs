//! Uses of the wrench estimate: admittance steering, wrench maps from survey
//! flights and run metrics.

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::{Vector2, Vector3};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::log::{truth_channel, TimeSeriesLog, WRENCH_CHANNELS};
use crate::sim::{FanModel, GridSurvey};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmittanceConfig {
    /// Lateral speed per unit yaw torque, (m/s)/(N·m).
    pub gain: f64,
    pub limit_mps: f64,
    pub deadband_nm: f64,
}

impl Default for AdmittanceConfig {
    fn default() -> Self {
        Self { gain: 8.0, limit_mps: 0.5, deadband_nm: 0.005 }
    }
}

impl AdmittanceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.gain > 0.0 && self.limit_mps > 0.0 && self.deadband_nm >= 0.0 {
            Ok(())
        } else {
            Err(Error::Config("admittance: need gain > 0, limit > 0 and deadband >= 0".into()))
        }
    }
}

/// Lateral velocity command for an estimated yaw torque.
pub fn admittance_command(torque_z: f64, cfg: &AdmittanceConfig) -> f64 {
    let excess = torque_z.abs() - cfg.deadband_nm;
    if excess <= 0.0 {
        return 0.0;
    }
    (cfg.gain * excess.copysign(torque_z)).clamp(-cfg.limit_mps, cfg.limit_mps)
}

/// Sample mean and standard deviation (n - 1 normalization, 0 for n = 1).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct WrenchMapCell {
    pub position: Vector2<f64>,
    pub force_mean: Vector3<f64>,
    pub torque_mean: Vector3<f64>,
    pub force_std: Vector3<f64>,
    pub torque_std: Vector3<f64>,
    pub samples: usize,
}

pub const DEFAULT_SETTLING_S: f64 = 1.5;

/// Per-grid-point statistics of estimator `estimator` over each dwell, after
/// dropping the first `settle_s` seconds of the dwell.
pub fn build_wrench_map(
    log: &TimeSeriesLog,
    estimator: usize,
    grid: &GridSurvey,
    settle_s: f64,
) -> Result<Vec<WrenchMapCell>> {
    let points = grid.waypoints();
    let mut starts = vec![f64::INFINITY; points.len()];
    for row in &log.rows {
        if let Some(seg) = row.segment.filter(|s| *s < points.len()) {
            starts[seg] = starts[seg].min(row.time_s);
        }
    }
    let mut samples: Vec<Vec<[f64; 6]>> = vec![Vec::new(); points.len()];
    for row in &log.rows {
        let Some(seg) = row.segment.filter(|s| *s < points.len()) else { continue };
        if row.time_s - starts[seg] >= settle_s {
            let e = &row.estimates[estimator];
            samples[seg].push(std::array::from_fn(|i| e.channel(i)));
        }
    }
    points
        .iter()
        .zip(samples)
        .map(|(p, s)| {
            if s.is_empty() {
                return Err(Error::EmptyCell { x: p.x, y: p.y });
            }
            let stats: Vec<(f64, f64)> = (0..6).map(|i| mean_std(&s.iter().map(|v| v[i]).collect::<Vec<_>>())).collect();
            let v = |k: usize, std: bool| {
                Vector3::from_fn(|i, _| if std { stats[k + i].1 } else { stats[k + i].0 })
            };
            Ok(WrenchMapCell {
                position: p.xy(),
                force_mean: v(0, false),
                torque_mean: v(3, false),
                force_std: v(0, true),
                torque_std: v(3, true),
                samples: s.len(),
            })
        })
        .collect()
}

pub fn write_wrench_map_csv<W: Write>(cells: &[WrenchMapCell], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["x_m".to_string(), "y_m".to_string()];
    header.extend(WRENCH_CHANNELS.iter().map(|c| c.to_string()));
    header.extend(WRENCH_CHANNELS.iter().map(|c| format!("std_{c}")));
    header.push("n".into());
    w.write_record(&header)?;
    for c in cells {
        let mut r: Vec<String> = vec![c.position.x.to_string(), c.position.y.to_string()];
        for v in [&c.force_mean, &c.torque_mean, &c.force_std, &c.torque_std] {
            r.extend(v.iter().map(|x| x.to_string()));
        }
        r.push(c.samples.to_string());
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsConfig {
    /// Length of the trailing window for steady-state statistics.
    pub steady_window_s: f64,
    /// Initial span excluded from the RMSE.
    pub rmse_skip_s: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self { steady_window_s: 10.0, rmse_skip_s: 1.0 }
    }
}

/// The wrench channel with the largest net truth change and the index where
/// it crosses half of that change.
pub fn detect_step(log: &TimeSeriesLog) -> Result<(usize, usize)> {
    let (first, last) = match (log.rows.first(), log.rows.last()) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::NoStepDetected),
    };
    let (channel, delta) = (0..6)
        .map(|i| (i, truth_channel(&last.truth, i) - truth_channel(&first.truth, i)))
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .expect("six channels");
    if delta.abs() < 1e-6 {
        return Err(Error::NoStepDetected);
    }
    let base = truth_channel(&first.truth, channel);
    let onset = log
        .rows
        .iter()
        .position(|r| (truth_channel(&r.truth, channel) - base).abs() > 0.5 * delta.abs())
        .ok_or(Error::NoStepDetected)?;
    Ok((channel, onset))
}

fn crossing_time(t: &[f64], s: &[f64], from: usize, level: f64) -> Option<(usize, f64)> {
    (from.max(1)..s.len()).find(|&i| s[i] >= level).map(|i| {
        if s[i - 1] >= level || i == from {
            return (i, t[i]);
        }
        let a = (level - s[i - 1]) / (s[i] - s[i - 1]);
        (i, t[i - 1] + a * (t[i] - t[i - 1]))
    })
}

/// 10–90 % rise time of `estimate` towards the step in `truth` that starts
/// at index `onset`. `None` if the estimate never reaches 90 %.
pub fn rise_time(t: &[f64], truth: &[f64], estimate: &[f64], onset: usize) -> Result<Option<f64>> {
    let (lo, hi) = match (truth.first(), truth.last()) {
        (Some(a), Some(b)) => (*a, *b),
        _ => return Err(Error::NoStepDetected),
    };
    let delta = hi - lo;
    if delta.abs() < 1e-12 {
        return Err(Error::NoStepDetected);
    }
    let s: Vec<f64> = estimate.iter().map(|e| (e - lo) / delta).collect();
    let Some((i10, t10)) = crossing_time(t, &s, onset, 0.1) else { return Ok(None) };
    let Some((_, t90)) = crossing_time(t, &s, i10, 0.9) else { return Ok(None) };
    Ok(Some(t90 - t10))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChannelStats {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorMetrics {
    pub estimator: String,
    pub rise_time_s: Option<f64>,
    pub steady_state: BTreeMap<String, ChannelStats>,
    pub rmse: BTreeMap<String, f64>,
    /// Root-sum-square of the force-channel RMSEs, N.
    pub force_rmse_n: f64,
    /// Root-sum-square of the torque-channel RMSEs, N·m.
    pub torque_rmse_nm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub schema: String,
    pub scenario: String,
    pub duration_s: f64,
    pub steps: usize,
    pub step_channel: Option<String>,
    pub step_onset_s: Option<f64>,
    pub truth_steady_state: BTreeMap<String, ChannelStats>,
    pub estimators: Vec<EstimatorMetrics>,
}

impl Summary {
    pub fn estimator(&self, name: &str) -> Option<&EstimatorMetrics> {
        self.estimators.iter().find(|e| e.estimator == name)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub const SUMMARY_SCHEMA: &str = "quad-wrench summary v1";

pub fn metrics(log: &TimeSeriesLog, cfg: &MetricsConfig) -> Result<Summary> {
    let last = log.rows.last().ok_or_else(|| Error::Log("empty log".into()))?;
    let end = last.time_s;
    let steady_from = end - cfg.steady_window_s;
    let step = match detect_step(log) {
        Ok(s) => Some(s),
        Err(Error::NoStepDetected) => None,
        Err(e) => return Err(e),
    };
    let window = |values: &[f64]| -> ChannelStats {
        let w: Vec<f64> =
            log.rows.iter().zip(values).filter(|(r, _)| r.time_s >= steady_from).map(|(_, v)| *v).collect();
        let (mean, std) = mean_std(&w);
        ChannelStats { mean, std }
    };

    let mut truth_steady_state = BTreeMap::new();
    for (i, name) in WRENCH_CHANNELS.iter().enumerate() {
        let v: Vec<f64> = log.rows.iter().map(|r| truth_channel(&r.truth, i)).collect();
        truth_steady_state.insert(name.to_string(), window(&v));
    }

    let mut estimators = Vec::new();
    for (e, id) in log.estimators.iter().enumerate() {
        let mut steady_state = BTreeMap::new();
        let mut rmse = BTreeMap::new();
        let mut rise_time_s = None;
        let mut sq = [0.0; 2];
        for (i, name) in WRENCH_CHANNELS.iter().enumerate() {
            let (t, truth, est) = log.channel_series(e, i);
            steady_state.insert(name.to_string(), window(&est));
            let errs: Vec<f64> = t
                .iter()
                .zip(truth.iter().zip(&est))
                .filter(|(t, _)| **t >= log.rows[0].time_s + cfg.rmse_skip_s)
                .map(|(_, (a, b))| (a - b).powi(2))
                .collect();
            let r = (errs.iter().sum::<f64>() / errs.len().max(1) as f64).sqrt();
            sq[i / 3] += r * r;
            rmse.insert(name.to_string(), r);
            if let Some((channel, onset)) = step {
                if channel == i {
                    rise_time_s = rise_time(&t, &truth, &est, onset)?;
                }
            }
        }
        estimators.push(EstimatorMetrics {
            estimator: id.as_str().to_string(),
            rise_time_s,
            steady_state,
            rmse,
            force_rmse_n: sq[0].sqrt(),
            torque_rmse_nm: sq[1].sqrt(),
        });
    }

    Ok(Summary {
        schema: SUMMARY_SCHEMA.into(),
        scenario: log.scenario.clone(),
        duration_s: end - log.rows[0].time_s,
        steps: log.rows.len(),
        step_channel: step.map(|(c, _)| WRENCH_CHANNELS[c].to_string()),
        step_onset_s: step.map(|(_, k)| log.rows[k].time_s),
        truth_steady_state,
        estimators,
    })
}

/// Lateral tracking performance against a fan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrackingMetrics {
    pub initial_error_m: f64,
    /// Time after which the error stays below the threshold until the fan
    /// starts moving (or the log ends). `None` if it never does.
    pub convergence_time_s: Option<f64>,
    pub threshold_m: f64,
    /// Largest error while the fan moves, after `settle_s` of motion.
    pub moving_max_error_m: Option<f64>,
    pub moving_mean_error_m: Option<f64>,
}

pub fn tracking_metrics(log: &TimeSeriesLog, fan: &FanModel, threshold_m: f64, settle_s: f64) -> TrackingMetrics {
    let moving = fan.velocity.norm() > 0.0;
    let static_end = if moving { fan.motion_start_s } else { f64::INFINITY };
    let err: Vec<(f64, f64)> =
        log.rows.iter().map(|r| (r.time_s, fan.lateral_offset(&r.truth.position, r.time_s).abs())).collect();
    let static_phase: Vec<&(f64, f64)> = err.iter().filter(|(t, _)| *t < static_end).collect();
    let convergence_time_s = match static_phase.iter().rposition(|(_, e)| *e >= threshold_m) {
        None => static_phase.first().map(|(t, _)| *t),
        Some(i) if i + 1 < static_phase.len() => Some(static_phase[i + 1].0),
        Some(_) => None,
    };
    let moving_errs: Vec<f64> =
        err.iter().filter(|(t, _)| moving && *t >= static_end + settle_s).map(|(_, e)| *e).collect();
    TrackingMetrics {
        initial_error_m: err.first().map(|(_, e)| *e).unwrap_or(f64::NAN),
        convergence_time_s,
        threshold_m,
        moving_max_error_m: moving_errs.iter().copied().reduce(f64::max),
        moving_mean_error_m: (!moving_errs.is_empty()).then(|| mean_std(&moving_errs).0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn admittance_basics() {
        let cfg = AdmittanceConfig::default();
        assert_eq!(admittance_command(0.0, &cfg), 0.0);
        assert_eq!(admittance_command(0.004, &cfg), 0.0);
        assert!(admittance_command(0.01, &cfg) > 0.0);
        assert!(admittance_command(-0.01, &cfg) < 0.0);
        assert_eq!(admittance_command(10.0, &cfg), cfg.limit_mps);
        assert_eq!(admittance_command(0.01, &cfg), -admittance_command(-0.01, &cfg));
    }

    #[test]
    fn first_order_rise_time() {
        let tau = 0.45;
        let t: Vec<f64> = (0..4000).map(|k| k as f64 * 0.001).collect();
        let onset = 1000;
        let truth: Vec<f64> = (0..t.len()).map(|k| if k >= onset { -0.52 } else { 0.0 }).collect();
        let est: Vec<f64> = t
            .iter()
            .map(|ti| if *ti >= 1.0 { -0.52 * (1.0 - (-(ti - 1.0) / tau).exp()) } else { 0.0 })
            .collect();
        let r = rise_time(&t, &truth, &est, onset).unwrap().unwrap();
        assert!((r - 9f64.ln() * tau).abs() < 2e-3, "rise {r}");
    }

    #[test]
    fn flat_truth_has_no_step() {
        let t = [0.0, 1.0, 2.0];
        assert!(matches!(rise_time(&t, &[0.0; 3], &[0.0; 3], 0), Err(Error::NoStepDetected)));
    }

    #[test]
    fn mean_std_small_cases() {
        assert_eq!(mean_std(&[2.0]), (2.0, 0.0));
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 2f64.sqrt()).abs() < 1e-15);
    }
}
