//! End-to-end execution of a [`RunConfig`]: simulate, then post-process.

use serde::Serialize;

use crate::apps::{build_wrench_map, metrics, tracking_metrics, Summary, TrackingMetrics, WrenchMapCell};
use crate::config::RunConfig;
use crate::error::Result;
use crate::log::TimeSeriesLog;
use crate::sim::{run_scenario, Trajectory};

/// Lateral error threshold for fan-tracking convergence, m.
pub const TRACKING_THRESHOLD_M: f64 = 0.1;
/// Time after the fan starts moving before tracking error is scored, s.
pub const TRACKING_SETTLE_S: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    /// Comparison level, if the config defines several.
    pub label: Option<String>,
    pub log: TimeSeriesLog,
    pub summary: Summary,
    pub tracking: Option<TrackingMetrics>,
    pub wrench_map: Option<Vec<WrenchMapCell>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RmseRow {
    pub level: String,
    pub estimator: String,
    pub force_rmse_n: f64,
    pub torque_rmse_nm: f64,
}

/// Top-level summary of a run, possibly spanning several noise levels.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub scenario: String,
    pub seed: u64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub rmse_table: Vec<RmseRow>,
    pub runs: Vec<LabeledSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabeledSummary {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub level: Option<String>,
    pub summary: Summary,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tracking: Option<TrackingMetrics>,
}

pub fn execute(cfg: &RunConfig) -> Result<Vec<RunOutput>> {
    let mut out = Vec::new();
    for run in cfg.resolve()? {
        let log = run_scenario(&run.scenario, &run.setup)?;
        let summary = metrics(&log, &cfg.metrics_config())?;
        let tracking = match (&run.scenario.trajectory, run.scenario.disturbance.fan()) {
            (Trajectory::TrackFan(_), Some(fan)) => {
                Some(tracking_metrics(&log, fan, TRACKING_THRESHOLD_M, TRACKING_SETTLE_S))
            }
            _ => None,
        };
        let wrench_map = match &run.scenario.trajectory {
            Trajectory::WaypointGrid(grid) => Some(build_wrench_map(&log, 0, grid, cfg.metrics.map_settling_s)?),
            _ => None,
        };
        out.push(RunOutput { label: run.label, log, summary, tracking, wrench_map });
    }
    Ok(out)
}

pub fn report(cfg: &RunConfig, outputs: &[RunOutput]) -> RunReport {
    let mut rmse_table = Vec::new();
    if outputs.len() > 1 {
        for o in outputs {
            for e in &o.summary.estimators {
                rmse_table.push(RmseRow {
                    level: o.label.clone().unwrap_or_default(),
                    estimator: e.estimator.clone(),
                    force_rmse_n: e.force_rmse_n,
                    torque_rmse_nm: e.torque_rmse_nm,
                });
            }
        }
    }
    RunReport {
        scenario: cfg.scenario.name.clone(),
        seed: cfg.scenario.seed,
        rmse_table,
        runs: outputs
            .iter()
            .map(|o| LabeledSummary { level: o.label.clone(), summary: o.summary.clone(), tracking: o.tracking })
            .collect(),
    }
}
