use nalgebra::DMatrix;
use thiserror::Error;

/// Errors produced by the estimators, the simulator and the log tooling.
#[derive(Debug, Error)]
pub enum Error {
    #[error("error quaternion too close to a full turn (dq0 = {dq0}); MRP is singular")]
    NearSingularRotation { dq0: f64 },

    #[error("covariance of dimension {} is not positive definite, even after jitter", .cov.nrows())]
    CovarianceNotPD { cov: Box<DMatrix<f64>> },

    #[error("innovation covariance is singular (condition number {condition:.3e})")]
    InnovationCovarianceSingular { condition: f64 },

    #[error("measurement rejected by innovation gate (Mahalanobis^2 = {mahalanobis_sq:.3})")]
    MeasurementRejected { mahalanobis_sq: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("wrench map cell at ({x:.2}, {y:.2}) has no samples")]
    EmptyCell { x: f64, y: f64 },

    #[error("no step found in the truth wrench channels")]
    NoStepDetected,

    #[error("simulation diverged at t = {time_s:.3} s")]
    Diverged { time_s: f64 },

    #[error("malformed log: {0}")]
    Log(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Name of the component that raised the error.
    pub fn module(&self) -> &'static str {
        match self {
            Error::NearSingularRotation { .. } => "attitude",
            Error::CovarianceNotPD { .. }
            | Error::InnovationCovarianceSingular { .. }
            | Error::MeasurementRejected { .. } => "usque",
            Error::Config(_) => "config",
            Error::EmptyCell { .. } | Error::NoStepDetected => "apps",
            Error::Diverged { .. } => "sim",
            Error::Log(_) | Error::Io(_) | Error::Csv(_) | Error::Json(_) => "log",
        }
    }

    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
