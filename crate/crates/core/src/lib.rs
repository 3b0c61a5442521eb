//! External force and torque estimation for quadrotors.
//!
//! The crate contains the unscented quaternion estimator ([`usque`]), the
//! discrete-time vehicle model it shares with the ground-truth simulator
//! ([`model`], [`sim`]), a momentum-observer baseline ([`observer`]) and the
//! post-processing and control applications built on the estimates
//! ([`apps`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod apps;
pub mod attitude;
pub mod config;
pub mod error;
pub mod harness;
pub mod log;
pub mod model;
pub mod observer;
pub mod presets;
pub mod sim;
pub mod usque;

pub use attitude::{AttitudeQuaternion, MrpVector, RotationMatrix};
pub use error::{Error, Result};
pub use model::{MotorSpeeds, NoiseConfig, ProcessNoiseSample, VehicleParams, VehicleState};
pub use usque::{GaussianBelief, PoseMeasurement, UsqueConfig, UsqueFilter};
pub use log::{EstimatorId, LogRow, TimeSeriesLog};
pub use observer::{MomentumObserver, ObserverConfig};
pub use sim::{run_scenario, RunSetup, Scenario};
pub use config::RunConfig;
