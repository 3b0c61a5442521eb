//! Unscented quaternion estimator of the full vehicle state, including the
//! external force and torque.
//!
//! The attitude mean is carried as a unit quaternion; its uncertainty lives in
//! the first three minimal coordinates as an MRP perturbation applied on the
//! left of the mean. Minimal coordinates are ordered
//! `(δρ, ω, x, ẋ, τe, fe)`.

pub mod sigma;

use nalgebra::{SMatrix, SVector, Vector3};

use crate::attitude::{apply_mrp, relative_mrp, AttitudeQuaternion};
use crate::error::{Error, Result};
use crate::model::{process_step, MotorSpeeds, NoiseConfig, ProcessNoiseSample, VehicleParams, VehicleState};

pub use sigma::{generate_sigma_points, unscented_transform, weights, SigmaPointSet};

pub const STATE_DIM: usize = 18;
pub const PROCESS_NOISE_DIM: usize = 12;
pub const MEAS_DIM: usize = 6;
const PRED_DIM: usize = STATE_DIM + PROCESS_NOISE_DIM;
const CORR_DIM: usize = STATE_DIM + MEAS_DIM;

/// Offsets of each block in the minimal state vector.
pub mod idx {
    pub const ATT: usize = 0;
    pub const OMEGA: usize = 3;
    pub const POS: usize = 6;
    pub const VEL: usize = 9;
    pub const TORQUE: usize = 12;
    pub const FORCE: usize = 15;
}

/// Chi-square 95% quantile for 6 degrees of freedom.
pub const GATE_CHI2_95_6DOF: f64 = 12.591_587_243_743_977;

/// Largest tolerated condition number of the innovation covariance.
pub const MAX_INNOVATION_CONDITION: f64 = 1e12;

pub type StateVector = SVector<f64, STATE_DIM>;
pub type StateCov = SMatrix<f64, STATE_DIM, STATE_DIM>;

/// Mean and covariance of the state. `cov` is expressed in minimal
/// coordinates with the attitude block measured about `mean.q`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBelief {
    pub time_s: f64,
    pub mean: VehicleState,
    pub cov: StateCov,
}

impl GaussianBelief {
    pub fn new(time_s: f64, mean: VehicleState, cov: StateCov) -> Self {
        Self { time_s, mean, cov: symmetrize(&cov) }
    }

    /// Diagonal prior with the given per-block standard deviations.
    pub fn with_block_std(time_s: f64, mean: VehicleState, std: &BlockStd) -> Self {
        let mut cov = StateCov::zeros();
        let blocks = [
            (idx::ATT, std.attitude_mrp),
            (idx::OMEGA, std.omega),
            (idx::POS, std.position),
            (idx::VEL, std.velocity),
            (idx::TORQUE, std.torque_ext),
            (idx::FORCE, std.force_ext),
        ];
        for (at, s) in blocks {
            for i in 0..3 {
                cov[(at + i, at + i)] = s * s;
            }
        }
        Self::new(time_s, mean, cov)
    }

    pub fn force_cov(&self) -> SMatrix<f64, 3, 3> {
        self.cov.fixed_view::<3, 3>(idx::FORCE, idx::FORCE).into_owned()
    }

    pub fn torque_cov(&self) -> SMatrix<f64, 3, 3> {
        self.cov.fixed_view::<3, 3>(idx::TORQUE, idx::TORQUE).into_owned()
    }
}

/// Per-block standard deviations of a diagonal covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockStd {
    pub attitude_mrp: f64,
    pub omega: f64,
    pub position: f64,
    pub velocity: f64,
    pub torque_ext: f64,
    pub force_ext: f64,
}

impl Default for BlockStd {
    fn default() -> Self {
        Self { attitude_mrp: 0.01, omega: 0.1, position: 0.01, velocity: 0.1, torque_ext: 0.01, force_ext: 0.1 }
    }
}

/// Motion-capture pose sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseMeasurement {
    pub time_s: f64,
    pub position: Vector3<f64>,
    pub q: AttitudeQuaternion,
}

/// Intermediate quantities of one correction.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectionArtifacts {
    pub gain: SMatrix<f64, STATE_DIM, MEAS_DIM>,
    pub cross_cov: SMatrix<f64, STATE_DIM, MEAS_DIM>,
    pub innovation_cov: SMatrix<f64, MEAS_DIM, MEAS_DIM>,
    /// Position residual followed by the MRP attitude residual.
    pub innovation: SVector<f64, MEAS_DIM>,
    pub mahalanobis_sq: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UsqueConfig {
    pub kappa: f64,
    /// Skip corrections whose squared Mahalanobis distance exceeds this.
    pub innovation_gate: Option<f64>,
}

impl Default for UsqueConfig {
    fn default() -> Self {
        Self { kappa: 2.0, innovation_gate: None }
    }
}

pub fn symmetrize<const N: usize>(m: &SMatrix<f64, N, N>) -> SMatrix<f64, N, N> {
    0.5 * (m + m.transpose())
}

/// Minimal coordinates of `s` with the attitude expressed about `reference`.
pub fn to_minimal(s: &VehicleState, reference: &AttitudeQuaternion) -> Result<StateVector> {
    let mut v = StateVector::zeros();
    v.fixed_rows_mut::<3>(idx::ATT).copy_from(&relative_mrp(&s.q, reference)?.0);
    v.fixed_rows_mut::<3>(idx::OMEGA).copy_from(&s.omega);
    v.fixed_rows_mut::<3>(idx::POS).copy_from(&s.position);
    v.fixed_rows_mut::<3>(idx::VEL).copy_from(&s.velocity);
    v.fixed_rows_mut::<3>(idx::TORQUE).copy_from(&s.torque_ext);
    v.fixed_rows_mut::<3>(idx::FORCE).copy_from(&s.force_ext);
    Ok(v)
}

pub fn from_minimal(v: &StateVector, reference: &AttitudeQuaternion) -> VehicleState {
    let block = |at: usize| -> Vector3<f64> { v.fixed_rows::<3>(at).into_owned() };
    VehicleState {
        q: apply_mrp(&block(idx::ATT), reference),
        omega: block(idx::OMEGA),
        position: block(idx::POS),
        velocity: block(idx::VEL),
        torque_ext: block(idx::TORQUE),
        force_ext: block(idx::FORCE),
    }
}

/// Error `truth - estimate` in minimal coordinates, attitude as the MRP of
/// `truth.q * estimate.q⁻¹`.
pub fn estimation_error(estimate: &VehicleState, truth: &VehicleState) -> Result<StateVector> {
    let mut e = to_minimal(truth, &estimate.q)?;
    let m = to_minimal(estimate, &estimate.q)?;
    e -= m;
    Ok(e)
}

/// Normalized estimation error squared of `truth` under `belief`.
pub fn nees(belief: &GaussianBelief, truth: &VehicleState) -> Result<f64> {
    let e = estimation_error(&belief.mean, truth)?;
    let chol = belief
        .cov
        .cholesky()
        .ok_or_else(|| Error::CovarianceNotPD { cov: Box::new(nalgebra::DMatrix::from_iterator(18, 18, belief.cov.iter().copied())) })?;
    Ok(e.dot(&chol.solve(&e)))
}

/// Time update.
pub fn predict(
    prior: &GaussianBelief,
    speeds: &MotorSpeeds,
    noise: &NoiseConfig,
    params: &VehicleParams,
    kappa: f64,
) -> Result<GaussianBelief> {
    let reference = prior.mean.q;
    let mut mean = SVector::<f64, PRED_DIM>::zeros();
    mean.fixed_rows_mut::<STATE_DIM>(0).copy_from(&to_minimal(&prior.mean, &reference)?);
    let mut cov = SMatrix::<f64, PRED_DIM, PRED_DIM>::zeros();
    cov.fixed_view_mut::<STATE_DIM, STATE_DIM>(0, 0).copy_from(&prior.cov);
    cov.fixed_view_mut::<PROCESS_NOISE_DIM, PROCESS_NOISE_DIM>(STATE_DIM, STATE_DIM)
        .copy_from(&noise.process_cov());

    let set = generate_sigma_points(&mean, &cov, kappa)?;
    let propagated: Vec<VehicleState> = set
        .points
        .iter()
        .map(|p| {
            let s = from_minimal(&p.fixed_rows::<STATE_DIM>(0).into_owned(), &reference);
            let eta = ProcessNoiseSample::from_stacked(&p.fixed_rows::<PROCESS_NOISE_DIM>(STATE_DIM).into_owned());
            process_step(&s, speeds, &eta, params)
        })
        .collect();

    let pred_ref = propagated[0].q;
    let minimal = propagated.iter().map(|s| to_minimal(s, &pred_ref)).collect::<Result<Vec<_>>>()?;
    let m = sigma::weighted_mean(&set.weights, &minimal);
    let p = sigma::weighted_cross_cov(&set.weights, &minimal, &m, &minimal, &m);

    // Fold the mean attitude perturbation into the reference and re-zero it.
    let mean_state = from_minimal(&m, &pred_ref);
    Ok(GaussianBelief::new(prior.time_s + params.step_s(), mean_state, p))
}

/// Measurement update with a full pose.
pub fn correct(
    pred: &GaussianBelief,
    y: &PoseMeasurement,
    noise: &NoiseConfig,
    config: &UsqueConfig,
) -> Result<(GaussianBelief, CorrectionArtifacts)> {
    let reference = pred.mean.q;
    let x_pred = to_minimal(&pred.mean, &reference)?;
    let mut mean = SVector::<f64, CORR_DIM>::zeros();
    mean.fixed_rows_mut::<STATE_DIM>(0).copy_from(&x_pred);
    let mut cov = SMatrix::<f64, CORR_DIM, CORR_DIM>::zeros();
    cov.fixed_view_mut::<STATE_DIM, STATE_DIM>(0, 0).copy_from(&pred.cov);
    cov.fixed_view_mut::<MEAS_DIM, MEAS_DIM>(STATE_DIM, STATE_DIM).copy_from(&noise.measurement_cov());

    let set = generate_sigma_points(&mean, &cov, config.kappa)?;
    let xs: Vec<StateVector> = set.points.iter().map(|p| p.fixed_rows::<STATE_DIM>(0).into_owned()).collect();
    let ys: Vec<SVector<f64, MEAS_DIM>> = set
        .points
        .iter()
        .map(|p| {
            let pos = p.fixed_rows::<3>(idx::POS) + p.fixed_rows::<3>(STATE_DIM);
            let att = p.fixed_rows::<3>(idx::ATT) + p.fixed_rows::<3>(STATE_DIM + 3);
            SVector::<f64, MEAS_DIM>::new(pos[0], pos[1], pos[2], att[0], att[1], att[2])
        })
        .collect();

    let x_mean = sigma::weighted_mean(&set.weights, &xs);
    let y_mean = sigma::weighted_mean(&set.weights, &ys);
    let syy = symmetrize(&sigma::weighted_cross_cov(&set.weights, &ys, &y_mean, &ys, &y_mean));
    let sxy = sigma::weighted_cross_cov(&set.weights, &xs, &x_mean, &ys, &y_mean);

    let eig = syy.symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(condition <= MAX_INNOVATION_CONDITION) {
        return Err(Error::InnovationCovarianceSingular { condition });
    }
    let chol = syy.cholesky().ok_or(Error::InnovationCovarianceSingular { condition })?;
    let gain = chol.solve(&sxy.transpose()).transpose();

    let att_residual = relative_mrp(&y.q, &reference)?.0;
    let measured = SVector::<f64, MEAS_DIM>::new(
        y.position.x,
        y.position.y,
        y.position.z,
        att_residual.x,
        att_residual.y,
        att_residual.z,
    );
    let innovation = measured - y_mean;
    let mahalanobis_sq = innovation.dot(&chol.solve(&innovation));
    if let Some(gate) = config.innovation_gate {
        if mahalanobis_sq > gate {
            return Err(Error::MeasurementRejected { mahalanobis_sq });
        }
    }

    let delta = gain * innovation;
    let cov_post = symmetrize(&(pred.cov - gain * sxy.transpose()));
    let mean_post = from_minimal(&(x_pred + delta), &reference);

    Ok((
        GaussianBelief::new(y.time_s, mean_post, cov_post),
        CorrectionArtifacts { gain, cross_cov: sxy, innovation_cov: syy, innovation, mahalanobis_sq },
    ))
}

/// Result of one filter step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    Predicted,
    Corrected,
    Rejected,
}

/// Sequential estimator: predict every step, correct when a pose arrives.
#[derive(Debug, Clone)]
pub struct UsqueFilter {
    params: VehicleParams,
    noise: NoiseConfig,
    config: UsqueConfig,
    belief: GaussianBelief,
    rejected: usize,
}

impl UsqueFilter {
    pub fn new(params: VehicleParams, noise: NoiseConfig, config: UsqueConfig, initial: GaussianBelief) -> Self {
        Self { params, noise, config, belief: initial, rejected: 0 }
    }

    /// Starts at rest at the measured pose with zero wrench.
    pub fn from_first_pose(
        params: VehicleParams,
        noise: NoiseConfig,
        config: UsqueConfig,
        y: &PoseMeasurement,
        std: &BlockStd,
    ) -> Self {
        let mut mean = VehicleState::at_rest(y.position);
        mean.q = y.q;
        Self::new(params, noise, config, GaussianBelief::with_block_std(y.time_s, mean, std))
    }

    pub fn belief(&self) -> &GaussianBelief {
        &self.belief
    }

    pub fn rejected_count(&self) -> usize {
        self.rejected
    }

    pub fn params(&self) -> &VehicleParams {
        &self.params
    }

    /// `speeds` are the motor rates applied since the previous step.
    pub fn step(&mut self, speeds: &MotorSpeeds, y: Option<&PoseMeasurement>) -> Result<StepOutcome> {
        let pred = predict(&self.belief, speeds, &self.noise, &self.params, self.config.kappa)?;
        let Some(y) = y else {
            self.belief = pred;
            return Ok(StepOutcome::Predicted);
        };
        match correct(&pred, y, &self.noise, &self.config) {
            Ok((post, _)) => {
                self.belief = post;
                Ok(StepOutcome::Corrected)
            }
            Err(Error::MeasurementRejected { .. }) => {
                self.rejected += 1;
                self.belief = pred;
                Ok(StepOutcome::Rejected)
            }
            Err(e) => Err(e),
        }
    }
}
