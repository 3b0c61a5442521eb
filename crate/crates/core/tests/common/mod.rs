//! Statistical checks shared by the property suites and the acceptance report.
#![allow(dead_code)]

use nalgebra::{SMatrix, SVector, Vector3, Vector4};
use quad_wrench::attitude::apply_mrp;
use quad_wrench::model::{process_step, MotorSpeeds, NoiseConfig, ProcessNoiseSample, VehicleParams, VehicleState};
use quad_wrench::sim::{ControllerGains, FlightController, Mixer, Reference};
use quad_wrench::usque::{
    from_minimal, nees, predict, to_minimal, BlockStd, GaussianBelief, PoseMeasurement, StateCov, StateVector,
    UsqueConfig, UsqueFilter, STATE_DIM,
};
use quad_wrench::AttitudeQuaternion;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{ChiSquared, ContinuousCDF};

pub fn gaussian<const N: usize>(rng: &mut ChaCha8Rng) -> SVector<f64, N> {
    SVector::from_fn(|_, _| StandardNormal.sample(rng))
}

pub fn random_spd<const N: usize>(rng: &mut ChaCha8Rng, scale: f64) -> SMatrix<f64, N, N> {
    let a: SMatrix<f64, N, N> = SMatrix::from_fn(|_, _| StandardNormal.sample(rng));
    scale * (a * a.transpose() / N as f64 + SMatrix::identity() * 0.1)
}

/// A tilted, moving prior with the default block uncertainties.
pub fn moving_prior() -> GaussianBelief {
    let mean = VehicleState {
        q: AttitudeQuaternion::from_axis_angle(&Vector3::new(0.2, -0.1, 1.0), 0.3),
        omega: Vector3::new(0.05, -0.02, 0.1),
        position: Vector3::new(0.5, -0.3, 1.0),
        velocity: Vector3::new(0.1, 0.0, -0.05),
        torque_ext: Vector3::new(0.002, -0.001, 0.0),
        force_ext: Vector3::new(0.0, 0.05, -0.2),
    };
    GaussianBelief::with_block_std(0.0, mean, &BlockStd::default())
}

pub fn uneven_speeds() -> MotorSpeeds {
    MotorSpeeds(Vector4::new(382.0, 388.0, 385.0, 379.0))
}

/// Largest deviations of a sampled one-step prediction from the filter's:
/// mean in units of the predicted std, relative variance, and correlation.
#[derive(Debug, Clone, Copy)]
pub struct MonteCarloMismatch {
    pub mean_std: f64,
    pub variance_rel: f64,
    pub correlation: f64,
}

pub fn monte_carlo_prediction(samples: usize, seed: u64) -> MonteCarloMismatch {
    let p = VehicleParams::ar_drone();
    let noise = NoiseConfig::default();
    let b = moving_prior();
    let speeds = uneven_speeds();
    let pred = predict(&b, &speeds, &noise, &p, 2.0).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chol = b.cov.cholesky().unwrap().l();
    let q_std = noise.process_cov().map_diagonal(f64::sqrt);
    let reference = to_minimal(&b.mean, &b.mean.q).unwrap();
    let draws: Vec<StateVector> = (0..samples)
        .map(|_| {
            let z: StateVector = gaussian(&mut rng);
            let s = from_minimal(&(reference + chol * z), &b.mean.q);
            let w: SVector<f64, 12> = gaussian(&mut rng);
            let eta = ProcessNoiseSample::from_stacked(&q_std.component_mul(&w));
            to_minimal(&process_step(&s, &speeds, &eta, &p), &pred.mean.q).unwrap()
        })
        .collect();
    let n = samples as f64;
    let mean = draws.iter().fold(StateVector::zeros(), |a, x| a + x) / n;
    let cov = draws.iter().fold(StateCov::zeros(), |a, x| a + (x - mean) * (x - mean).transpose()) / (n - 1.0);
    let ukf_mean = to_minimal(&pred.mean, &pred.mean.q).unwrap();

    let sd = pred.cov.map_diagonal(f64::sqrt);
    let mean_std = (mean - ukf_mean).component_div(&sd).amax();
    let variance_rel = (cov.diagonal() - pred.cov.diagonal()).component_div(&pred.cov.diagonal()).amax();
    let d = SMatrix::from_diagonal(&sd.map(|v| 1.0 / v));
    let correlation = (d * (cov - pred.cov) * d).amax();
    MonteCarloMismatch { mean_std, variance_rel, correlation }
}

fn nees_trace(seed: u64, duration_s: f64) -> Vec<f64> {
    let p = VehicleParams::ar_drone();
    let noise = NoiseConfig::default();
    let dt = p.step_s();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut truth = VehicleState::at_rest(Vector3::new(0.0, 0.0, 1.0));
    let initial = GaussianBelief::with_block_std(0.0, truth, &BlockStd::default());
    let chol = initial.cov.cholesky().unwrap().l();
    let offset: StateVector = chol * gaussian::<STATE_DIM>(&mut rng);
    let start = from_minimal(&(to_minimal(&truth, &truth.q).unwrap() + offset), &truth.q);
    let mut filter =
        UsqueFilter::new(p.clone(), noise.clone(), UsqueConfig::default(), GaussianBelief::new(0.0, start, initial.cov));

    let mixer = Mixer::new(&p, 700.0, false).unwrap();
    let mut ctl = FlightController::new(p.clone(), ControllerGains::default(), mixer);
    let reference = Reference::hold(truth.position, 0.0);
    let q_std = noise.process_cov().map_diagonal(f64::sqrt);
    let g_std = noise.measurement_cov().map_diagonal(f64::sqrt);

    let steps = (duration_s / dt).round() as usize;
    let mut out = Vec::with_capacity(steps);
    for k in 1..=steps {
        let cmd = ctl.command(&truth, &reference, dt).speeds;
        let eta = ProcessNoiseSample::from_stacked(&q_std.component_mul(&gaussian::<12>(&mut rng)));
        truth = process_step(&truth, &cmd, &eta, &p);
        let v = g_std.component_mul(&gaussian::<6>(&mut rng));
        let y = PoseMeasurement {
            time_s: k as f64 * dt,
            position: truth.position + v.fixed_rows::<3>(0),
            q: apply_mrp(&v.fixed_rows::<3>(3).into_owned(), &truth.q),
        };
        filter.step(&cmd, Some(&y)).unwrap();
        out.push(nees(filter.belief(), &truth).unwrap());
    }
    out
}

#[derive(Debug, Clone, Copy)]
pub struct NeesCoverage {
    pub band: (f64, f64),
    pub mean: f64,
    /// Fraction of steps whose run-averaged NEES lies inside the band.
    pub inside: f64,
}

/// Run-averaged NEES against the two-sided 95 % chi-square band, with the
/// truth drawn from the filter's own process and measurement noise.
pub fn nees_coverage(runs: usize, duration_s: f64) -> NeesCoverage {
    let traces: Vec<Vec<f64>> = (0..runs as u64).map(|s| nees_trace(1000 + s, duration_s)).collect();
    let steps = traces[0].len();
    let chi = ChiSquared::new((runs * STATE_DIM) as f64).unwrap();
    let lo = chi.inverse_cdf(0.025) / runs as f64;
    let hi = chi.inverse_cdf(0.975) / runs as f64;
    let averaged: Vec<f64> = (0..steps).map(|k| traces.iter().map(|t| t[k]).sum::<f64>() / runs as f64).collect();
    let inside = averaged.iter().filter(|v| (lo..=hi).contains(*v)).count() as f64 / steps as f64;
    NeesCoverage { band: (lo, hi), mean: averaged.iter().sum::<f64>() / steps as f64, inside }
}
