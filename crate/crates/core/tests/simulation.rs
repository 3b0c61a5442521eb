use std::collections::BTreeSet;

use nalgebra::Vector3;
use proptest::prelude::*;
use quad_wrench::apps::{admittance_command, build_wrench_map, rise_time, AdmittanceConfig, DEFAULT_SETTLING_S};
use quad_wrench::model::{process_step, MotorSpeeds, ProcessNoiseSample, VehicleParams, VehicleState};
use quad_wrench::sim::{truth_step, ControllerGains, Disturbance, FanModel, FlightController, GridSurvey, Mixer, Reference};
use quad_wrench::{presets, run_scenario, MomentumObserver, ObserverConfig, PoseMeasurement, RunConfig, TimeSeriesLog};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn preset(name: &str, overrides: &[&str]) -> RunConfig {
    let text = presets::find(name).unwrap().toml;
    let o: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
    RunConfig::from_toml_with_overrides(text, &o).unwrap()
}

fn simulate(cfg: &RunConfig) -> TimeSeriesLog {
    let run = cfg.resolve().unwrap().remove(0);
    run_scenario(&run.scenario, &run.setup).unwrap()
}

#[test]
fn truth_and_filter_models_agree_without_noise() {
    let p = VehicleParams::ar_drone();
    let mixer = Mixer::new(&p, 700.0, true).unwrap();
    let mut ctl = FlightController::new(p.clone(), ControllerGains::default(), mixer);
    let r = Reference::hold(Vector3::new(0.3, -0.2, 1.2), 0.4);
    let force = Vector3::new(0.1, -0.2, -0.3);
    let torque = Vector3::new(0.004, 0.0, -0.01);
    let mut s = VehicleState::at_rest(Vector3::new(0.0, 0.0, 1.0));
    s.force_ext = force;
    s.torque_ext = torque;
    for _ in 0..1000 {
        let cmd = ctl.command(&s, &r, p.step_s()).speeds;
        let a = truth_step(&s, &cmd, &force, &torque, &p);
        let b = process_step(&s, &cmd, &ProcessNoiseSample::zero(), &p);
        assert_eq!(a, b);
        s = a;
    }
}

#[test]
fn fan_field_is_mirror_symmetric() {
    let fan = FanModel::default();
    for k in 0..200 {
        let r = 0.01 * k as f64;
        assert!((fan.torque_z(r) + fan.torque_z(-r)).abs() < 1e-12);
        for axial in [0.5, 1.0, 2.5] {
            let (f1, t1) = fan.wrench_at(&Vector3::new(axial, r, 1.0), 0.0);
            let (f2, t2) = fan.wrench_at(&Vector3::new(axial, -r, 1.0), 0.0);
            assert!((f1 - f2).amax() < 1e-12);
            assert!((t1.z + t2.z).abs() < 1e-12);
        }
    }
    let peak = fan.torque_z(fan.torque_peak_offset_m);
    assert!((peak - fan.torque_peak_nm).abs() < 1e-15);
    assert_eq!(fan.wrench_at(&Vector3::new(-0.5, 0.0, 1.0), 0.0).0, Vector3::zeros());
}

#[test]
fn hover_run_shape_and_accuracy() {
    let cfg = preset("hover", &[]);
    let log = simulate(&cfg);
    assert_eq!(log.rows.len(), 4000);
    let dt = log.step_s;
    for (k, row) in log.rows.iter().enumerate() {
        assert_eq!(row.time_s, k as f64 * dt);
        if row.time_s >= 1.0 {
            assert!((row.truth.position - row.reference).norm() < 0.02);
        }
    }
}

#[test]
fn runs_are_reproducible_from_the_seed() {
    let a = simulate(&preset("mass-step", &["scenario.duration_s=5"]));
    let b = simulate(&preset("mass-step", &["scenario.duration_s=5"]));
    assert_eq!(a, b);
    let c = simulate(&preset("mass-step", &["scenario.duration_s=5", "scenario.seed=8"]));
    assert_ne!(a, c);
}

#[test]
fn log_round_trips_through_csv() {
    let log = simulate(&preset("mass-step", &["scenario.duration_s=2", "scenario.estimators=\"both\""]));
    let mut buf = Vec::new();
    log.write_csv(&mut buf).unwrap();
    let back = TimeSeriesLog::read_csv(buf.as_slice()).unwrap();
    assert_eq!(back, log);
}

#[test]
fn hanging_mass_produces_its_weight() {
    let cfg = preset("mass-step", &[]);
    let run = cfg.resolve().unwrap().remove(0);
    let Disturbance::StepMass { mass_kg, onset_s, .. } = run.scenario.disturbance else { panic!("step mass") };
    assert_eq!(mass_kg, 0.053);
    let g = *VehicleParams::ar_drone().gravity();
    let s = VehicleState::at_rest(Vector3::new(0.0, 0.0, 1.0));
    let (f, t) = run.scenario.disturbance.wrench(&s, onset_s, &g);
    assert!((f - Vector3::new(0.0, 0.0, -0.053 * 9.81)).norm() < 1e-12);
    assert!((f.z + 0.52).abs() < 0.001);
    assert_eq!(t, Vector3::zeros());
    assert_eq!(run.scenario.disturbance.wrench(&s, onset_s - 0.005, &g), (Vector3::zeros(), Vector3::zeros()));
}

#[test]
fn observer_converges_to_a_constant_force() {
    let p = VehicleParams::ar_drone();
    let dt = p.step_s();
    let cfg = ObserverConfig::default();
    let mut obs = MomentumObserver::new(p.clone(), cfg, dt).unwrap();
    let mixer = Mixer::new(&p, 700.0, false).unwrap();
    let mut ctl = FlightController::new(p.clone(), ControllerGains::default(), mixer);
    let force = Vector3::new(-0.52, 0.0, 0.0);
    let mut s = VehicleState::at_rest(Vector3::new(0.0, 0.0, 1.0));
    let r = Reference::hold(s.position, 0.0);
    let settle = 5.0 / cfg.force_gain;
    let steps = (settle / dt).round() as usize;
    for k in 0..=steps {
        let cmd: MotorSpeeds = ctl.command(&s, &r, dt).speeds;
        obs.step(&PoseMeasurement { time_s: k as f64 * dt, position: s.position, q: s.q }, &cmd);
        s = truth_step(&s, &cmd, &force, &Vector3::zeros(), &p);
    }
    let err = (obs.force() - force).norm();
    println!("observer error after five time constants: {err:.4} N");
    assert!(err < 0.05 * force.norm(), "error {err}");
    assert!(obs.torque().norm() < 0.005);
}

#[test]
fn survey_visits_every_grid_point() {
    let cfg = preset("fan-survey", &[]);
    let grid = cfg.grid_survey();
    assert_eq!(grid.waypoints().len(), 25);
    let log = simulate(&cfg);
    let segments: BTreeSet<usize> = log.rows.iter().filter_map(|r| r.segment).collect();
    assert_eq!(segments, (0..25).collect());

    let map = build_wrench_map(&log, 0, &grid, DEFAULT_SETTLING_S).unwrap();
    // The fan's yaw torque changes sign across the axis.
    for a in &map {
        if a.position.y.abs() < 1e-9 {
            continue;
        }
        let b = map.iter().find(|b| (b.position.x - a.position.x).abs() < 1e-9 && (b.position.y + a.position.y).abs() < 1e-9).unwrap();
        let tol = 3.0 * (a.torque_std.z + b.torque_std.z) + 0.002;
        assert!((a.torque_mean.z + b.torque_mean.z).abs() < tol, "cell {:?}", a.position);
        assert!(a.torque_mean.z.signum() != b.torque_mean.z.signum() || a.torque_mean.z.abs() < 0.002);
    }

    // Shuffling rows does not change the map.
    let mut shuffled = log.clone();
    shuffled.rows.shuffle(&mut ChaCha8Rng::seed_from_u64(3));
    let again = build_wrench_map(&shuffled, 0, &grid, DEFAULT_SETTLING_S).unwrap();
    for (a, b) in map.iter().zip(&again) {
        assert_eq!(a.samples, b.samples);
        assert!((a.force_mean - b.force_mean).amax() < 1e-12);
        assert!((a.torque_mean - b.torque_mean).amax() < 1e-12);
        assert!((a.force_std - b.force_std).amax() < 1e-12);
    }
}

#[test]
fn undisturbed_survey_maps_to_zero() {
    let cfg = preset("fan-survey", &["disturbance.kind=\"none\"", "scenario.duration_s=40"]);
    let log = simulate(&cfg);
    let grid = cfg.grid_survey();
    // Only the cells flown within the shortened run.
    let flown = log.rows.iter().filter_map(|r| r.segment).max().unwrap();
    let short = GridSurvey { x_range_m: [grid.x_range_m[0], grid.x_range_m[0]], ..grid };
    let map = build_wrench_map(&log, 0, &short, DEFAULT_SETTLING_S).unwrap();
    assert!(flown >= 4);
    for c in &map {
        for i in 0..3 {
            assert!(c.force_mean[i].abs() < 3.0 * c.force_std[i].max(0.005), "force {i} at {:?}", c.position);
            assert!(c.torque_mean[i].abs() < 3.0 * c.torque_std[i].max(5e-4), "torque {i} at {:?}", c.position);
        }
    }
}

fn first_order(tau: f64, onset: f64, shift: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>, usize) {
    let n = 3000;
    let dt = 0.002;
    let t: Vec<f64> = (0..n).map(|k| shift + k as f64 * dt).collect();
    let onset_idx = (onset / dt).round() as usize;
    let truth: Vec<f64> = (0..n).map(|k| if k >= onset_idx { 1.0 } else { 0.0 }).collect();
    let est: Vec<f64> = (0..n)
        .map(|k| if k >= onset_idx { 1.0 - (-((k - onset_idx) as f64 * dt) / tau).exp() } else { 0.0 })
        .collect();
    (t, truth, est, onset_idx)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn admittance_is_odd_and_monotone(a in -0.2..0.2f64, b in -0.2..0.2f64) {
        let cfg = AdmittanceConfig::default();
        prop_assert_eq!(admittance_command(-a, &cfg), -admittance_command(a, &cfg));
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(admittance_command(lo, &cfg) <= admittance_command(hi, &cfg));
        prop_assert!(admittance_command(a, &cfg).abs() <= cfg.limit_mps);
    }

    #[test]
    fn rise_time_ignores_time_shifts(tau in 0.1..0.8f64, onset in 0.2..1.0f64, shift in -100.0..100.0f64) {
        let (t0, truth, est, k) = first_order(tau, onset, 0.0);
        let (t1, _, _, _) = first_order(tau, onset, shift);
        let a = rise_time(&t0, &truth, &est, k).unwrap().unwrap();
        let b = rise_time(&t1, &truth, &est, k).unwrap().unwrap();
        prop_assert!((a - b).abs() < 1e-9);
        prop_assert!((a - tau * 9f64.ln()).abs() < 0.005);
    }
}
