use nalgebra::{Matrix3, SMatrix, SVector, Vector3, Vector4};
use proptest::prelude::*;
use quad_wrench::model::{process_step, MotorSpeeds, NoiseConfig, ProcessNoiseSample, VehicleParams, VehicleState};
use quad_wrench::AttitudeQuaternion;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn sample_noise(noise: &NoiseConfig, rng: &mut ChaCha8Rng) -> ProcessNoiseSample {
    let mut draw = |var: &Vector3<f64>| {
        var.map(|v| {
            let z: f64 = StandardNormal.sample(rng);
            v.sqrt() * z
        })
    };
    ProcessNoiseSample {
        thrust: draw(&noise.thrust),
        motor_torque: draw(&noise.motor_torque),
        force_ext: draw(&noise.force_ext),
        torque_ext: draw(&noise.torque_ext),
    }
}

fn tilted_state() -> VehicleState {
    VehicleState {
        q: AttitudeQuaternion::from_axis_angle(&Vector3::new(0.3, -0.5, 1.0), 0.4),
        omega: Vector3::new(0.2, -0.1, 0.5),
        position: Vector3::new(1.0, -2.0, 1.5),
        velocity: Vector3::new(0.3, 0.1, -0.2),
        torque_ext: Vector3::new(0.01, 0.0, -0.02),
        force_ext: Vector3::new(0.1, -0.2, -0.5),
    }
}

type Sel = SVector<f64, 12>;

fn selected(s: &VehicleState) -> Sel {
    let mut v = Sel::zeros();
    v.fixed_rows_mut::<3>(0).copy_from(&s.velocity);
    v.fixed_rows_mut::<3>(3).copy_from(&s.omega);
    v.fixed_rows_mut::<3>(6).copy_from(&s.force_ext);
    v.fixed_rows_mut::<3>(9).copy_from(&s.torque_ext);
    v
}

// Sample moments of one noisy step against the linearly propagated noise.
#[test]
fn monte_carlo_step_moments() {
    let p = VehicleParams::ar_drone();
    // Inflate the wrench walks so every block is well above rounding noise.
    let noise = NoiseConfig::from_std(
        Vector3::new(0.025, 0.025, 0.05),
        Vector3::repeat(0.005),
        Vector3::repeat(0.01),
        Vector3::repeat(0.001),
        Vector3::repeat(0.001),
        Vector3::repeat(0.0005),
    )
    .unwrap();
    let s = tilted_state();
    let speeds = MotorSpeeds(Vector4::new(380.0, 390.0, 385.0, 375.0));
    let nominal = selected(&process_step(&s, &speeds, &ProcessNoiseSample::zero(), &p));

    let n = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let samples: Vec<Sel> =
        (0..n).map(|_| selected(&process_step(&s, &speeds, &sample_noise(&noise, &mut rng), &p))).collect();
    let mean = samples.iter().fold(Sel::zeros(), |a, x| a + x) / n as f64;
    let cov = samples.iter().fold(SMatrix::<f64, 12, 12>::zeros(), |a, x| a + (x - mean) * (x - mean).transpose())
        / (n - 1) as f64;

    let dt = p.step_s();
    let r = s.q.body_to_global().0;
    let mut expected = SMatrix::<f64, 12, 12>::zeros();
    let m = p.mass_kg();
    let vel = r * Matrix3::from_diagonal(&noise.thrust) * r.transpose() * (dt * dt / (m * m));
    let ii = p.inertia_inv();
    let om = ii * Matrix3::from_diagonal(&noise.motor_torque) * ii.transpose() * (dt * dt);
    expected.fixed_view_mut::<3, 3>(0, 0).copy_from(&vel);
    expected.fixed_view_mut::<3, 3>(3, 3).copy_from(&om);
    expected.fixed_view_mut::<3, 3>(6, 6).copy_from(&Matrix3::from_diagonal(&noise.force_ext));
    expected.fixed_view_mut::<3, 3>(9, 9).copy_from(&Matrix3::from_diagonal(&noise.torque_ext));

    for i in 0..12 {
        let se = (expected[(i, i)] / n as f64).sqrt();
        assert!((mean[i] - nominal[i]).abs() < 3.0 * se, "mean {i}: {} vs {}", mean[i], nominal[i]);
        let rel = (cov[(i, i)] - expected[(i, i)]).abs() / expected[(i, i)];
        assert!(rel < 0.05, "variance {i} off by {rel}");
    }
    for b in 0..4 {
        let e = expected.fixed_view::<3, 3>(3 * b, 3 * b).norm();
        let d = (cov.fixed_view::<3, 3>(3 * b, 3 * b) - expected.fixed_view::<3, 3>(3 * b, 3 * b)).norm();
        assert!(d / e < 0.05, "block {b} off by {}", d / e);
    }
}

fn state() -> impl Strategy<Value = VehicleState> {
    let v = || (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64).prop_map(|(x, y, z)| Vector3::new(x, y, z));
    (v(), -3.0..3.0f64, v(), v(), v(), v(), v())
        .prop_map(|(axis, angle, omega, x, xd, tau, f)| VehicleState {
            q: AttitudeQuaternion::from_axis_angle(&axis, angle),
            omega: 2.0 * omega,
            position: x,
            velocity: xd,
            torque_ext: 0.05 * tau,
            force_ext: 0.5 * f,
        })
}

fn speeds() -> impl Strategy<Value = MotorSpeeds> {
    (300.0..450.0f64, 300.0..450.0f64, 300.0..450.0f64, 300.0..450.0f64)
        .prop_map(|(a, b, c, d)| MotorSpeeds(Vector4::new(a, b, c, d)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn quaternion_stays_unit(s in state(), w in speeds()) {
        let p = VehicleParams::ar_drone();
        let mut x = s;
        for _ in 0..50 {
            x = process_step(&x, &w, &ProcessNoiseSample::zero(), &p);
        }
        prop_assert!((x.q.norm() - 1.0).abs() < 1e-12);
    }

    // Rotating the world about the gravity axis commutes with the step.
    #[test]
    fn yaw_equivariance(s in state(), w in speeds(), yaw in -3.0..3.0f64) {
        let p = VehicleParams::ar_drone();
        let rz = AttitudeQuaternion::from_axis_angle(&Vector3::z(), yaw);
        let rot = |v: &Vector3<f64>| rz.rotate_body_to_global(v);
        let rotated = VehicleState {
            q: rz.multiply(&s.q),
            omega: s.omega,
            position: rot(&s.position),
            velocity: rot(&s.velocity),
            torque_ext: rot(&s.torque_ext),
            force_ext: rot(&s.force_ext),
        };
        let a = process_step(&rotated, &w, &ProcessNoiseSample::zero(), &p);
        let b = process_step(&s, &w, &ProcessNoiseSample::zero(), &p);
        prop_assert!((a.position - rot(&b.position)).amax() < 1e-12);
        prop_assert!((a.velocity - rot(&b.velocity)).amax() < 1e-12);
        prop_assert!((a.omega - b.omega).amax() < 1e-12);
        prop_assert!((a.force_ext - rot(&b.force_ext)).amax() < 1e-12);
        let qb = rz.multiply(&b.q);
        prop_assert!((a.q.body_to_global().0 - qb.body_to_global().0).amax() < 1e-12);
    }
}
