//! Integration tests for the sequential training procedures.

use num_complex::Complex64;
use schmidt_mesh_core::imperfections::MeasurementModel;
use schmidt_mesh_core::linalg::{svd_oracle, ComplexMatrix, SeededRng};
use schmidt_mesh_core::mesh::{network_unitary, MeshNetwork, Topology};
use schmidt_mesh_core::sources::{bell_state, degenerate_state, random_state};
use schmidt_mesh_core::state::{mode_fidelity, projector_onto, subspace_fidelity, EnsembleState};
use schmidt_mesh_core::trainer::{
    coincidence_layer_gradient, dither_gradient, measurements_to_first_mode_fidelity,
    objective_coincidence, objective_power, power_layer_gradient, sequential_coincidence_training,
    sequential_power_training, GradientMethod, TrainingSchedule,
};
use schmidt_mesh_core::{Side, StateMatrix};

fn meshes(na: usize, nb: usize) -> (MeshNetwork, MeshNetwork) {
    (
        MeshNetwork::full(na, Topology::DiagonalLine).unwrap(),
        MeshNetwork::full(nb, Topology::DiagonalLine).unwrap(),
    )
}

#[test]
fn bell_coincidence_training_baseline() {
    let input = EnsembleState::pure(bell_state());
    let (mesh_a, mesh_b) = meshes(2, 2);
    let pair = sequential_coincidence_training(
        mesh_a,
        mesh_b,
        &input,
        &TrainingSchedule::default(),
        &MeasurementModel::exact(),
        7,
    )
    .unwrap();
    let r = &pair.report;
    assert_eq!(r.values.len(), 2);
    for v in &r.values {
        assert!((v - 0.70711).abs() < 1e-3, "value {v}");
    }
    assert!((r.entropy_bits - 1.0).abs() < 1e-3, "entropy {}", r.entropy_bits);
    assert_eq!(r.schmidt_number, 2);
    assert!(r.crosstalk < 1e-6);
}

#[test]
fn random_state_both_methods_match_oracle() {
    let seed = 11;
    let state = random_state(6, 6, &mut SeededRng::new(seed).stream(&[0])).unwrap();
    let svd = svd_oracle(state.matrix(), 1e-9).unwrap();
    let input = EnsembleState::pure(state);
    let schedule = TrainingSchedule::default();
    let model = MeasurementModel::exact();

    let (mesh_a, mesh_b) = meshes(6, 6);
    let coin = sequential_coincidence_training(mesh_a, mesh_b, &input, &schedule, &model, seed)
        .unwrap();
    let (mesh_a, mesh_b) = meshes(6, 6);
    let pow =
        sequential_power_training(mesh_a, mesh_b, &input, &schedule, &model, seed).unwrap();

    for (k, oracle_value) in svd.values.iter().enumerate() {
        assert!(
            (coin.report.values[k] - oracle_value).abs() < 1e-4,
            "coincidence value {k}: {} vs oracle {}",
            coin.report.values[k],
            oracle_value
        );
        assert!(
            (pow.report.values[k] - oracle_value).abs() < 1e-4,
            "power value {k}: {} vs oracle {}",
            pow.report.values[k],
            oracle_value
        );
        assert!(
            (coin.report.values[k] - pow.report.values[k]).abs() < 1e-5,
            "methods disagree at {k}"
        );
    }
    for f in coin
        .report
        .fidelities_a
        .iter()
        .chain(&coin.report.fidelities_b)
        .chain(&pow.report.fidelities_a)
        .chain(&pow.report.fidelities_b)
    {
        assert!(*f >= 0.999, "fidelity {f}");
    }
    // Learned meshes stay unitary; modes are orthonormal by construction.
    assert!(network_unitary(&coin.mesh_a).unitarity_error() < 1e-10);
    assert!(network_unitary(&coin.mesh_b).unitarity_error() < 1e-10);
}

#[test]
fn diagonal_input_converges_immediately() {
    let mut g = ComplexMatrix::zeros(3, 3);
    for (i, v) in [0.8, 0.5, 0.331662479035540].iter().enumerate() {
        g[(i, i)] = Complex64::new(*v, 0.0);
    }
    let input = EnsembleState::pure(StateMatrix::normalized(g).unwrap());
    let (mesh_a, mesh_b) = meshes(3, 3);
    let pair = sequential_coincidence_training(
        mesh_a,
        mesh_b,
        &input,
        &TrainingSchedule::default(),
        &MeasurementModel::exact(),
        1,
    )
    .unwrap();
    for summary in &pair.report.trace.layers {
        assert!(
            summary.iterations <= 2 * 50 + 2,
            "layer {} took {} iterations",
            summary.layer,
            summary.iterations
        );
    }
    assert!((pair.report.values[0] - 0.8).abs() < 1e-6);
}

#[test]
fn rank_two_state_deflates_to_null_space() {
    let mut rng = SeededRng::new(5).stream(&[1]);
    let state =
        schmidt_mesh_core::sources::fixed_spectrum_state(8, &[0.8, 0.6], &mut rng).unwrap();
    let input = EnsembleState::pure(state);
    let (mesh_a, mesh_b) = meshes(8, 8);
    let pair = sequential_power_training(
        mesh_a,
        mesh_b,
        &input,
        &TrainingSchedule::default(),
        &MeasurementModel::exact(),
        5,
    )
    .unwrap();
    let r = &pair.report;
    assert_eq!(r.schmidt_number, 2);
    let above_a = r.values.iter().filter(|v| *v * *v > 1e-6).count();
    let above_b = r
        .values_b
        .as_ref()
        .unwrap()
        .iter()
        .filter(|v| *v * *v > 1e-6)
        .count();
    assert_eq!(above_a, 2);
    assert_eq!(above_b, 2);
    // Null-space layers are marked.
    assert!(r.trace.layers.iter().any(|l| l.skipped_null_space));
}

#[test]
fn degenerate_pair_learns_subspace() {
    let mut rng = SeededRng::new(31).stream(&[0]);
    let state = degenerate_state(4, &mut rng).unwrap();
    let svd = svd_oracle(state.matrix(), 1e-9).unwrap();
    let input = EnsembleState::pure(state);
    let (mesh_a, mesh_b) = meshes(4, 4);
    let pair = sequential_coincidence_training(
        mesh_a,
        mesh_b,
        &input,
        &TrainingSchedule::default(),
        &MeasurementModel::exact(),
        31,
    )
    .unwrap();
    let r = &pair.report;
    // Degenerate leading pair: coincidences agree and the learned modes span
    // the oracle's two-dimensional subspace.
    assert!((r.values[0] - r.values[1]).abs() < 1e-4);
    assert!(r.fidelities_a[0] >= 0.999 && r.fidelities_a[1] >= 0.999);
    assert!(r.fidelities_b[0] >= 0.999 && r.fidelities_b[1] >= 0.999);
    let refs = [svd.left.column(0), svd.left.column(1)];
    let p = projector_onto(&refs);
    let learned = vec![r.modes_a.column(0), r.modes_a.column(1)];
    assert!(subspace_fidelity(&learned, &p).unwrap() >= 0.999);
}

#[test]
fn analytic_gradients_match_dither() {
    let seed = 17;
    let state = random_state(5, 4, &mut SeededRng::new(seed).stream(&[0])).unwrap();
    let input = EnsembleState::pure(state);
    let (mut mesh_a, mut mesh_b) = meshes(5, 4);
    // Random phases everywhere so the point is generic.
    let mut rng = SeededRng::new(seed).stream(&[1]);
    for mesh in [&mut mesh_a, &mut mesh_b] {
        for k in 0..mesh.layers().len() {
            let layer = mesh.layer_mut(k);
            let params: Vec<f64> = (0..layer.param_count())
                .map(|_| rand::Rng::gen_range(&mut rng, 0.0..std::f64::consts::TAU))
                .collect();
            layer.set_params(&params);
        }
    }

    for side in [Side::A, Side::B] {
        let mesh = match side {
            Side::A => &mesh_a,
            Side::B => &mesh_b,
        };
        let (value, grad) = power_layer_gradient(mesh, &input, side, 1).unwrap();
        assert!(value > 0.0);
        let params = mesh.layer(1).params();
        let fd = dither_gradient(&params, 1e-6, |p| {
            let mut m = mesh.clone();
            m.layer_mut(1).set_params(p);
            objective_power(&m, &input, side, 1).unwrap()
        });
        let err = rel_error(&grad, &fd);
        assert!(err < 1e-6, "{side:?} power gradient mismatch {err}");
    }

    let (_, grad) = coincidence_layer_gradient(&mesh_a, &mesh_b, &input, 1).unwrap();
    let na = mesh_a.layer(1).param_count();
    let mut params = mesh_a.layer(1).params();
    params.extend(mesh_b.layer(1).params());
    let fd = dither_gradient(&params, 1e-6, |p| {
        let mut ma = mesh_a.clone();
        let mut mb = mesh_b.clone();
        ma.layer_mut(1).set_params(&p[..na]);
        mb.layer_mut(1).set_params(&p[na..]);
        objective_coincidence(&ma, &mb, &input, 1).unwrap()
    });
    let err = rel_error(&grad, &fd);
    assert!(err < 1e-6, "coincidence gradient mismatch {err}");
}

fn rel_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let norm: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / norm.max(1e-12)
}

#[test]
fn dither_taylor_error_shrinks_with_delta() {
    let state = random_state(4, 4, &mut SeededRng::new(3).stream(&[0])).unwrap();
    let input = EnsembleState::pure(state);
    let (mut mesh_a, _mesh_b) = meshes(4, 4);
    let mut rng = SeededRng::new(9).stream(&[0]);
    let layer = mesh_a.layer_mut(0);
    let params: Vec<f64> = (0..layer.param_count())
        .map(|_| rand::Rng::gen_range(&mut rng, 0.0..std::f64::consts::TAU))
        .collect();
    layer.set_params(&params);

    let (_, analytic) = power_layer_gradient(&mesh_a, &input, Side::A, 0).unwrap();
    let eval = |p: &[f64]| {
        let mut m = mesh_a.clone();
        m.layer_mut(0).set_params(p);
        objective_power(&m, &input, Side::A, 0).unwrap()
    };
    let coarse = rel_error(&dither_gradient(&params, 1e-2, eval), &analytic);
    let fine = rel_error(&dither_gradient(&params, 1e-3, eval), &analytic);
    // Central differences: O(delta^2) truncation.
    assert!(fine < coarse / 10.0, "coarse {coarse} fine {fine}");
}

#[test]
fn diagonal_stationary_point_has_zero_gradient() {
    let mut g = ComplexMatrix::zeros(3, 3);
    for (i, v) in [0.8, 0.5, 0.331662479035540].iter().enumerate() {
        g[(i, i)] = Complex64::new(*v, 0.0);
    }
    let input = EnsembleState::pure(StateMatrix::normalized(g).unwrap());
    let (mesh_a, _) = meshes(3, 3);
    let (value, grad) = power_layer_gradient(&mesh_a, &input, Side::A, 0).unwrap();
    assert!((value - 0.64).abs() < 1e-12);
    for g in grad {
        assert!(g.abs() < 1e-12, "gradient component {g}");
    }
}

#[test]
fn traces_are_bounded_and_ordered() {
    let seed = 23;
    let state = random_state(5, 5, &mut SeededRng::new(seed).stream(&[0])).unwrap();
    let svd = svd_oracle(state.matrix(), 1e-9).unwrap();
    let ceiling = svd.values[0] * svd.values[0];
    let input = EnsembleState::pure(state);
    let (mesh_a, mesh_b) = meshes(5, 5);
    let pair = sequential_coincidence_training(
        mesh_a,
        mesh_b,
        &input,
        &TrainingSchedule::default(),
        &MeasurementModel::exact(),
        seed,
    )
    .unwrap();
    for rec in &pair.report.trace.iterations {
        assert!(rec.objective >= 0.0 && rec.objective <= ceiling + 1e-9);
    }
    let finals: Vec<f64> = pair
        .report
        .trace
        .layers
        .iter()
        .filter(|l| !l.skipped_null_space)
        .map(|l| l.final_objective)
        .collect();
    for w in finals.windows(2) {
        assert!(w[0] >= w[1] - 1e-6, "ordering violated: {w:?}");
    }
}

#[test]
fn seeded_shot_noise_runs_are_identical() {
    let state = random_state(3, 3, &mut SeededRng::new(2).stream(&[0])).unwrap();
    let input = EnsembleState::pure(state);
    let schedule = TrainingSchedule {
        gradient_method: GradientMethod::Dither { delta: 1e-3 },
        max_iters_per_layer: 40,
        ..TrainingSchedule::default()
    };
    let model = MeasurementModel::shot(100_000, 77);
    let (mesh_a, mesh_b) = meshes(3, 3);
    let run1 =
        sequential_coincidence_training(mesh_a, mesh_b, &input, &schedule, &model, 3).unwrap();
    let (mesh_a, mesh_b) = meshes(3, 3);
    let run2 =
        sequential_coincidence_training(mesh_a, mesh_b, &input, &schedule, &model, 3).unwrap();
    assert_eq!(run1.report.trace, run2.report.trace);
    assert_eq!(run1.mesh_a, run2.mesh_a);
}

#[test]
fn analytic_gradients_refused_under_shot_noise() {
    let input = EnsembleState::pure(bell_state());
    let (mesh_a, mesh_b) = meshes(2, 2);
    let err = sequential_coincidence_training(
        mesh_a,
        mesh_b,
        &input,
        &TrainingSchedule::default(),
        &MeasurementModel::shot(1000, 1),
        1,
    )
    .unwrap_err();
    assert!(matches!(
        err,
        schmidt_mesh_core::Error::AnalyticUnderShotNoise
    ));
}

#[test]
fn fidelity_crossing_reports_measurements() {
    let state = random_state(4, 4, &mut SeededRng::new(13).stream(&[0])).unwrap();
    let input = EnsembleState::pure(state.clone());
    let schedule = TrainingSchedule {
        gradient_method: GradientMethod::Dither { delta: 1e-3 },
        init_jitter: 0.1,
        ..TrainingSchedule::default()
    };
    let crossing = measurements_to_first_mode_fidelity(
        &input,
        &schedule,
        &MeasurementModel::exact(),
        0.99,
        13,
    )
    .unwrap();
    assert!(crossing.reached, "fidelity stalled at {}", crossing.final_fidelity);
    assert!(crossing.measurements > 0);

    // The crossing is honest: re-train layer 0 fully and check the final
    // mode against the oracle.
    let svd = svd_oracle(state.matrix(), 1e-9).unwrap();
    let (mesh_a, mesh_b) = meshes(4, 4);
    let pair = sequential_coincidence_training(
        mesh_a,
        mesh_b,
        &input,
        &TrainingSchedule::default(),
        &MeasurementModel::exact(),
        13,
    )
    .unwrap();
    let fid = mode_fidelity(&pair.report.modes_a.column(0), &svd.left.column(0)).unwrap();
    assert!(fid >= 0.999);
}
