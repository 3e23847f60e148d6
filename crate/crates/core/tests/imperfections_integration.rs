//! Robustness claims: loss invariance, input-loss distortion, shot-noise
//! convergence, impurity detection.

use schmidt_mesh_core::imperfections::{
    apply_input_loss, calibrate_values, mixed_input, LossModel, MeasurementModel,
};
use schmidt_mesh_core::linalg::{svd_oracle, SeededRng};
use schmidt_mesh_core::mesh::{MeshNetwork, Topology};
use schmidt_mesh_core::sources::random_state;
use schmidt_mesh_core::state::EnsembleState;
use schmidt_mesh_core::trainer::{
    sequential_coincidence_training, sequential_power_training, GradientMethod, TrainedPair,
    TrainingMethod, TrainingSchedule,
};

fn meshes(na: usize, nb: usize) -> (MeshNetwork, MeshNetwork) {
    (
        MeshNetwork::full(na, Topology::DiagonalLine).unwrap(),
        MeshNetwork::full(nb, Topology::DiagonalLine).unwrap(),
    )
}

fn all_phases(mesh: &MeshNetwork) -> Vec<f64> {
    mesh.layers().iter().flat_map(|l| l.params()).collect()
}

fn max_phase_delta(a: &TrainedPair, b: &TrainedPair) -> f64 {
    let pa: Vec<f64> = all_phases(&a.mesh_a)
        .into_iter()
        .chain(all_phases(&a.mesh_b))
        .collect();
    let pb: Vec<f64> = all_phases(&b.mesh_a)
        .into_iter()
        .chain(all_phases(&b.mesh_b))
        .collect();
    pa.iter()
        .zip(&pb)
        .map(|(x, y)| {
            // Phases live on a circle.
            let d = (x - y).abs();
            d.min(std::f64::consts::TAU - d)
        })
        .fold(0.0, f64::max)
}

fn train(
    method: TrainingMethod,
    input: &EnsembleState,
    model: &MeasurementModel,
    seed: u64,
) -> TrainedPair {
    let (mesh_a, mesh_b) = meshes(input.dim_a(), input.dim_b());
    match method {
        TrainingMethod::Power => sequential_power_training(
            mesh_a,
            mesh_b,
            input,
            &TrainingSchedule::default(),
            model,
            seed,
        )
        .unwrap(),
        TrainingMethod::Coincidence => sequential_coincidence_training(
            mesh_a,
            mesh_b,
            input,
            &TrainingSchedule::default(),
            model,
            seed,
        )
        .unwrap(),
    }
}

#[test]
fn output_loss_leaves_trained_phases_invariant() {
    let seed = 51;
    let state = random_state(4, 4, &mut SeededRng::new(seed).stream(&[0])).unwrap();
    let input = EnsembleState::pure(state);

    let lossless = train(TrainingMethod::Coincidence, &input, &MeasurementModel::exact(), seed);

    let mut loss = LossModel::lossless(4, 4);
    loss.output_a = vec![0.9, 0.6, 0.8, 0.7];
    loss.output_b = vec![0.5, 0.95, 0.7, 0.85];
    let lossy_model = MeasurementModel::exact().with_loss(loss.clone());
    let lossy = train(TrainingMethod::Coincidence, &input, &lossy_model, seed);

    let delta = max_phase_delta(&lossless, &lossy);
    assert!(delta < 1e-6, "max phase delta {delta}");

    // Scaled objectives: each diagonal coincidence shrinks by the known
    // factor, and calibration recovers the lossless values.
    let calibrated = calibrate_values(&lossy.report.values, &loss, true);
    for (c, v) in calibrated.iter().zip(&lossless.report.values) {
        assert!((c - v).abs() < 1e-6, "calibrated {c} vs lossless {v}");
    }
}

#[test]
fn uniform_output_loss_quarter_power() {
    let seed = 52;
    let state = random_state(3, 3, &mut SeededRng::new(seed).stream(&[0])).unwrap();
    let input = EnsembleState::pure(state);
    let mut loss = LossModel::lossless(3, 3);
    loss.output_a = vec![std::f64::consts::FRAC_1_SQRT_2; 3];
    loss.output_b = vec![std::f64::consts::FRAC_1_SQRT_2; 3];
    let lossless = train(TrainingMethod::Coincidence, &input, &MeasurementModel::exact(), seed);
    let lossy = train(
        TrainingMethod::Coincidence,
        &input,
        &MeasurementModel::exact().with_loss(loss),
        seed,
    );
    // Coincidences scale by (1/2)^2 = 1/4, so values scale by 1/2.
    for (lv, v) in lossy.report.values.iter().zip(&lossless.report.values) {
        assert!((lv - 0.5 * v).abs() < 1e-6);
    }
    assert!(max_phase_delta(&lossless, &lossy) < 1e-6);
}

#[test]
fn uniform_input_loss_reproduces_lossless_report() {
    let seed = 53;
    let state = random_state(4, 4, &mut SeededRng::new(seed).stream(&[0])).unwrap();
    let mut loss = LossModel::lossless(4, 4);
    loss.input_a = vec![0.8; 4];
    loss.input_b = vec![0.6; 4];
    let (distorted, survival) = apply_input_loss(&state, &loss).unwrap();
    assert!((survival - (0.8f64 * 0.6).powi(2)).abs() < 1e-12);

    let lossless = train(
        TrainingMethod::Coincidence,
        &EnsembleState::pure(state),
        &MeasurementModel::exact(),
        seed,
    );
    let distorted_run = train(
        TrainingMethod::Coincidence,
        &EnsembleState::pure(distorted),
        &MeasurementModel::exact(),
        seed,
    );
    for (a, b) in lossless
        .report
        .values
        .iter()
        .zip(&distorted_run.report.values)
    {
        assert!((a - b).abs() < 1e-6);
    }
    assert!(max_phase_delta(&lossless, &distorted_run) < 1e-6);
}

#[test]
fn non_uniform_input_loss_coincidence_learns_distorted_svd() {
    let seed = 54;
    let state = random_state(4, 4, &mut SeededRng::new(seed).stream(&[0])).unwrap();
    let mut loss = LossModel::lossless(4, 4);
    loss.input_a = vec![1.0, 0.55, 0.9, 0.4];
    loss.input_b = vec![0.45, 1.0, 0.65, 0.8];
    let (distorted, _) = apply_input_loss(&state, &loss).unwrap();
    let distorted_svd = svd_oracle(distorted.matrix(), 1e-9).unwrap();

    let run = train(
        TrainingMethod::Coincidence,
        &EnsembleState::pure(distorted.clone()),
        &MeasurementModel::exact(),
        seed,
    );
    // The coincidence method recovers the distorted state's decomposition.
    for f in run.report.fidelities_a.iter().chain(&run.report.fidelities_b) {
        assert!(*f >= 0.99, "fidelity {f}");
    }
    for (v, o) in run.report.values.iter().zip(&distorted_svd.values) {
        assert!((v - o).abs() < 1e-4);
    }

    // Recorded, not asserted: the power method diagonalizes the distorted
    // reduced density matrices, which no longer match the original state's
    // singular vectors. Print the observed deviation for the record.
    let original_svd = svd_oracle(state.matrix(), 1e-9).unwrap();
    let deviation: f64 = run
        .report
        .values
        .iter()
        .zip(&original_svd.values)
        .map(|(v, o)| (v - o).abs())
        .fold(0.0, f64::max);
    println!("distorted-vs-original singular value deviation: {deviation:.3e}");
}

#[test]
fn shot_noise_entropy_error_shrinks_with_budget() {
    let seed = 55;
    let state = random_state(4, 4, &mut SeededRng::new(seed).stream(&[0])).unwrap();
    let oracle_entropy = {
        let svd = svd_oracle(state.matrix(), 1e-9).unwrap();
        schmidt_mesh_core::state::von_neumann_entropy(
            &svd.values,
            schmidt_mesh_core::state::LogBase::Two,
        )
    };
    let input = EnsembleState::pure(state);
    let schedule = TrainingSchedule {
        gradient_method: GradientMethod::Dither { delta: 1e-2 },
        max_iters_per_layer: 250,
        ..TrainingSchedule::default()
    };
    let mut errors = Vec::new();
    for (i, budget) in [10_000u64, 10_000_000u64].iter().enumerate() {
        let mut seed_errors = Vec::new();
        for s in 0..3u64 {
            let model = MeasurementModel::shot(*budget, 1000 + 17 * s + i as u64);
            let (mesh_a, mesh_b) = meshes(4, 4);
            let pair =
                sequential_coincidence_training(mesh_a, mesh_b, &input, &schedule, &model, seed + s)
                    .unwrap();
            seed_errors.push((pair.report.entropy_bits - oracle_entropy).abs());
        }
        seed_errors.sort_by(|a, b| a.partial_cmp(b).unwrap());
        errors.push(seed_errors[1]); // median of 3
    }
    assert!(
        errors[1] < errors[0],
        "entropy error did not shrink: {errors:?}"
    );
}

#[test]
fn mixed_input_flags_impurity_via_crosstalk() {
    let mut rng = SeededRng::new(60).stream(&[0]);
    let s1 = random_state(4, 4, &mut rng).unwrap();
    let s2 = random_state(4, 4, &mut rng).unwrap();
    let mix = mixed_input(vec![(0.5, s1.clone()), (0.5, s2)]).unwrap();
    let mixed_run = train(TrainingMethod::Coincidence, &mix, &MeasurementModel::exact(), 60);
    assert!(
        mixed_run.report.crosstalk > 0.01,
        "mixed crosstalk {}",
        mixed_run.report.crosstalk
    );

    let pure_run = train(
        TrainingMethod::Coincidence,
        &EnsembleState::pure(s1),
        &MeasurementModel::exact(),
        60,
    );
    assert!(
        pure_run.report.crosstalk < 1e-6,
        "pure crosstalk {}",
        pure_run.report.crosstalk
    );
}
