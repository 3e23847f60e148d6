//! Integration tests for the higher-level scenarios.

use num_complex::Complex64;
use schmidt_mesh_core::imperfections::MeasurementModel;
use schmidt_mesh_core::linalg::{haar_unitary, svd_oracle, ComplexMatrix, SeededRng};
use schmidt_mesh_core::mesh::{MeshNetwork, Topology};
use schmidt_mesh_core::protocols::{
    channel_invariance_error, distribute_entanglement, generate_separable,
    generate_supermode_bell, read_schmidt_mode, state_overlap, ScatteringScenario,
    DEFAULT_DEGENERACY_TOLERANCE,
};
use schmidt_mesh_core::sources::{bell_state, degenerate_state, fixed_spectrum_state, random_state};
use schmidt_mesh_core::state::{
    coincidence, mode_fidelity, von_neumann_entropy, EnsembleState, LogBase,
};
use schmidt_mesh_core::trainer::{sequential_coincidence_training, TrainingSchedule};
use schmidt_mesh_core::StateMatrix;

fn train_coincidence(state: StateMatrix, seed: u64) -> schmidt_mesh_core::trainer::TrainedPair {
    let input = EnsembleState::pure(state);
    sequential_coincidence_training(
        MeshNetwork::full(input.dim_a(), Topology::DiagonalLine).unwrap(),
        MeshNetwork::full(input.dim_b(), Topology::DiagonalLine).unwrap(),
        &input,
        &TrainingSchedule::default(),
        &MeasurementModel::exact(),
        seed,
    )
    .unwrap()
}

#[test]
fn trained_mesh_modes_match_oracle_vectors() {
    let state = random_state(5, 5, &mut SeededRng::new(41).stream(&[0])).unwrap();
    let svd = svd_oracle(state.matrix(), 1e-9).unwrap();
    let pair = train_coincidence(state, 41);
    for k in 0..3 {
        let mode = read_schmidt_mode(&pair.mesh_a, pair.report.trained_modes_a, k).unwrap();
        let fid = mode_fidelity(&mode, &svd.left.column(k)).unwrap();
        assert!(fid > 0.999, "mode {k} fidelity {fid}");
    }
}

#[test]
fn separable_generation_is_rank_one_and_faithful() {
    let state = random_state(6, 6, &mut SeededRng::new(8).stream(&[0])).unwrap();
    let svd = svd_oracle(state.matrix(), 1e-9).unwrap();
    let pair = train_coincidence(state, 8);
    let separable = generate_separable(&pair, 1).unwrap();
    let out_svd = svd_oracle(separable.matrix(), 1e-9).unwrap();
    assert_eq!(out_svd.rank(), 1);
    assert!(von_neumann_entropy(&out_svd.values, LogBase::Two) < 1e-6);
    // The generated product state is u_1 (conj v_1)^T up to a global phase.
    let reference = ComplexMatrix::from_fn(6, 6, |i, j| {
        svd.left.column(1)[i] * svd.right.column(1)[j].conj()
    });
    let overlap = state_overlap(&separable, &StateMatrix::normalized(reference).unwrap()).unwrap();
    assert!(overlap * overlap > 0.999, "overlap^2 {}", overlap * overlap);
}

#[test]
fn separable_generation_from_bell_is_product() {
    let pair = train_coincidence(bell_state(), 2);
    let separable = generate_separable(&pair, 0).unwrap();
    let svd = svd_oracle(separable.matrix(), 1e-9).unwrap();
    assert_eq!(svd.rank(), 1);
}

#[test]
fn separable_generation_rejects_dark_modes() {
    let state = fixed_spectrum_state(4, &[0.9, 0.4358898943540674], &mut SeededRng::new(3).stream(&[0]))
        .unwrap();
    let pair = train_coincidence(state, 3);
    assert!(generate_separable(&pair, 3).is_err());
}

#[test]
fn supermode_bell_coincidences_and_weights() {
    let state = degenerate_state(4, &mut SeededRng::new(14).stream(&[0])).unwrap();
    let pair = train_coincidence(state, 14);
    // Trained weights on the degenerate pair split evenly to within 2e-3.
    let (l1, l2) = (pair.report.values[0], pair.report.values[1]);
    let weight = l1 * l1 / (l1 * l1 + l2 * l2);
    assert!((weight - 0.5).abs() < 2e-3, "weight {weight}");

    let psi = generate_supermode_bell(&pair, 0.0, DEFAULT_DEGENERACY_TOLERANCE).unwrap();
    let input = EnsembleState::pure(psi);
    let (ia, ib) = (ComplexMatrix::identity(4), ComplexMatrix::identity(4));
    let c00 = coincidence(&input, &ia, &ib, 0, 0).unwrap();
    let c11 = coincidence(&input, &ia, &ib, 1, 1).unwrap();
    assert!((c00 - 0.5).abs() < 2e-3);
    assert!((c11 - 0.5).abs() < 2e-3);
}

#[test]
fn channel_invariance_of_singular_values() {
    let mut rng = SeededRng::new(9).stream(&[0]);
    let scenario = ScatteringScenario {
        source: random_state(4, 4, &mut rng).unwrap(),
        channel_a: haar_unitary(4, &mut rng),
        channel_b: haar_unitary(4, &mut rng),
    };
    assert!(channel_invariance_error(&scenario).unwrap() < 1e-10);
}

#[test]
fn bell_through_identity_channels() {
    let scenario = ScatteringScenario {
        source: bell_state(),
        channel_a: ComplexMatrix::identity(2),
        channel_b: ComplexMatrix::identity(2),
    };
    let (report, _) = distribute_entanglement(
        &scenario,
        &TrainingSchedule::default(),
        &MeasurementModel::exact(),
        1,
    )
    .unwrap();
    for v in &report.values_learned {
        assert!((v - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-4);
    }
    assert!(report.diagonal_sum > 0.999);
}

#[test]
fn bell_through_random_channels_recovers_entanglement() {
    let mut rng = SeededRng::new(77).stream(&[0]);
    let scenario = ScatteringScenario {
        source: bell_state(),
        channel_a: haar_unitary(8, &mut rng),
        channel_b: haar_unitary(8, &mut rng),
    };
    let (report, pair) = distribute_entanglement(
        &scenario,
        &TrainingSchedule::default(),
        &MeasurementModel::exact(),
        77,
    )
    .unwrap();
    assert!(report.diagonal_sum >= 0.999, "diag sum {}", report.diagonal_sum);
    assert!(report.crosstalk < 1e-3, "crosstalk {}", report.crosstalk);
    for v in report.values_learned.iter().take(2) {
        assert!((v - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-3);
    }
    assert!((report.entropy_bits - 1.0).abs() < 1e-3);
    assert_eq!(pair.report.schmidt_number, 2);
}

#[test]
fn rank_three_source_through_channels() {
    let mut rng = SeededRng::new(15).stream(&[0]);
    let source = fixed_spectrum_state(4, &[0.8, 0.5, 0.33166247903554], &mut rng).unwrap();
    let src_svd = svd_oracle(source.matrix(), 1e-9).unwrap();
    let scenario = ScatteringScenario {
        source,
        channel_a: haar_unitary(6, &mut rng),
        channel_b: haar_unitary(6, &mut rng),
    };
    let (report, _) = distribute_entanglement(
        &scenario,
        &TrainingSchedule::default(),
        &MeasurementModel::exact(),
        15,
    )
    .unwrap();
    for (learned, oracle) in report.values_learned.iter().zip(&src_svd.values) {
        assert!(
            (learned - oracle).abs() < 1e-4,
            "learned {learned} oracle {oracle}"
        );
    }
}

#[test]
fn identity_supermode_phase_pair() {
    // Direct construction sanity: the two-port outputs for phase 0 and pi.
    let state = degenerate_state(4, &mut SeededRng::new(21).stream(&[0])).unwrap();
    let pair = train_coincidence(state, 21);
    let psi0 = generate_supermode_bell(&pair, 0.0, DEFAULT_DEGENERACY_TOLERANCE).unwrap();
    assert!((psi0.matrix()[(0, 0)] - Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0)).norm() < 1e-12);
}
