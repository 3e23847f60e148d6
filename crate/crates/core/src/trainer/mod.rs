//! Sequential self-configuration: power and coincidence training.
//!
//! Both procedures walk the layers in order. Layer `k` of a mesh is trained
//! by Adam ascent on a single measured objective (the port-`k` power, or the
//! port-pair `(k, k)` coincidence jointly over both meshes) while all earlier
//! layers stay frozen; converged layers deflate the problem for the next one.
//! Under exact expectation models each layer finishes with a damped-Newton
//! refinement so converged values and phases are reproducible far below the
//! optimizer's step-size floor.

mod adam;
mod problem;
mod polish;
mod report;
mod trace;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imperfections::{MeasureTag, MeasurementModel};
use crate::linalg::{matmul, ComplexMatrix, SeededRng};
use crate::mesh::{layer_unitary, MeshNetwork, SelfConfiguringLayer};
use crate::state::{EnsembleState, Side};

use adam::Adam;
use problem::{CoincidenceProblem, LayerObjective, PowerProblem, StoreTarget};

pub use problem::dither_gradient;
pub use report::SchmidtReport;
pub use trace::{IterationRecord, LayerSummary, TrainingTrace};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainingMethod {
    Power,
    Coincidence,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientMethod {
    /// Exact chain-rule gradients; requires an exact measurement model.
    Analytic,
    /// Symmetric phase perturbations; each probe consumes one measurement.
    Dither { delta: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JointUpdate {
    /// One Adam step over the concatenated parameters of both layers.
    Joint,
    /// Alternate Adam steps between the A and B parameter blocks.
    Alternating,
}

/// Optimizer hyperparameters and stopping rules.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSchedule {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    pub max_iters_per_layer: usize,
    /// Stop once the objective's relative change over this many iterations
    /// falls below `convergence_tol`.
    pub convergence_window: usize,
    pub convergence_tol: f64,
    pub gradient_method: GradientMethod,
    /// Remaining power below which further layers are skipped as null space.
    pub residual_stop: f64,
    /// Magnitude of the seeded uniform phase jitter applied at layer start;
    /// zero keeps the identity initialization.
    pub init_jitter: f64,
    /// Newton refinement of each converged layer under exact expectations.
    pub polish: bool,
    pub joint_update: JointUpdate,
}

impl Default for TrainingSchedule {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            beta1: 0.9,
            beta2: 0.999,
            adam_epsilon: 1e-8,
            max_iters_per_layer: 2000,
            convergence_window: 50,
            convergence_tol: 1e-8,
            gradient_method: GradientMethod::Analytic,
            residual_stop: 1e-6,
            init_jitter: 0.0,
            polish: true,
            joint_update: JointUpdate::Joint,
        }
    }
}

impl TrainingSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidParameter("learning_rate must be > 0".into()));
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0 < v && v < 1.0) {
                return Err(Error::InvalidParameter(format!("{name} must be in (0, 1)")));
            }
        }
        if let GradientMethod::Dither { delta } = self.gradient_method {
            if !(delta > 0.0) {
                return Err(Error::InvalidParameter("dither delta must be > 0".into()));
            }
        }
        if self.convergence_window == 0 {
            return Err(Error::InvalidParameter(
                "convergence_window must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Trained meshes together with the learned decomposition report.
#[derive(Clone, Debug)]
pub struct TrainedPair {
    pub mesh_a: MeshNetwork,
    pub mesh_b: MeshNetwork,
    pub report: SchmidtReport,
}

/// Learned mode `k` of a trained mesh: conjugate of row `k` of the network
/// unitary (column `k` of its adjoint).
pub fn mesh_mode_vector(mesh: &MeshNetwork, k: usize) -> Vec<Complex64> {
    let u = crate::mesh::network_unitary(mesh);
    (0..u.cols()).map(|j| u[(k, j)].conj()).collect()
}

/// Reduced density matrix seen by one side: `sum_i p_i G_i G_i^dagger` for A,
/// `sum_i p_i (G_i^dagger G_i)^T` for B.
fn reduced_density(input: &EnsembleState, side: Side) -> Result<ComplexMatrix> {
    let dim = match side {
        Side::A => input.dim_a(),
        Side::B => input.dim_b(),
    };
    let mut r = ComplexMatrix::zeros(dim, dim);
    for (w, s) in input.components() {
        let g = s.matrix();
        let rho = match side {
            Side::A => matmul(g, &g.adjoint())?,
            Side::B => matmul(&g.adjoint(), g)?.conj(),
        };
        for i in 0..dim {
            for j in 0..dim {
                r[(i, j)] += rho[(i, j)] * w;
            }
        }
    }
    Ok(r)
}

struct LayerRun<'a> {
    schedule: &'a TrainingSchedule,
    model: &'a MeasurementModel,
    /// Constant output-loss factor on this layer's objective.
    scale: f64,
    layer_index: usize,
    /// Disambiguates noise streams between meshes/passes.
    stream_tag: u64,
    seed: u64,
    measurements: &'a mut u64,
    trace: &'a mut TrainingTrace,
}

struct LayerOutcome {
    final_objective: f64,
    iterations: usize,
    measurements: u64,
    warning: Option<String>,
}

/// Adam ascent on one layer objective, with optional per-iteration monitor
/// (return `true` to stop early, e.g. once a fidelity target is crossed).
fn run_layer<P: LayerObjective>(
    problem: &mut P,
    run: &mut LayerRun<'_>,
    mut monitor: Option<&mut dyn FnMut(&P, u64) -> bool>,
) -> Result<LayerOutcome> {
    let started = *run.measurements;
    let n = problem.param_count();
    let tag = |iteration: u64, probe: u64| MeasureTag {
        layer: (run.stream_tag << 32) | run.layer_index as u64,
        iteration,
        probe,
    };

    if run.schedule.init_jitter > 0.0 && n > 0 {
        let mut rng = SeededRng::new(run.seed).stream(&[run.stream_tag, run.layer_index as u64, 0xb007]);
        let jitter: Vec<f64> = (0..n)
            .map(|_| rng.gen_range(-run.schedule.init_jitter..=run.schedule.init_jitter))
            .collect();
        problem.set_params(&jitter);
    }

    let measure = |problem: &P, measurements: &mut u64, iteration: u64, probe: u64| -> f64 {
        *measurements += 1;
        run.model
            .observe(run.scale * problem.true_value(), tag(iteration, probe))
    };

    if n == 0 {
        let f = measure(problem, run.measurements, 0, 0);
        run.trace.record(run.layer_index, 0, f, *run.measurements);
        return Ok(LayerOutcome {
            final_objective: f,
            iterations: 0,
            measurements: *run.measurements - started,
            warning: None,
        });
    }

    if matches!(run.schedule.gradient_method, GradientMethod::Analytic) && !run.model.is_exact() {
        return Err(Error::AnalyticUnderShotNoise);
    }

    let mut optimizer = Adam::new(
        run.schedule.learning_rate,
        run.schedule.beta1,
        run.schedule.beta2,
        run.schedule.adam_epsilon,
        n,
    );
    let split = problem.block_split();
    let mut history: Vec<f64> = Vec::with_capacity(run.schedule.max_iters_per_layer);
    let mut best = f64::NEG_INFINITY;
    let mut since_best = 0usize;
    let mut warning = None;
    let mut iterations = 0usize;

    for iter in 0..run.schedule.max_iters_per_layer {
        iterations = iter + 1;
        let f = measure(problem, run.measurements, iter as u64, 0);
        run.trace.record(run.layer_index, iter, f, *run.measurements);
        history.push(f);

        if let Some(mon) = monitor.as_deref_mut() {
            if mon(problem, *run.measurements) {
                break;
            }
        }

        if f > best {
            best = f;
            since_best = 0;
        } else {
            since_best += 1;
            if warning.is_none() && since_best > 10 * run.schedule.convergence_window {
                warning = Some(format!(
                    "objective stalled below its best for {since_best} iterations; learning rate may be too large"
                ));
            }
        }

        if iter >= run.schedule.convergence_window {
            let then = history[iter - run.schedule.convergence_window];
            let rel = (f - then).abs() / f.abs().max(1e-12);
            if rel < run.schedule.convergence_tol {
                break;
            }
        }

        let grad = match run.schedule.gradient_method {
            GradientMethod::Analytic => {
                let (_, mut g) = problem.true_value_and_grad();
                for gi in g.iter_mut() {
                    *gi *= run.scale;
                }
                g
            }
            GradientMethod::Dither { delta } => {
                let base = problem.params();
                let mut grad = Vec::with_capacity(n);
                let mut point = base.clone();
                for i in 0..n {
                    point[i] = base[i] + delta;
                    problem.set_params(&point);
                    let plus =
                        measure(problem, run.measurements, iter as u64, 1 + 2 * i as u64);
                    point[i] = base[i] - delta;
                    problem.set_params(&point);
                    let minus =
                        measure(problem, run.measurements, iter as u64, 2 + 2 * i as u64);
                    point[i] = base[i];
                    grad.push((plus - minus) / (2.0 * delta));
                }
                problem.set_params(&base);
                grad
            }
        };

        let mut params = problem.params();
        match run.schedule.joint_update {
            JointUpdate::Joint => optimizer.step(&mut params, &grad),
            JointUpdate::Alternating => {
                let range = if split == 0 || split == n {
                    0..n
                } else if iter % 2 == 0 {
                    0..split
                } else {
                    split..n
                };
                optimizer.step_block(&mut params, &grad, range);
            }
        }
        problem.set_params(&params);
    }

    let final_objective = if run.schedule.polish && run.model.is_exact() {
        run.scale * polish::newton_polish(problem)
    } else {
        // Average coincidence/power over the trailing window: under shot
        // noise a single reading is one Poisson sample, the trailing mean is
        // the measured estimate of the converged objective.
        let w = run.schedule.convergence_window.min(history.len());
        history[history.len() - w..].iter().sum::<f64>() / w as f64
    };

    Ok(LayerOutcome {
        final_objective,
        iterations,
        measurements: *run.measurements - started,
        warning,
    })
}

fn validate_setup(
    mesh_a: &MeshNetwork,
    mesh_b: &MeshNetwork,
    input: &EnsembleState,
    schedule: &TrainingSchedule,
    model: &MeasurementModel,
) -> Result<()> {
    schedule.validate()?;
    model.validate()?;
    mesh_a.validate()?;
    mesh_b.validate()?;
    if mesh_a.dimension() != input.dim_a() || mesh_b.dimension() != input.dim_b() {
        return Err(Error::DimensionMismatch {
            op: "training",
            lhs_rows: mesh_a.dimension(),
            lhs_cols: mesh_b.dimension(),
            rhs_rows: input.dim_a(),
            rhs_cols: input.dim_b(),
        });
    }
    if let Some(loss) = &model.loss {
        loss.validate(input.dim_a(), input.dim_b())?;
    }
    Ok(())
}

struct SideOutcome {
    /// Measured power per port (all ports of the side).
    port_powers: Vec<f64>,
    trained_modes: usize,
}

fn train_power_side(
    mesh: &mut MeshNetwork,
    reduced: &ComplexMatrix,
    side: Side,
    schedule: &TrainingSchedule,
    model: &MeasurementModel,
    seed: u64,
    stream_tag: u64,
    measurements: &mut u64,
    trace: &mut TrainingTrace,
) -> Result<SideOutcome> {
    let n = mesh.dimension();
    let num_layers = mesh.layers().len();
    let mut prefix = ComplexMatrix::identity(n);
    let mut port_powers = vec![0.0; n];
    let mut first_skip: Option<usize> = None;

    for k in 0..num_layers {
        let mut problem = PowerProblem::new(mesh.layer(k).clone(), reduced, &prefix)?;
        if first_skip.is_some() || problem.residual() < schedule.residual_stop {
            if first_skip.is_none() {
                first_skip = Some(k);
            }
            trace.layers.push(LayerSummary {
                layer: k,
                final_objective: 0.0,
                iterations: 0,
                measurements: 0,
                skipped_null_space: true,
                warning: None,
            });
            continue;
        }
        let mut run = LayerRun {
            schedule,
            model,
            scale: model.power_scale(side, k),
            layer_index: k,
            stream_tag,
            seed,
            measurements,
            trace,
        };
        let outcome = run_layer(&mut problem, &mut run, None)?;
        port_powers[k] = outcome.final_objective;
        Box::new(problem).store(StoreTarget::One(mesh.layer_mut(k)));
        trace.layers.push(LayerSummary {
            layer: k,
            final_objective: port_powers[k],
            iterations: outcome.iterations,
            measurements: outcome.measurements,
            skipped_null_space: false,
            warning: outcome.warning,
        });
        prefix = matmul(&layer_unitary(mesh.layer(k), n)?, &prefix)?;
    }

    // Ports past the last layer (at minimum the complement port) carry the
    // residual; measure them from the final configuration unless training
    // already hit the null space.
    if first_skip.is_none() {
        let folded = matmul(&matmul(&prefix, reduced)?, &prefix.adjoint())?;
        for (k, power) in port_powers.iter_mut().enumerate().take(n).skip(num_layers) {
            *measurements += 1;
            *power = model.observe(
                model.power_scale(side, k) * folded[(k, k)].re,
                MeasureTag {
                    layer: (stream_tag << 32) | k as u64,
                    iteration: 0,
                    probe: 0,
                },
            );
        }
    }

    Ok(SideOutcome {
        port_powers,
        trained_modes: first_skip.unwrap_or(n),
    })
}

/// Sequential power optimization: trains every layer of network A on its
/// output power, then every layer of network B (Fig. of operations:
/// `P_k^A` for `k = 0..N_A-1`, then `P_k^B`). Singular values are the square
/// roots of the converged powers at matched ports.
pub fn sequential_power_training(
    mut mesh_a: MeshNetwork,
    mut mesh_b: MeshNetwork,
    input: &EnsembleState,
    schedule: &TrainingSchedule,
    model: &MeasurementModel,
    seed: u64,
) -> Result<TrainedPair> {
    validate_setup(&mesh_a, &mesh_b, input, schedule, model)?;
    let mut trace = TrainingTrace::default();
    let mut measurements = 0u64;

    let reduced_a = reduced_density(input, Side::A)?;
    let side_a = train_power_side(
        &mut mesh_a,
        &reduced_a,
        Side::A,
        schedule,
        model,
        seed,
        0,
        &mut measurements,
        &mut trace,
    )?;
    let reduced_b = reduced_density(input, Side::B)?;
    let side_b = train_power_side(
        &mut mesh_b,
        &reduced_b,
        Side::B,
        schedule,
        model,
        seed,
        1,
        &mut measurements,
        &mut trace,
    )?;

    let m = input.dim_a().min(input.dim_b());
    let report = report::build_report(report::ReportInputs {
        method: TrainingMethod::Power,
        input,
        mesh_a: &mesh_a,
        mesh_b: &mesh_b,
        objectives: side_a.port_powers[..m].to_vec(),
        objectives_b: Some(side_b.port_powers[..m].to_vec()),
        trained_modes_a: side_a.trained_modes.min(input.dim_a()),
        trained_modes_b: side_b.trained_modes.min(input.dim_b()),
        measurements,
        trace,
    })?;
    Ok(TrainedPair {
        mesh_a,
        mesh_b,
        report,
    })
}

/// Sequential coincidence optimization: for `k = 0..min(N_A, N_B)` trains
/// layer `k` of both meshes jointly on the `(k, k)` coincidence. Singular
/// values are square roots of the converged coincidences.
pub fn sequential_coincidence_training(
    mut mesh_a: MeshNetwork,
    mut mesh_b: MeshNetwork,
    input: &EnsembleState,
    schedule: &TrainingSchedule,
    model: &MeasurementModel,
    seed: u64,
) -> Result<TrainedPair> {
    validate_setup(&mesh_a, &mesh_b, input, schedule, model)?;
    let mut trace = TrainingTrace::default();
    let mut measurements = 0u64;
    let (na, nb) = (input.dim_a(), input.dim_b());
    let m = na.min(nb);
    let mut prefix_a = ComplexMatrix::identity(na);
    let mut prefix_b = ComplexMatrix::identity(nb);
    let mut coincidences = vec![0.0; m];
    let mut first_skip: Option<usize> = None;

    for k in 0..m {
        let layer_a = mesh_a
            .layers()
            .get(k)
            .cloned()
            .unwrap_or(SelfConfiguringLayer {
                output_port: k,
                nodes: vec![],
            });
        let layer_b = mesh_b
            .layers()
            .get(k)
            .cloned()
            .unwrap_or(SelfConfiguringLayer {
                output_port: k,
                nodes: vec![],
            });
        let mut problem = CoincidenceProblem::new(layer_a, layer_b, input, &prefix_a, &prefix_b)?;
        if first_skip.is_some() || problem.residual() < schedule.residual_stop {
            if first_skip.is_none() {
                first_skip = Some(k);
            }
            trace.layers.push(LayerSummary {
                layer: k,
                final_objective: 0.0,
                iterations: 0,
                measurements: 0,
                skipped_null_space: true,
                warning: None,
            });
            continue;
        }
        let mut run = LayerRun {
            schedule,
            model,
            scale: model.coincidence_scale(k, k),
            layer_index: k,
            stream_tag: 2,
            seed,
            measurements: &mut measurements,
            trace: &mut trace,
        };
        let outcome = run_layer(&mut problem, &mut run, None)?;
        coincidences[k] = outcome.final_objective;
        let mut scratch_a = SelfConfiguringLayer {
            output_port: k,
            nodes: vec![],
        };
        let mut scratch_b = SelfConfiguringLayer {
            output_port: k,
            nodes: vec![],
        };
        let has_a = k < mesh_a.layers().len();
        let has_b = k < mesh_b.layers().len();
        {
            let slot_a = if has_a { mesh_a.layer_mut(k) } else { &mut scratch_a };
            // Split borrows: mesh_a and mesh_b are distinct objects.
            Box::new(problem).store(StoreTarget::Pair(slot_a, {
                if has_b {
                    mesh_b.layer_mut(k)
                } else {
                    &mut scratch_b
                }
            }));
        }
        trace.layers.push(LayerSummary {
            layer: k,
            final_objective: coincidences[k],
            iterations: outcome.iterations,
            measurements: outcome.measurements,
            skipped_null_space: false,
            warning: outcome.warning,
        });
        if has_a {
            prefix_a = matmul(&layer_unitary(mesh_a.layer(k), na)?, &prefix_a)?;
        }
        if has_b {
            prefix_b = matmul(&layer_unitary(mesh_b.layer(k), nb)?, &prefix_b)?;
        }
    }

    let trained = first_skip.unwrap_or(m);
    let report = report::build_report(report::ReportInputs {
        method: TrainingMethod::Coincidence,
        input,
        mesh_a: &mesh_a,
        mesh_b: &mesh_b,
        objectives: coincidences,
        objectives_b: None,
        trained_modes_a: trained,
        trained_modes_b: trained,
        measurements,
        trace,
    })?;
    Ok(TrainedPair {
        mesh_a,
        mesh_b,
        report,
    })
}

/// Dispatch on the training method.
pub fn train(
    method: TrainingMethod,
    mesh_a: MeshNetwork,
    mesh_b: MeshNetwork,
    input: &EnsembleState,
    schedule: &TrainingSchedule,
    model: &MeasurementModel,
    seed: u64,
) -> Result<TrainedPair> {
    match method {
        TrainingMethod::Power => {
            sequential_power_training(mesh_a, mesh_b, input, schedule, model, seed)
        }
        TrainingMethod::Coincidence => {
            sequential_coincidence_training(mesh_a, mesh_b, input, schedule, model, seed)
        }
    }
}

/// Power objective for layer `k` of one mesh, earlier layers frozen at their
/// current phases.
pub fn objective_power(
    mesh: &MeshNetwork,
    input: &EnsembleState,
    side: Side,
    k: usize,
) -> Result<f64> {
    let reduced = reduced_density(input, side)?;
    let prefix = mesh.prefix_unitary(k)?;
    let problem = PowerProblem::new(mesh.layer(k).clone(), &reduced, &prefix)?;
    Ok(problem.true_value())
}

/// Analytic gradient of the layer-`k` power objective over the layer's
/// `[theta, phi]` parameters in node order.
pub fn power_layer_gradient(
    mesh: &MeshNetwork,
    input: &EnsembleState,
    side: Side,
    k: usize,
) -> Result<(f64, Vec<f64>)> {
    let reduced = reduced_density(input, side)?;
    let prefix = mesh.prefix_unitary(k)?;
    let problem = PowerProblem::new(mesh.layer(k).clone(), &reduced, &prefix)?;
    Ok(problem.true_value_and_grad())
}

/// Coincidence objective `C_kk` with layers `0..k` of both meshes frozen.
pub fn objective_coincidence(
    mesh_a: &MeshNetwork,
    mesh_b: &MeshNetwork,
    input: &EnsembleState,
    k: usize,
) -> Result<f64> {
    let problem = coincidence_problem_at(mesh_a, mesh_b, input, k)?;
    Ok(problem.true_value())
}

/// Analytic gradient of `C_kk` over the joint `[A-layer params, B-layer
/// params]` vector.
pub fn coincidence_layer_gradient(
    mesh_a: &MeshNetwork,
    mesh_b: &MeshNetwork,
    input: &EnsembleState,
    k: usize,
) -> Result<(f64, Vec<f64>)> {
    let problem = coincidence_problem_at(mesh_a, mesh_b, input, k)?;
    Ok(problem.true_value_and_grad())
}

fn coincidence_problem_at(
    mesh_a: &MeshNetwork,
    mesh_b: &MeshNetwork,
    input: &EnsembleState,
    k: usize,
) -> Result<CoincidenceProblem> {
    let prefix_a = mesh_a.prefix_unitary(k.min(mesh_a.layers().len()))?;
    let prefix_b = mesh_b.prefix_unitary(k.min(mesh_b.layers().len()))?;
    let layer_a = mesh_a
        .layers()
        .get(k)
        .cloned()
        .unwrap_or(SelfConfiguringLayer {
            output_port: k,
            nodes: vec![],
        });
    let layer_b = mesh_b
        .layers()
        .get(k)
        .cloned()
        .unwrap_or(SelfConfiguringLayer {
            output_port: k,
            nodes: vec![],
        });
    CoincidenceProblem::new(layer_a, layer_b, input, &prefix_a, &prefix_b)
}

/// Result of driving the first coincidence layer until the learned mode pair
/// reaches a fidelity target against the oracle decomposition.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FidelityCrossing {
    pub reached: bool,
    /// Objective evaluations consumed when the target was first met.
    pub measurements: u64,
    pub iterations: usize,
    pub final_fidelity: f64,
}

/// Trains layer 0 of a fresh mesh pair on `C_00` and reports how many
/// measurements it took for min(fidelity_A, fidelity_B) against the oracle's
/// leading singular vectors to reach `target`. The oracle is used only as a
/// stopping monitor, never by the optimizer.
pub fn measurements_to_first_mode_fidelity(
    input: &EnsembleState,
    schedule: &TrainingSchedule,
    model: &MeasurementModel,
    target: f64,
    seed: u64,
) -> Result<FidelityCrossing> {
    if !input.is_pure() {
        return Err(Error::InvalidParameter(
            "fidelity scaling runs on pure states".into(),
        ));
    }
    let state = &input.components()[0].1;
    let svd = crate::linalg::svd_oracle(state.matrix(), crate::linalg::DEFAULT_RANK_EPSILON)?;
    let ref_a = svd.left.column(0);
    let ref_b: Vec<Complex64> = svd.right.column(0).iter().map(|z| z.conj()).collect();

    let (na, nb) = (input.dim_a(), input.dim_b());
    let layer_a = SelfConfiguringLayer::diagonal_line(0, na);
    let layer_b = SelfConfiguringLayer::diagonal_line(0, nb);
    let mut problem = CoincidenceProblem::new(
        layer_a,
        layer_b,
        input,
        &ComplexMatrix::identity(na),
        &ComplexMatrix::identity(nb),
    )?;

    let mut trace = TrainingTrace::default();
    let mut measurements = 0u64;
    let mut crossing: Option<(u64, usize)> = None;
    let mut final_fidelity = 0.0;
    let mut iter_count = 0usize;
    {
        let mut monitor = |p: &CoincidenceProblem, used: u64| -> bool {
            iter_count += 1;
            let (mode_a, mode_b) = p.current_mode_vectors();
            let fa = crate::state::mode_fidelity(&mode_a, &ref_a).expect("same length");
            let fb = crate::state::mode_fidelity(&mode_b, &ref_b).expect("same length");
            final_fidelity = fa.min(fb);
            if final_fidelity >= target {
                crossing = Some((used, iter_count));
                true
            } else {
                false
            }
        };
        let mut run = LayerRun {
            schedule,
            model,
            scale: model.coincidence_scale(0, 0),
            layer_index: 0,
            stream_tag: 3,
            seed,
            measurements: &mut measurements,
            trace: &mut trace,
        };
        run_layer(&mut problem, &mut run, Some(&mut monitor))?;
    }
    Ok(match crossing {
        Some((used, iters)) => FidelityCrossing {
            reached: true,
            measurements: used,
            iterations: iters,
            final_fidelity,
        },
        None => FidelityCrossing {
            reached: false,
            measurements,
            iterations: iter_count,
            final_fidelity,
        },
    })
}
