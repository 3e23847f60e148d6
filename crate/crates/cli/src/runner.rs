//! Scenario execution: builds sources, trains, validates against the oracle,
//! evaluates configured assertions, and writes reports plus artifacts.

use anyhow::{anyhow, bail, Context, Result};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use schmidt_mesh_core::imperfections::{
    apply_input_loss, CountingMode, MeasurementModel, ShotNoiseModel,
};
use schmidt_mesh_core::linalg::{haar_unitary, svd_oracle, SeededRng, DEFAULT_RANK_EPSILON};
use schmidt_mesh_core::mesh::{network_unitary, MeshNetwork, Topology};
use schmidt_mesh_core::protocols::{
    distribute_entanglement, generate_supermode_bell, state_overlap, ScatteringScenario,
};
use schmidt_mesh_core::sources::{
    bell_state, degenerate_state, fixed_spectrum_state, random_state, spdc_jsa,
};
use schmidt_mesh_core::state::{
    coincidence_matrix, transformed_amplitudes, von_neumann_entropy, EnsembleState, LogBase,
};
use schmidt_mesh_core::trainer::{
    measurements_to_first_mode_fidelity, train, TrainedPair,
};
use schmidt_mesh_core::{ComplexMatrix, StateMatrix};

use crate::config::{
    Assertions, CountingKind, ExperimentConfig, Scenario, SourceSpec,
};
use crate::csvio::matrix_to_csv;
use crate::report::{
    write_atomic, AssertionResult, NoiseSweepBlock, NoiseSweepRow, OracleBlock, RunReport,
    ScalingBlock, ScalingRow, SchmidtBlock, SupermodeBlock,
};
use crate::svg::heatmap;

const SOURCE_TAG: u64 = 0x50;
const CHANNEL_A_TAG: u64 = 0xc4a;
const CHANNEL_B_TAG: u64 = 0xc4b;
const NOISE_TAG: u64 = 0x4015e;

pub fn build_source(spec: &SourceSpec, seed: u64) -> Result<StateMatrix> {
    let mut rng = SeededRng::new(seed).stream(&[SOURCE_TAG]);
    let state = match spec {
        SourceSpec::Random { n_a, n_b } => random_state(*n_a, *n_b, &mut rng),
        SourceSpec::Spdc { params } => spdc_jsa(params),
        SourceSpec::Degenerate { n } => degenerate_state(*n, &mut rng),
        SourceSpec::Bell => Ok(bell_state()),
        SourceSpec::FixedSpectrum { n, spectrum } => fixed_spectrum_state(*n, spectrum, &mut rng),
    };
    state.map_err(|e| anyhow!("building source: {e}"))
}

fn measurement_model(config: &ExperimentConfig, seed: u64) -> MeasurementModel {
    let counting = match config.measurement.counting {
        CountingKind::Exact => CountingMode::Exact,
        CountingKind::Shot => CountingMode::Shot(ShotNoiseModel {
            pairs_per_evaluation: config.measurement.pairs_per_evaluation.unwrap_or(1_000_000),
            seed: config
                .measurement
                .noise_seed
                .unwrap_or_else(|| SeededRng::new(seed).child(NOISE_TAG).seed()),
            infinite_budget: false,
        }),
    };
    MeasurementModel {
        counting,
        loss: config.loss.clone(),
    }
}

fn magnitude_grid(m: &ComplexMatrix) -> Vec<Vec<f64>> {
    (0..m.rows())
        .map(|i| m.row(i).iter().map(|z| z.norm()).collect())
        .collect()
}

struct Artifacts<'a> {
    dir: &'a Path,
    names: Vec<String>,
}

impl<'a> Artifacts<'a> {
    fn new(dir: &'a Path) -> Self {
        Self {
            dir,
            names: Vec::new(),
        }
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        write_atomic(&self.dir.join(name), contents)?;
        self.names.push(name.to_string());
        Ok(())
    }

    fn finish(mut self) -> Vec<String> {
        self.names.sort();
        self.names
    }
}

/// Runs one seed of the configured scenario and writes `report.json` plus
/// artifacts into `out_dir`. Returns the report.
pub fn execute_single(config: &ExperimentConfig, seed: u64, out_dir: &Path) -> Result<RunReport> {
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;
    let started = Instant::now();
    let mut artifacts = Artifacts::new(out_dir);

    let mut report = match config.scenario {
        Scenario::Decompose | Scenario::Spdc => {
            run_decompose(config, seed, &mut artifacts)?
        }
        Scenario::Distribute => run_distribute(config, seed, &mut artifacts)?,
        Scenario::Scaling => run_scaling(config, seed)?,
        Scenario::NoiseSweep => run_noise_sweep(config, seed, &mut artifacts)?,
        Scenario::Supermode => run_supermode(config, seed, &mut artifacts)?,
    };

    report.wall_clock_seconds = started.elapsed().as_secs_f64();
    report.artifacts = {
        let mut names = artifacts.finish();
        names.push("report.json".to_string());
        names.sort();
        names
    };
    let json = report.to_json()?;
    write_atomic(&out_dir.join("report.json"), &json)?;
    Ok(report)
}

fn base_report(config: &ExperimentConfig, seed: u64) -> RunReport {
    RunReport {
        config: config.clone(),
        seed,
        source_dims: config.source.dims(),
        input_survival: 1.0,
        schmidt: None,
        oracle: None,
        meshes: None,
        distribution: None,
        scaling: None,
        noise_sweep: None,
        supermode: None,
        assertions: Vec::new(),
        measurements_total: 0,
        artifacts: Vec::new(),
        wall_clock_seconds: 0.0,
    }
}

fn train_on_state(
    config: &ExperimentConfig,
    state: StateMatrix,
    seed: u64,
) -> Result<TrainedPair> {
    let input = EnsembleState::pure(state);
    let mesh_a = MeshNetwork::full(input.dim_a(), Topology::DiagonalLine)?;
    let mesh_b = MeshNetwork::full(input.dim_b(), Topology::DiagonalLine)?;
    let model = measurement_model(config, seed);
    Ok(train(
        config.method,
        mesh_a,
        mesh_b,
        &input,
        &config.schedule,
        &model,
        seed,
    )?)
}

fn oracle_block(state: &StateMatrix, values: &[f64], entropy_bits: f64) -> Result<OracleBlock> {
    let svd = svd_oracle(state.matrix(), DEFAULT_RANK_EPSILON)?;
    let entropy_oracle = von_neumann_entropy(&svd.values, LogBase::Two);
    let m = values.len().min(svd.values.len());
    let value_errors: Vec<f64> = (0..m)
        .map(|k| (values[k] - svd.values[k]).abs())
        .collect();
    let entropy_error = if entropy_oracle > 1e-9 {
        (entropy_bits - entropy_oracle).abs() / entropy_oracle
    } else {
        (entropy_bits - entropy_oracle).abs()
    };
    Ok(OracleBlock {
        values_oracle: svd.values,
        value_errors,
        entropy_oracle_bits: entropy_oracle,
        entropy_error,
    })
}

fn run_decompose(
    config: &ExperimentConfig,
    seed: u64,
    artifacts: &mut Artifacts<'_>,
) -> Result<RunReport> {
    let source = build_source(&config.source, seed)?;
    let (train_state, survival) = match &config.loss {
        Some(loss) => apply_input_loss(&source, loss)?,
        None => (source.clone(), 1.0),
    };

    artifacts.write("g_input.svg", &heatmap(&magnitude_grid(train_state.matrix()), "|G|"))?;
    if config.scenario == Scenario::Spdc {
        artifacts.write("g_input.csv", &matrix_to_csv(train_state.matrix()))?;
    }

    let pair = train_on_state(config, train_state.clone(), seed)?;
    let oracle = oracle_block(&train_state, &pair.report.values, pair.report.entropy_bits)?;

    let u_a = network_unitary(&pair.mesh_a);
    let u_b = network_unitary(&pair.mesh_b);
    let transformed = transformed_amplitudes(&train_state, &u_a, &u_b)?;
    artifacts.write(
        "g_transformed.svg",
        &heatmap(&magnitude_grid(&transformed), "|G'| after training"),
    )?;
    let coins = coincidence_matrix(&EnsembleState::pure(train_state), &u_a, &u_b)?;
    artifacts.write("coincidences.svg", &heatmap(&coins, "coincidences"))?;
    artifacts.write("trace.csv", &pair.report.trace.to_csv())?;

    let mut report = base_report(config, seed);
    report.input_survival = survival;
    report.measurements_total = pair.report.measurements_total;
    report.assertions = decomposition_assertions(&config.assertions, &pair.report, &oracle);
    report.schmidt = Some(SchmidtBlock::from(&pair.report));
    report.oracle = Some(oracle);
    report.meshes = Some((pair.mesh_a, pair.mesh_b));
    Ok(report)
}

fn decomposition_assertions(
    assertions: &Assertions,
    schmidt: &schmidt_mesh_core::trainer::SchmidtReport,
    oracle: &OracleBlock,
) -> Vec<AssertionResult> {
    let mut out = Vec::new();
    if let Some(limit) = assertions.entropy_error_max_rel {
        out.push(check(
            "entropy_error_max_rel",
            oracle.entropy_error <= limit,
            format!("entropy error {:.3e} vs limit {limit:.3e}", oracle.entropy_error),
        ));
    }
    if let Some(limit) = assertions.value_error_max {
        let worst = oracle.value_errors.iter().copied().fold(0.0f64, f64::max);
        out.push(check(
            "value_error_max",
            worst <= limit,
            format!("max value error {worst:.3e} vs limit {limit:.3e}"),
        ));
    }
    if let Some(limit) = assertions.min_mode_fidelity {
        let fidelities: Vec<f64> = schmidt
            .fidelities_a
            .iter()
            .chain(&schmidt.fidelities_b)
            .copied()
            .collect();
        let (passed, detail) = if fidelities.is_empty() {
            (false, "no fidelities available (mixed input?)".to_string())
        } else {
            let worst = fidelities.iter().copied().fold(1.0f64, f64::min);
            (
                worst >= limit,
                format!("min fidelity {worst:.6} vs limit {limit:.6}"),
            )
        };
        out.push(check("min_mode_fidelity", passed, detail));
    }
    if let Some(limit) = assertions.max_crosstalk {
        out.push(check(
            "max_crosstalk",
            schmidt.crosstalk <= limit,
            format!("crosstalk {:.3e} vs limit {limit:.3e}", schmidt.crosstalk),
        ));
    }
    if let Some(limit) = assertions.min_crosstalk {
        out.push(check(
            "min_crosstalk",
            schmidt.crosstalk >= limit,
            format!("crosstalk {:.3e} vs floor {limit:.3e}", schmidt.crosstalk),
        ));
    }
    out
}

fn check(name: &str, passed: bool, detail: String) -> AssertionResult {
    AssertionResult {
        name: name.to_string(),
        passed,
        detail,
    }
}

fn run_distribute(
    config: &ExperimentConfig,
    seed: u64,
    artifacts: &mut Artifacts<'_>,
) -> Result<RunReport> {
    let source = build_source(&config.source, seed)?;
    let dim = config.distribute.channel_dim;
    let scenario = ScatteringScenario {
        source,
        channel_a: haar_unitary(dim, &mut SeededRng::new(seed).stream(&[CHANNEL_A_TAG])),
        channel_b: haar_unitary(dim, &mut SeededRng::new(seed).stream(&[CHANNEL_B_TAG])),
    };
    let model = measurement_model(config, seed);
    let (dist, pair) = distribute_entanglement(&scenario, &config.schedule, &model, seed)?;

    let received = scenario.received_state()?;
    let u_a = network_unitary(&pair.mesh_a);
    let u_b = network_unitary(&pair.mesh_b);
    let coins = coincidence_matrix(&EnsembleState::pure(received), &u_a, &u_b)?;
    artifacts.write("coincidences.svg", &heatmap(&coins, "coincidences after training"))?;
    artifacts.write("trace.csv", &pair.report.trace.to_csv())?;

    let mut assertions = Vec::new();
    if let Some(limit) = config.assertions.min_diagonal_sum {
        assertions.push(check(
            "min_diagonal_sum",
            dist.diagonal_sum >= limit,
            format!("diagonal sum {:.6} vs floor {limit:.6}", dist.diagonal_sum),
        ));
    }
    if let Some(limit) = config.assertions.max_crosstalk {
        assertions.push(check(
            "max_crosstalk",
            dist.crosstalk <= limit,
            format!("crosstalk {:.3e} vs limit {limit:.3e}", dist.crosstalk),
        ));
    }
    if let Some(limit) = config.assertions.value_error_max {
        let worst = dist
            .values_learned
            .iter()
            .zip(&dist.values_oracle)
            .map(|(l, o)| (l - o).abs())
            .fold(0.0f64, f64::max);
        assertions.push(check(
            "value_error_max",
            worst <= limit,
            format!("max learned-vs-oracle delta {worst:.3e} vs limit {limit:.3e}"),
        ));
    }

    let mut report = base_report(config, seed);
    report.measurements_total = dist.measurements_used;
    report.schmidt = Some(SchmidtBlock::from(&pair.report));
    report.meshes = Some((pair.mesh_a, pair.mesh_b));
    report.distribution = Some(dist);
    report.assertions = assertions;
    Ok(report)
}

fn run_scaling(config: &ExperimentConfig, seed: u64) -> Result<RunReport> {
    let cfg = &config.scaling;
    let model = measurement_model(config, seed);
    let mut rows = Vec::new();
    let mut medians = Vec::new();
    for &n in &cfg.sizes {
        let mut per_size = Vec::new();
        for i in 0..cfg.seeds_per_size {
            let run_seed = SeededRng::new(seed).child(n as u64).child(i as u64).seed();
            let state = fixed_spectrum_state(
                n,
                &cfg.spectrum,
                &mut SeededRng::new(run_seed).stream(&[SOURCE_TAG]),
            )?;
            let crossing = measurements_to_first_mode_fidelity(
                &EnsembleState::pure(state),
                &config.schedule,
                &model,
                cfg.target_fidelity,
                run_seed,
            )?;
            if !crossing.reached {
                bail!(
                    "scaling run n={n} seed {i} stalled at fidelity {:.4}",
                    crossing.final_fidelity
                );
            }
            rows.push(ScalingRow {
                dimension: n,
                seed: run_seed,
                measurements: crossing.measurements,
                iterations: crossing.iterations,
                reached: crossing.reached,
            });
            per_size.push(crossing.measurements as f64);
        }
        per_size.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        medians.push((n, median(&per_size)));
    }

    let exponent = fit_power_law(&medians);
    let mut assertions = Vec::new();
    if let Some(limit) = config.assertions.max_exponent {
        assertions.push(check(
            "max_exponent",
            exponent <= limit,
            format!("fitted exponent {exponent:.3} vs limit {limit:.3}"),
        ));
    }

    let mut report = base_report(config, seed);
    report.measurements_total = rows.iter().map(|r| r.measurements).sum();
    report.scaling = Some(ScalingBlock {
        rows,
        medians,
        fitted_exponent: exponent,
    });
    report.assertions = assertions;
    Ok(report)
}

pub fn scaling_csv(block: &ScalingBlock) -> String {
    let mut out = String::from("dimension,seed,measurements,iterations,reached\n");
    for r in &block.rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.dimension, r.seed, r.measurements, r.iterations, r.reached
        ));
    }
    out
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Least-squares slope of ln(median) against ln(dimension).
fn fit_power_law(medians: &[(usize, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = medians
        .iter()
        .map(|(n, m)| ((*n as f64).ln(), m.max(1.0).ln()))
        .collect();
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

fn run_noise_sweep(
    config: &ExperimentConfig,
    seed: u64,
    artifacts: &mut Artifacts<'_>,
) -> Result<RunReport> {
    let cfg = &config.noise_sweep;
    let source = build_source(&config.source, seed)?;
    let oracle = svd_oracle(source.matrix(), DEFAULT_RANK_EPSILON)?;
    let entropy_oracle = von_neumann_entropy(&oracle.values, LogBase::Two);
    if entropy_oracle <= 1e-9 {
        bail!("noise sweep needs an entangled source");
    }
    let input = EnsembleState::pure(source);

    let mut rows = Vec::new();
    let mut medians = Vec::new();
    for &budget in &cfg.budgets {
        let mut errors = Vec::new();
        for i in 0..cfg.seeds_per_budget {
            let run_seed = SeededRng::new(seed).child(budget).child(i as u64).seed();
            let model = MeasurementModel {
                counting: CountingMode::Shot(ShotNoiseModel {
                    pairs_per_evaluation: budget,
                    seed: SeededRng::new(run_seed).child(NOISE_TAG).seed(),
                    infinite_budget: false,
                }),
                loss: config.loss.clone(),
            };
            let mesh_a = MeshNetwork::full(input.dim_a(), Topology::DiagonalLine)?;
            let mesh_b = MeshNetwork::full(input.dim_b(), Topology::DiagonalLine)?;
            let pair = train(
                config.method,
                mesh_a,
                mesh_b,
                &input,
                &config.schedule,
                &model,
                run_seed,
            )?;
            let error = (pair.report.entropy_bits - entropy_oracle).abs() / entropy_oracle;
            rows.push(NoiseSweepRow {
                budget,
                seed: run_seed,
                entropy_bits: pair.report.entropy_bits,
                entropy_error_rel: error,
            });
            errors.push(error);
        }
        errors.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        medians.push((budget, median(&errors)));
    }

    let mut csv = String::from("budget,seed,entropy_bits,entropy_error_rel\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            r.budget, r.seed, r.entropy_bits, r.entropy_error_rel
        ));
    }
    artifacts.write("sweep.csv", &csv)?;

    let mut assertions = Vec::new();
    if config.assertions.noise_monotone.unwrap_or(false) {
        let ok = medians.windows(2).all(|w| w[1].1 <= w[0].1);
        assertions.push(check(
            "noise_monotone",
            ok,
            format!("medians {medians:?}"),
        ));
    }
    if let Some(limit) = config.assertions.noise_entropy_error_max_rel {
        let last = medians.last().expect("budgets non-empty").1;
        assertions.push(check(
            "noise_entropy_error_max_rel",
            last <= limit,
            format!("median error {last:.4} at largest budget vs limit {limit:.4}"),
        ));
    }

    let mut report = base_report(config, seed);
    report.noise_sweep = Some(NoiseSweepBlock { rows, medians });
    report.assertions = assertions;
    Ok(report)
}

fn run_supermode(
    config: &ExperimentConfig,
    seed: u64,
    artifacts: &mut Artifacts<'_>,
) -> Result<RunReport> {
    let source = build_source(&config.source, seed)?;
    let pair = train_on_state(config, source.clone(), seed)?;
    let tol = config.supermode.degeneracy_tolerance;
    let phase = config.supermode.phase;
    let psi0 = generate_supermode_bell(&pair, phase, tol)?;
    let psi_pi = generate_supermode_bell(&pair, phase + std::f64::consts::PI, tol)?;

    let svd = svd_oracle(psi0.matrix(), DEFAULT_RANK_EPSILON)?;
    let entropy = von_neumann_entropy(&svd.values, LogBase::Two);
    let overlap = state_overlap(&psi0, &psi_pi)?;
    let ports = EnsembleState::pure(psi0.clone());
    let ia = ComplexMatrix::identity(psi0.matrix().rows());
    let ib = ComplexMatrix::identity(psi0.matrix().cols());
    let grid = coincidence_matrix(&ports, &ia, &ib)?;

    artifacts.write("supermode_phase0.csv", &matrix_to_csv(psi0.matrix()))?;
    artifacts.write("supermode_phasepi.csv", &matrix_to_csv(psi_pi.matrix()))?;
    artifacts.write("trace.csv", &pair.report.trace.to_csv())?;

    let mut assertions = Vec::new();
    if let Some(tol) = config.assertions.supermode_entropy_tolerance {
        assertions.push(check(
            "supermode_entropy_tolerance",
            (entropy - 1.0).abs() <= tol,
            format!("entropy {entropy:.6} bits vs 1 +/- {tol}"),
        ));
    }
    if let Some(limit) = config.assertions.supermode_max_overlap {
        assertions.push(check(
            "supermode_max_overlap",
            overlap <= limit,
            format!("overlap {overlap:.3e} vs limit {limit:.3e}"),
        ));
    }

    let mut report = base_report(config, seed);
    report.measurements_total = pair.report.measurements_total;
    report.supermode = Some(SupermodeBlock {
        entropy_bits: entropy,
        phase0_phasepi_overlap: overlap,
        coincidence_00: grid[0][0],
        coincidence_11: grid[1][1],
    });
    report.schmidt = Some(SchmidtBlock::from(&pair.report));
    report.meshes = Some((pair.mesh_a, pair.mesh_b));
    report.assertions = assertions;
    Ok(report)
}

pub struct RunOutcome {
    pub all_passed: bool,
    pub reports: Vec<(u64, PathBuf)>,
}

/// Runs every configured seed, fanning out over `jobs` worker threads when
/// more than one seed is present. Single-seed runs write directly into the
/// output directory; multi-seed runs use `seed_<n>/` subdirectories plus an
/// aggregate `summary.json`.
pub fn run_all(config: &ExperimentConfig, jobs: usize, out_dir: &Path) -> Result<RunOutcome> {
    let seeds = config.seeds.clone();
    if seeds.len() == 1 {
        let report = execute_single(config, seeds[0], out_dir)?;
        print_assertions(seeds[0], &report);
        return Ok(RunOutcome {
            all_passed: report.all_assertions_pass(),
            reports: vec![(seeds[0], out_dir.join("report.json"))],
        });
    }

    let results: Mutex<Vec<(u64, Result<RunReport>)>> = Mutex::new(Vec::new());
    let next = AtomicUsize::new(0);
    let workers = jobs.max(1).min(seeds.len());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= seeds.len() {
                    break;
                }
                let seed = seeds[i];
                let dir = out_dir.join(format!("seed_{seed}"));
                let result = execute_single(config, seed, &dir);
                results.lock().expect("poisoned").push((seed, result));
            });
        }
    });

    let mut results = results.into_inner().expect("poisoned");
    results.sort_by_key(|(seed, _)| *seed);
    let mut all_passed = true;
    let mut reports = Vec::new();
    let mut summary = Vec::new();
    for (seed, result) in results {
        match result {
            Ok(report) => {
                print_assertions(seed, &report);
                all_passed &= report.all_assertions_pass();
                summary.push(serde_json::json!({
                    "seed": seed,
                    "passed": report.all_assertions_pass(),
                    "assertions": report.assertions,
                }));
                reports.push((seed, out_dir.join(format!("seed_{seed}/report.json"))));
            }
            Err(e) => {
                all_passed = false;
                summary.push(serde_json::json!({
                    "seed": seed,
                    "passed": false,
                    "error": e.to_string(),
                }));
                eprintln!("seed {seed}: error: {e}");
            }
        }
    }
    let summary_json = serde_json::to_string_pretty(&serde_json::json!({
        "all_passed": all_passed,
        "runs": summary,
    }))? + "\n";
    write_atomic(&out_dir.join("summary.json"), &summary_json)?;
    Ok(RunOutcome {
        all_passed,
        reports,
    })
}

fn print_assertions(seed: u64, report: &RunReport) {
    for a in &report.assertions {
        println!(
            "seed {seed}: [{}] {}: {}",
            if a.passed { "pass" } else { "FAIL" },
            a.name,
            a.detail
        );
    }
}
