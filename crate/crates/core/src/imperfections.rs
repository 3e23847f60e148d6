//! Loss models, finite-shot measurement noise, and mixed-state inputs.
//!
//! Losses act at the level of post-selected statistics: input losses scale
//! the amplitudes and renormalize (conditioning on pair survival), output
//! losses scale measured powers and coincidences per port. Shot noise draws
//! Poisson counts around the expected probability, with streams split per
//! (layer, iteration, probe) so concurrent evaluation stays reproducible.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SeededRng;
use crate::state::{EnsembleState, Side, StateMatrix};

/// Per-port amplitude transmissions; power transmission is the square.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossModel {
    pub input_a: Vec<f64>,
    pub input_b: Vec<f64>,
    pub output_a: Vec<f64>,
    pub output_b: Vec<f64>,
}

impl LossModel {
    pub fn lossless(n_a: usize, n_b: usize) -> Self {
        Self {
            input_a: vec![1.0; n_a],
            input_b: vec![1.0; n_b],
            output_a: vec![1.0; n_a],
            output_b: vec![1.0; n_b],
        }
    }

    pub fn validate(&self, n_a: usize, n_b: usize) -> Result<()> {
        for (name, etas, expected) in [
            ("input_a", &self.input_a, n_a),
            ("input_b", &self.input_b, n_b),
            ("output_a", &self.output_a, n_a),
            ("output_b", &self.output_b, n_b),
        ] {
            if etas.len() != expected {
                return Err(Error::InvalidParameter(format!(
                    "{name} has {} transmissions, expected {expected}",
                    etas.len()
                )));
            }
            if etas.iter().any(|e| !(0.0..=1.0).contains(e)) {
                return Err(Error::InvalidParameter(format!(
                    "{name} transmissions must lie in [0, 1]"
                )));
            }
        }
        Ok(())
    }

    pub fn is_lossless(&self) -> bool {
        [&self.input_a, &self.input_b, &self.output_a, &self.output_b]
            .iter()
            .all(|etas| etas.iter().all(|&e| e == 1.0))
    }

    /// Power scale applied to a measured output power on `side`, port `k`.
    pub fn output_power_factor(&self, side: Side, port: usize) -> f64 {
        let eta = match side {
            Side::A => self.output_a[port],
            Side::B => self.output_b[port],
        };
        eta * eta
    }

    /// Power scale applied to a measured coincidence on port pair `(j, k)`.
    pub fn output_coincidence_factor(&self, j: usize, k: usize) -> f64 {
        let (ea, eb) = (self.output_a[j], self.output_b[k]);
        ea * ea * eb * eb
    }
}

/// Post-selected state after input losses: amplitudes scaled per input port
/// and renormalized. Returns the distorted state and the survival
/// probability of a pair.
pub fn apply_input_loss(state: &StateMatrix, loss: &LossModel) -> Result<(StateMatrix, f64)> {
    loss.validate(state.dim_a(), state.dim_b())?;
    if loss.input_a.iter().all(|&e| e == 0.0) {
        return Err(Error::DarkSide { side: "A" });
    }
    if loss.input_b.iter().all(|&e| e == 0.0) {
        return Err(Error::DarkSide { side: "B" });
    }
    let g = state.matrix();
    let scaled = crate::linalg::ComplexMatrix::from_fn(g.rows(), g.cols(), |j, k| {
        g[(j, k)] * loss.input_a[j] * loss.input_b[k]
    });
    let survival = scaled.frobenius_norm().powi(2);
    if survival < 1e-300 {
        return Err(Error::InvalidParameter(
            "input losses extinguish the state".into(),
        ));
    }
    Ok((StateMatrix::normalized(scaled)?, survival))
}

/// Ensemble version: each component is distorted and the weights are
/// re-conditioned on survival.
pub fn apply_input_loss_ensemble(
    input: &EnsembleState,
    loss: &LossModel,
) -> Result<(EnsembleState, f64)> {
    let mut components = Vec::with_capacity(input.components().len());
    let mut survival = 0.0;
    for (w, s) in input.components() {
        let (distorted, p) = apply_input_loss(s, loss)?;
        survival += w * p;
        components.push((w * p, distorted));
    }
    for (w, _) in components.iter_mut() {
        *w /= survival;
    }
    Ok((EnsembleState::new(components)?, survival))
}

/// Scales measured powers by the per-port output transmission squared.
pub fn apply_output_loss_powers(powers: &[f64], loss: &LossModel, side: Side) -> Vec<f64> {
    powers
        .iter()
        .enumerate()
        .map(|(k, p)| p * loss.output_power_factor(side, k))
        .collect()
}

/// Scales a measured coincidence grid by the per-port output transmissions.
pub fn apply_output_loss_coincidences(grid: &[Vec<f64>], loss: &LossModel) -> Vec<Vec<f64>> {
    grid.iter()
        .enumerate()
        .map(|(j, row)| {
            row.iter()
                .enumerate()
                .map(|(k, c)| c * loss.output_coincidence_factor(j, k))
                .collect()
        })
        .collect()
}

/// Undoes known output losses on measured singular values (which scale with
/// the amplitude transmission, not its square).
pub fn calibrate_values(values: &[f64], loss: &LossModel, coincidence: bool) -> Vec<f64> {
    values
        .iter()
        .enumerate()
        .map(|(k, v)| {
            let factor = if coincidence {
                loss.output_coincidence_factor(k, k)
            } else {
                loss.output_power_factor(Side::A, k)
            };
            v / factor.sqrt()
        })
        .collect()
}

/// Finite pair budget per objective evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShotNoiseModel {
    /// Poisson mean budget per evaluation.
    pub pairs_per_evaluation: u64,
    /// Root seed for the per-evaluation streams.
    pub seed: u64,
    /// Exact limit for tests: evaluations return the true probability.
    #[serde(default)]
    pub infinite_budget: bool,
}

impl ShotNoiseModel {
    pub fn validate(&self) -> Result<()> {
        if !self.infinite_budget && self.pairs_per_evaluation == 0 {
            return Err(Error::EmptyMeasurement);
        }
        Ok(())
    }
}

/// Independent Poisson counts with mean `p * pairs_per_evaluation`.
pub fn sample_counts(
    probabilities: &[f64],
    model: &ShotNoiseModel,
    rng: &mut impl Rng,
) -> Result<Vec<u64>> {
    if model.pairs_per_evaluation == 0 {
        return Err(Error::EmptyMeasurement);
    }
    probabilities
        .iter()
        .map(|&p| {
            if !(0.0..=1.0 + 1e-12).contains(&p) {
                return Err(Error::InvalidParameter(format!(
                    "probability {p} outside [0, 1]"
                )));
            }
            Ok(poisson_draw(p * model.pairs_per_evaluation as f64, rng))
        })
        .collect()
}

fn poisson_draw(lambda: f64, rng: &mut impl Rng) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    let draw: f64 = Poisson::new(lambda).expect("positive lambda").sample(rng);
    draw as u64
}

/// How objective evaluations turn expected probabilities into measurements.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountingMode {
    /// Exact expectation values.
    Exact,
    /// Finite pair budget with Poisson statistics.
    Shot(ShotNoiseModel),
}

/// Measurement path used by the trainer: optional output losses scale the
/// true probability, then the counting mode turns it into a reading.
///
/// Input losses distort the state itself and are applied by the caller via
/// [`apply_input_loss`] before training begins.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementModel {
    pub counting: CountingMode,
    pub loss: Option<LossModel>,
}

/// Identifies one objective evaluation so its noise stream is independent of
/// evaluation order.
#[derive(Clone, Copy, Debug)]
pub struct MeasureTag {
    pub layer: u64,
    pub iteration: u64,
    pub probe: u64,
}

impl MeasurementModel {
    pub fn exact() -> Self {
        Self {
            counting: CountingMode::Exact,
            loss: None,
        }
    }

    pub fn shot(pairs_per_evaluation: u64, seed: u64) -> Self {
        Self {
            counting: CountingMode::Shot(ShotNoiseModel {
                pairs_per_evaluation,
                seed,
                infinite_budget: false,
            }),
            loss: None,
        }
    }

    pub fn with_loss(mut self, loss: LossModel) -> Self {
        self.loss = Some(loss);
        self
    }

    /// True when evaluations are exact expectations (analytic gradients are
    /// admissible).
    pub fn is_exact(&self) -> bool {
        match &self.counting {
            CountingMode::Exact => true,
            CountingMode::Shot(m) => m.infinite_budget,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let CountingMode::Shot(m) = &self.counting {
            m.validate()?;
        }
        Ok(())
    }

    pub fn power_scale(&self, side: Side, port: usize) -> f64 {
        self.loss
            .as_ref()
            .map_or(1.0, |l| l.output_power_factor(side, port))
    }

    pub fn coincidence_scale(&self, j: usize, k: usize) -> f64 {
        self.loss
            .as_ref()
            .map_or(1.0, |l| l.output_coincidence_factor(j, k))
    }

    /// Turns a loss-scaled expected probability into a measured estimate.
    pub fn observe(&self, expected: f64, tag: MeasureTag) -> f64 {
        match &self.counting {
            CountingMode::Exact => expected,
            CountingMode::Shot(m) if m.infinite_budget => expected,
            CountingMode::Shot(m) => {
                let mut rng =
                    SeededRng::new(m.seed).stream(&[tag.layer, tag.iteration, tag.probe]);
                let count = poisson_draw(expected * m.pairs_per_evaluation as f64, &mut rng);
                count as f64 / m.pairs_per_evaluation as f64
            }
        }
    }
}

/// Statistical mixture input; weights must sum to one.
pub fn mixed_input(components: Vec<(f64, StateMatrix)>) -> Result<EnsembleState> {
    EnsembleState::new(components)
}
