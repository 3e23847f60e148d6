//! Experiment configuration: TOML in, strictly validated, echoed verbatim
//! into every report.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

use schmidt_mesh_core::imperfections::LossModel;
use schmidt_mesh_core::sources::SpdcParams;
use schmidt_mesh_core::trainer::{TrainingMethod, TrainingSchedule};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Train on a source state and compare against the oracle.
    Decompose,
    /// SPDC joint-spectral-amplitude source with entropy validation.
    Spdc,
    /// Shot-noise budget sweep.
    NoiseSweep,
    /// Entanglement distribution through seeded scattering channels.
    Distribute,
    /// Measurements-to-fidelity scaling over mesh sizes.
    Scaling,
    /// Supermode Bell synthesis from a degenerate source.
    Supermode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceSpec {
    Random {
        n_a: usize,
        n_b: usize,
    },
    Spdc {
        #[serde(flatten)]
        params: SpdcParams,
    },
    Degenerate {
        n: usize,
    },
    Bell,
    FixedSpectrum {
        n: usize,
        spectrum: Vec<f64>,
    },
}

impl SourceSpec {
    pub fn dims(&self) -> (usize, usize) {
        match self {
            SourceSpec::Random { n_a, n_b } => (*n_a, *n_b),
            SourceSpec::Spdc { params } => (params.n_bins, params.n_bins),
            SourceSpec::Degenerate { n } | SourceSpec::FixedSpectrum { n, .. } => (*n, *n),
            SourceSpec::Bell => (2, 2),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub struct MeasurementConfig {
    /// `exact` or `shot`.
    pub counting: CountingKind,
    #[serde(default)]
    pub pairs_per_evaluation: Option<u64>,
    /// Shot-noise stream seed; derived from the run seed when omitted.
    #[serde(default)]
    pub noise_seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountingKind {
    Exact,
    Shot,
}

impl Default for MeasurementConfig {
    fn default() -> Self {
        Self {
            counting: CountingKind::Exact,
            pairs_per_evaluation: None,
            noise_seed: None,
        }
    }
}

/// Optional pass/fail thresholds; only configured ones are checked, and the
/// run exits non-zero if any fails.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Assertions {
    /// Relative entropy error vs the oracle (absolute when the oracle
    /// entropy is below 1e-9 bits).
    pub entropy_error_max_rel: Option<f64>,
    pub value_error_max: Option<f64>,
    pub min_mode_fidelity: Option<f64>,
    pub max_crosstalk: Option<f64>,
    pub min_crosstalk: Option<f64>,
    /// Distribution scenario: minimum diagonal coincidence sum.
    pub min_diagonal_sum: Option<f64>,
    /// Scaling scenario: maximum fitted power-law exponent.
    pub max_exponent: Option<f64>,
    /// Noise sweep: maximum median entropy error (relative) at the largest
    /// budget.
    pub noise_entropy_error_max_rel: Option<f64>,
    /// Noise sweep: medians must decrease monotonically with the budget.
    pub noise_monotone: Option<bool>,
    /// Supermode scenario: maximum |entropy - 1 bit| of the synthesized state.
    pub supermode_entropy_tolerance: Option<f64>,
    /// Supermode scenario: maximum overlap between the phase-0 and phase-pi
    /// outputs.
    pub supermode_max_overlap: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScalingConfig {
    pub sizes: Vec<usize>,
    pub seeds_per_size: usize,
    pub target_fidelity: f64,
    /// Singular spectrum embedded at every size so the gap is constant.
    pub spectrum: Vec<f64>,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        Self {
            sizes: vec![4, 8, 16, 32],
            seeds_per_size: 10,
            target_fidelity: 0.99,
            spectrum: vec![0.75, 0.5, 0.35, 0.25],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSweepConfig {
    pub budgets: Vec<u64>,
    pub seeds_per_budget: usize,
}

impl Default for NoiseSweepConfig {
    fn default() -> Self {
        Self {
            budgets: vec![1_000, 10_000, 100_000, 1_000_000],
            seeds_per_budget: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistributeConfig {
    /// Mode count of each scattering channel (the source embeds into it).
    pub channel_dim: usize,
}

impl Default for DistributeConfig {
    fn default() -> Self {
        Self { channel_dim: 8 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SupermodeConfig {
    pub phase: f64,
    pub degeneracy_tolerance: f64,
}

impl Default for SupermodeConfig {
    fn default() -> Self {
        Self {
            phase: 0.0,
            degeneracy_tolerance: 0.01,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub source: SourceSpec,
    #[serde(default = "default_method")]
    pub method: TrainingMethod,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: String,
    #[serde(default)]
    pub schedule: TrainingSchedule,
    #[serde(default)]
    pub measurement: MeasurementConfig,
    #[serde(default)]
    pub loss: Option<LossModel>,
    #[serde(default)]
    pub assertions: Assertions,
    #[serde(default)]
    pub scaling: ScalingConfig,
    #[serde(default)]
    pub noise_sweep: NoiseSweepConfig,
    #[serde(default)]
    pub distribute: DistributeConfig,
    #[serde(default)]
    pub supermode: SupermodeConfig,
}

fn default_method() -> TrainingMethod {
    TrainingMethod::Coincidence
}

fn default_seeds() -> Vec<u64> {
    vec![1]
}

fn default_output_dir() -> String {
    "out".into()
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| anyhow::anyhow!("config error: {e}"))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule
            .validate()
            .map_err(|e| anyhow::anyhow!("schedule: {e}"))?;
        if self.seeds.is_empty() {
            bail!("seeds must contain at least one entry");
        }
        let (na, nb) = self.source.dims();
        if na == 0 || nb == 0 {
            bail!("source dimensions must be at least 1");
        }
        if let SourceSpec::Spdc { params } = &self.source {
            params
                .validate()
                .map_err(|e| anyhow::anyhow!("source: {e}"))?;
        }
        if let SourceSpec::FixedSpectrum { n, spectrum } = &self.source {
            if spectrum.is_empty() || spectrum.len() > *n {
                bail!("fixed_spectrum needs 1..=n spectrum entries");
            }
        }
        if self.measurement.counting == CountingKind::Shot
            && self.measurement.pairs_per_evaluation.is_none()
        {
            bail!("measurement.counting = \"shot\" requires pairs_per_evaluation");
        }
        if let Some(loss) = &self.loss {
            loss.validate(na, nb)
                .map_err(|e| anyhow::anyhow!("loss: {e}"))?;
        }
        if self.scenario == Scenario::Scaling {
            if self.scaling.sizes.is_empty() || self.scaling.seeds_per_size == 0 {
                bail!("scaling needs sizes and seeds_per_size");
            }
            let max_rank = self.scaling.spectrum.len();
            if self.scaling.sizes.iter().any(|n| *n < max_rank.max(2)) {
                bail!("scaling sizes must be at least the spectrum length");
            }
        }
        if self.scenario == Scenario::Distribute {
            if self.distribute.channel_dim < na.max(nb) {
                bail!("distribute.channel_dim must cover the source dimensions");
            }
        }
        if self.scenario == Scenario::NoiseSweep {
            if self.noise_sweep.budgets.is_empty() || self.noise_sweep.seeds_per_budget == 0 {
                bail!("noise_sweep needs budgets and seeds_per_budget");
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg = ExperimentConfig::from_toml(
            r#"
scenario = "decompose"
[source]
kind = "bell"
"#,
        )
        .unwrap();
        assert_eq!(cfg.scenario, Scenario::Decompose);
        assert_eq!(cfg.method, TrainingMethod::Coincidence);
        assert_eq!(cfg.seeds, vec![1]);
        assert_eq!(cfg.source.dims(), (2, 2));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = ExperimentConfig::from_toml(
            r#"
scenario = "decompose"
typo_field = 3
[source]
kind = "bell"
"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("typo_field"), "{err}");
    }

    #[test]
    fn shot_counting_requires_budget() {
        let err = ExperimentConfig::from_toml(
            r#"
scenario = "decompose"
[source]
kind = "bell"
[measurement]
counting = "shot"
"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("pairs_per_evaluation"));
    }

    #[test]
    fn spdc_source_round_trips() {
        let cfg = ExperimentConfig::from_toml(
            r#"
scenario = "spdc"
[source]
kind = "spdc"
n_bins = 32
sigma = 0.1
sigma_f = 0.09
gvm = [0.0, 0.0]
crystal_factor = 25.0
"#,
        )
        .unwrap();
        match &cfg.source {
            SourceSpec::Spdc { params } => {
                assert_eq!(params.n_bins, 32);
                assert_eq!(params.sigma_f, Some(0.09));
            }
            other => panic!("wrong source {other:?}"),
        }
    }
}
