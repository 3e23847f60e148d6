//! Run reports: JSON assembly, finiteness validation, atomic writes, and the
//! report diff used by paired-run comparisons.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

use schmidt_mesh_core::linalg::ComplexMatrix;
use schmidt_mesh_core::mesh::MeshNetwork;
use schmidt_mesh_core::protocols::DistributionReport;
use schmidt_mesh_core::state::mode_fidelity;
use schmidt_mesh_core::trainer::{LayerSummary, SchmidtReport, TrainingMethod};

use crate::config::ExperimentConfig;

/// Learned-decomposition block embedded in a report. The per-iteration trace
/// lives in `trace.csv`; only per-layer summaries are echoed here.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SchmidtBlock {
    pub method: TrainingMethod,
    pub values: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub values_b: Option<Vec<f64>>,
    pub modes_a: ComplexMatrix,
    pub modes_b: ComplexMatrix,
    pub entropy_bits: f64,
    pub schmidt_number: usize,
    pub fidelities_a: Vec<f64>,
    pub fidelities_b: Vec<f64>,
    pub crosstalk: f64,
    pub trained_modes_a: usize,
    pub trained_modes_b: usize,
    pub measurements_total: u64,
    pub layers: Vec<LayerSummary>,
}

impl From<&SchmidtReport> for SchmidtBlock {
    fn from(r: &SchmidtReport) -> Self {
        Self {
            method: r.method,
            values: r.values.clone(),
            values_b: r.values_b.clone(),
            modes_a: r.modes_a.clone(),
            modes_b: r.modes_b.clone(),
            entropy_bits: r.entropy_bits,
            schmidt_number: r.schmidt_number,
            fidelities_a: r.fidelities_a.clone(),
            fidelities_b: r.fidelities_b.clone(),
            crosstalk: r.crosstalk,
            trained_modes_a: r.trained_modes_a,
            trained_modes_b: r.trained_modes_b,
            measurements_total: r.measurements_total,
            layers: r.trace.layers.clone(),
        }
    }
}

/// Validation numbers against the independent SVD oracle of the (possibly
/// loss-distorted) input state.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OracleBlock {
    pub values_oracle: Vec<f64>,
    /// |learned - oracle| per mode over the common range.
    pub value_errors: Vec<f64>,
    pub entropy_oracle_bits: f64,
    /// Relative when the oracle entropy exceeds 1e-9 bits, absolute below.
    pub entropy_error: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AssertionResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScalingRow {
    pub dimension: usize,
    pub seed: u64,
    pub measurements: u64,
    pub iterations: usize,
    pub reached: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScalingBlock {
    pub rows: Vec<ScalingRow>,
    pub medians: Vec<(usize, f64)>,
    pub fitted_exponent: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NoiseSweepRow {
    pub budget: u64,
    pub seed: u64,
    pub entropy_bits: f64,
    pub entropy_error_rel: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NoiseSweepBlock {
    pub rows: Vec<NoiseSweepRow>,
    pub medians: Vec<(u64, f64)>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SupermodeBlock {
    pub entropy_bits: f64,
    pub phase0_phasepi_overlap: f64,
    pub coincidence_00: f64,
    pub coincidence_11: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunReport {
    /// Configuration echo with resolved defaults.
    pub config: ExperimentConfig,
    pub seed: u64,
    pub source_dims: (usize, usize),
    /// Pair survival probability under input losses (1 when lossless).
    pub input_survival: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schmidt: Option<SchmidtBlock>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleBlock>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub meshes: Option<(MeshNetwork, MeshNetwork)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub distribution: Option<DistributionReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scaling: Option<ScalingBlock>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_sweep: Option<NoiseSweepBlock>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub supermode: Option<SupermodeBlock>,
    pub assertions: Vec<AssertionResult>,
    pub measurements_total: u64,
    pub artifacts: Vec<String>,
    /// Excluded from determinism comparisons.
    pub wall_clock_seconds: f64,
}

impl RunReport {
    pub fn all_assertions_pass(&self) -> bool {
        self.assertions.iter().all(|a| a.passed)
    }

    /// Every numeric in the report must be finite before it is written.
    pub fn validate_finite(&self) -> Result<()> {
        let mut scalars = vec![self.input_survival, self.wall_clock_seconds];
        if let Some(s) = &self.schmidt {
            scalars.extend([s.entropy_bits, s.crosstalk]);
            scalars.extend(s.values.iter().copied());
            if let Some(vb) = &s.values_b {
                scalars.extend(vb.iter().copied());
            }
            scalars.extend(s.fidelities_a.iter().copied());
            scalars.extend(s.fidelities_b.iter().copied());
            scalars.extend(s.layers.iter().map(|l| l.final_objective));
            for m in [&s.modes_a, &s.modes_b] {
                scalars.extend(m.entries().iter().flat_map(|z| [z.re, z.im]));
            }
        }
        if let Some(o) = &self.oracle {
            scalars.extend([o.entropy_oracle_bits, o.entropy_error]);
            scalars.extend(o.values_oracle.iter().copied());
            scalars.extend(o.value_errors.iter().copied());
        }
        if let Some(d) = &self.distribution {
            scalars.extend([d.diagonal_sum, d.crosstalk, d.entropy_bits]);
            scalars.extend(d.values_learned.iter().copied());
            scalars.extend(d.values_oracle.iter().copied());
        }
        if let Some(s) = &self.scaling {
            scalars.push(s.fitted_exponent);
            scalars.extend(s.medians.iter().map(|(_, m)| *m));
        }
        if let Some(n) = &self.noise_sweep {
            scalars.extend(n.rows.iter().flat_map(|r| [r.entropy_bits, r.entropy_error_rel]));
            scalars.extend(n.medians.iter().map(|(_, m)| *m));
        }
        if let Some(s) = &self.supermode {
            scalars.extend([
                s.entropy_bits,
                s.phase0_phasepi_overlap,
                s.coincidence_00,
                s.coincidence_11,
            ]);
        }
        if let Some(bad) = scalars.iter().find(|v| !v.is_finite()) {
            bail!("non-finite numeric {bad} in report");
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        self.validate_finite()?;
        let value = serde_json::to_value(self).context("serializing report")?;
        ensure_finite(&value, "report")?;
        Ok(serde_json::to_string_pretty(&value)? + "\n")
    }

    /// Serialized form with the wall clock removed, for byte comparisons.
    pub fn deterministic_json(&self) -> Result<String> {
        let mut value = serde_json::to_value(self).context("serializing report")?;
        if let Some(obj) = value.as_object_mut() {
            obj.remove("wall_clock_seconds");
        }
        Ok(serde_json::to_string_pretty(&value)? + "\n")
    }
}

/// Structural backstop for the in-memory check: serde_json writes non-finite
/// floats as `null`, which inside a numeric array can only mean a NaN slipped
/// through. Nulls in object position are legitimate `None`s.
pub fn ensure_finite(value: &serde_json::Value, path: &str) -> Result<()> {
    match value {
        serde_json::Value::Number(n) => {
            if n.as_f64().map_or(false, |f| !f.is_finite()) {
                bail!("non-finite number at {path}");
            }
            Ok(())
        }
        serde_json::Value::Array(items) => {
            let numeric = items.iter().any(|i| i.is_number());
            for (i, item) in items.iter().enumerate() {
                if numeric && item.is_null() {
                    bail!("null inside numeric array at {path}[{i}] (non-finite float?)");
                }
                ensure_finite(item, &format!("{path}[{i}]"))?;
            }
            Ok(())
        }
        serde_json::Value::Object(map) => {
            for (k, v) in map {
                ensure_finite(v, &format!("{path}.{k}"))?;
            }
            Ok(())
        }
        _ => Ok(()),
    }
}

/// Writes atomically: temp file in the same directory, then rename.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name().and_then(|n| n.to_str()).unwrap_or("out")
    ));
    std::fs::write(&tmp, contents)
        .with_context(|| format!("writing {}", tmp.display()))?;
    std::fs::rename(&tmp, path)
        .with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

pub fn load_report(path: &Path) -> Result<RunReport> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading report {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing report {}", path.display()))
}

/// Differences between two runs of the same source spec.
#[derive(Clone, Debug, Serialize)]
pub struct CompareSummary {
    pub value_deltas: Vec<f64>,
    pub max_value_delta: f64,
    pub max_calibrated_delta: Option<f64>,
    /// Largest circular difference between trained phases, when both reports
    /// embed meshes of identical layout.
    pub max_phase_delta: Option<f64>,
    /// `|<mode_i(a)|mode_j(b)>|^2` for the A-side learned modes.
    pub fidelity_cross_table_a: Vec<Vec<f64>>,
    pub entropy_delta: f64,
}

pub fn compare_reports(a: &RunReport, b: &RunReport) -> Result<CompareSummary> {
    if a.source_dims != b.source_dims {
        bail!(
            "incompatible dimensions: {:?} vs {:?}",
            a.source_dims,
            b.source_dims
        );
    }
    let sa = a
        .schmidt
        .as_ref()
        .context("first report has no decomposition block")?;
    let sb = b
        .schmidt
        .as_ref()
        .context("second report has no decomposition block")?;

    let value_deltas: Vec<f64> = sa
        .values
        .iter()
        .zip(&sb.values)
        .map(|(x, y)| (x - y).abs())
        .collect();
    let max_value_delta = value_deltas.iter().fold(0.0f64, |m, d| m.max(*d));

    let max_calibrated_delta = match (calibrated(a), calibrated(b)) {
        (Some(ca), Some(cb)) => Some(
            ca.iter()
                .zip(&cb)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0f64, f64::max),
        ),
        _ => None,
    };

    let max_phase_delta = match (&a.meshes, &b.meshes) {
        (Some((a1, a2)), Some((b1, b2))) => {
            let pa: Vec<f64> = mesh_phases(a1).into_iter().chain(mesh_phases(a2)).collect();
            let pb: Vec<f64> = mesh_phases(b1).into_iter().chain(mesh_phases(b2)).collect();
            if pa.len() == pb.len() {
                Some(
                    pa.iter()
                        .zip(&pb)
                        .map(|(x, y)| {
                            let d = (x - y).abs();
                            d.min(std::f64::consts::TAU - d)
                        })
                        .fold(0.0f64, f64::max),
                )
            } else {
                None
            }
        }
        _ => None,
    };

    let m = sa.values.len().min(sb.values.len());
    let mut cross = vec![vec![0.0; m]; m];
    for (i, row) in cross.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            *cell = mode_fidelity(&sb.modes_a.column(j), &sa.modes_a.column(i))
                .map_err(|e| anyhow::anyhow!("{e}"))?;
        }
    }

    Ok(CompareSummary {
        value_deltas,
        max_value_delta,
        max_calibrated_delta,
        max_phase_delta,
        fidelity_cross_table_a: cross,
        entropy_delta: (sa.entropy_bits - sb.entropy_bits).abs(),
    })
}

/// Loss-calibrated values of a run, when it declared output losses.
fn calibrated(report: &RunReport) -> Option<Vec<f64>> {
    let schmidt = report.schmidt.as_ref()?;
    match &report.config.loss {
        Some(loss) => Some(schmidt_mesh_core::imperfections::calibrate_values(
            &schmidt.values,
            loss,
            matches!(schmidt.method, TrainingMethod::Coincidence),
        )),
        None => Some(schmidt.values.clone()),
    }
}

fn mesh_phases(mesh: &MeshNetwork) -> Vec<f64> {
    mesh.layers().iter().flat_map(|l| l.params()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finite_validation_catches_nan() {
        // serde_json turns NaN into null; inside a numeric array that is an
        // error, while a bare None field is fine.
        let bad = serde_json::json!({"x": [1.0, f64::NAN]});
        assert!(ensure_finite(&bad, "root").is_err());
        let good = serde_json::json!({"x": [1.0, 2.0], "s": "ok", "opt": null});
        assert!(ensure_finite(&good, "root").is_ok());
    }
}
