//! Assembles the learned decomposition report and validates it against the
//! SVD oracle.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::linalg::{svd_oracle, ComplexMatrix, SvdResult, DEFAULT_RANK_EPSILON};
use crate::mesh::{network_unitary, MeshNetwork};
use crate::state::{
    crosstalk, mode_fidelity, projector_onto, schmidt_number, subspace_fidelity,
    von_neumann_entropy, EnsembleState, LogBase, DEFAULT_SCHMIDT_THRESHOLD_SQ,
};

use super::trace::TrainingTrace;
use super::{mesh_mode_vector, TrainingMethod};

/// Oracle values closer than this (relative to the leading value) are treated
/// as one degenerate group and validated by subspace projection.
const DEGENERACY_REL_TOL: f64 = 1e-8;

/// Everything the training learned, plus oracle-anchored validation numbers.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SchmidtReport {
    pub method: TrainingMethod,
    /// Learned singular values: square roots of the converged objectives,
    /// port order (descending for converged non-degenerate runs).
    pub values: Vec<f64>,
    /// Power method only: values measured on the B side.
    pub values_b: Option<Vec<f64>>,
    /// Learned mode vectors, one column per reported value.
    pub modes_a: ComplexMatrix,
    pub modes_b: ComplexMatrix,
    pub entropy_bits: f64,
    pub schmidt_number: usize,
    /// Per-mode fidelities against the SVD oracle (pure inputs only, up to
    /// the oracle rank and the trained depth); degenerate groups are scored
    /// by subspace projection.
    pub fidelities_a: Vec<f64>,
    pub fidelities_b: Vec<f64>,
    /// Off-diagonal coincidence fraction after training (exact expectation).
    pub crosstalk: f64,
    /// Leading modes pinned by training on each side; later columns of the
    /// mode matrices are unconstrained null-space directions.
    pub trained_modes_a: usize,
    pub trained_modes_b: usize,
    pub measurements_total: u64,
    pub trace: TrainingTrace,
}

pub(super) struct ReportInputs<'a> {
    pub method: TrainingMethod,
    pub input: &'a EnsembleState,
    pub mesh_a: &'a MeshNetwork,
    pub mesh_b: &'a MeshNetwork,
    /// Converged objectives (powers or coincidences) per leading port.
    pub objectives: Vec<f64>,
    pub objectives_b: Option<Vec<f64>>,
    pub trained_modes_a: usize,
    pub trained_modes_b: usize,
    pub measurements: u64,
    pub trace: TrainingTrace,
}

pub(super) fn build_report(inputs: ReportInputs<'_>) -> Result<SchmidtReport> {
    let values: Vec<f64> = inputs
        .objectives
        .iter()
        .map(|o| o.max(0.0).sqrt())
        .collect();
    let values_b = inputs
        .objectives_b
        .as_ref()
        .map(|obj| obj.iter().map(|o| o.max(0.0).sqrt()).collect());

    let m = values.len();
    let u_a = network_unitary(inputs.mesh_a);
    let u_b = network_unitary(inputs.mesh_b);
    let modes_a = mode_matrix(inputs.mesh_a, m);
    let modes_b = mode_matrix(inputs.mesh_b, m);

    let (fidelities_a, fidelities_b) = if inputs.input.is_pure() {
        let g = inputs.input.components()[0].1.matrix();
        let svd = svd_oracle(g, DEFAULT_RANK_EPSILON)?;
        let fa = oracle_fidelities(
            &modes_a,
            &svd,
            OracleSide::Left,
            inputs.trained_modes_a.min(m),
        )?;
        let fb = oracle_fidelities(
            &modes_b,
            &svd,
            OracleSide::Right,
            inputs.trained_modes_b.min(m),
        )?;
        (fa, fb)
    } else {
        (Vec::new(), Vec::new())
    };

    Ok(SchmidtReport {
        method: inputs.method,
        entropy_bits: von_neumann_entropy(&values, LogBase::Two),
        schmidt_number: schmidt_number(&values, DEFAULT_SCHMIDT_THRESHOLD_SQ),
        crosstalk: crosstalk(inputs.input, &u_a, &u_b)?,
        values,
        values_b,
        modes_a,
        modes_b,
        fidelities_a,
        fidelities_b,
        trained_modes_a: inputs.trained_modes_a,
        trained_modes_b: inputs.trained_modes_b,
        measurements_total: inputs.measurements,
        trace: inputs.trace,
    })
}

fn mode_matrix(mesh: &MeshNetwork, m: usize) -> ComplexMatrix {
    let n = mesh.dimension();
    let mut out = ComplexMatrix::zeros(n, m);
    for k in 0..m.min(n) {
        out.set_column(k, &mesh_mode_vector(mesh, k));
    }
    out
}

enum OracleSide {
    Left,
    Right,
}

/// Reference mode `k`: column `k` of U for side A, conjugated column `k` of V
/// for side B (the Schmidt-mode coordinates in the input basis).
fn oracle_mode(svd: &SvdResult, side: &OracleSide, k: usize) -> Vec<Complex64> {
    match side {
        OracleSide::Left => svd.left.column(k),
        OracleSide::Right => svd.right.column(k).iter().map(|z| z.conj()).collect(),
    }
}

fn oracle_fidelities(
    modes: &ComplexMatrix,
    svd: &SvdResult,
    side: OracleSide,
    compare: usize,
) -> Result<Vec<f64>> {
    let upto = compare.min(svd.rank());
    let mut fidelities = Vec::with_capacity(upto);
    let mut k = 0;
    while k < upto {
        // Extend over the oracle's degenerate group containing k.
        let mut end = k + 1;
        while end < svd.rank()
            && (svd.values[end - 1] - svd.values[end]).abs() < DEGENERACY_REL_TOL * svd.values[0]
        {
            end += 1;
        }
        if end - k == 1 {
            fidelities.push(mode_fidelity(
                &modes.column(k),
                &oracle_mode(svd, &side, k),
            )?);
        } else {
            let refs: Vec<Vec<Complex64>> =
                (k..end).map(|i| oracle_mode(svd, &side, i)).collect();
            let projector = projector_onto(&refs);
            for i in k..end.min(upto) {
                let learned = vec![modes.column(i)];
                fidelities.push(subspace_fidelity(&learned, &projector)?);
            }
        }
        k = end;
    }
    Ok(fidelities)
}
