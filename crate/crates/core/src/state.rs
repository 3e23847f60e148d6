//! Bipartite state matrices and the observables the networks measure.
//!
//! A pure state over two subsystems of dimensions `N_A x N_B` is stored as its
//! amplitude matrix `G` with unit Frobenius norm; after the two networks act,
//! the amplitudes become `G' = U_A * G * U_B^T`, powers are row/column sums of
//! `|G'|^2`, and coincidences are single entries of `|G'|^2`. Mixed inputs are
//! explicit ensembles of pure states: every observable here is linear in the
//! density operator, so the weighted sum over components is exact.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{inner, matmul, ComplexMatrix};

pub const STATE_NORM_TOLERANCE: f64 = 1e-12;

/// Which subsystem an observable refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    A,
    B,
}

/// Amplitude matrix of a normalized pure bipartite state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateMatrix {
    g: ComplexMatrix,
}

impl StateMatrix {
    /// Wraps a matrix that is already normalized to unit Frobenius norm.
    pub fn new(g: ComplexMatrix) -> Result<Self> {
        if !g.is_finite() {
            return Err(Error::NonFinite("state matrix"));
        }
        let norm = g.frobenius_norm();
        if (norm - 1.0).abs() > STATE_NORM_TOLERANCE {
            return Err(Error::InvalidParameter(format!(
                "state matrix norm {norm} is not 1"
            )));
        }
        Ok(Self { g })
    }

    /// Normalizes the matrix to unit Frobenius norm.
    pub fn normalized(g: ComplexMatrix) -> Result<Self> {
        if !g.is_finite() {
            return Err(Error::NonFinite("state matrix"));
        }
        let norm = g.frobenius_norm();
        if norm < 1e-300 {
            return Err(Error::ZeroVector);
        }
        Ok(Self {
            g: g.scaled(Complex64::new(1.0 / norm, 0.0)),
        })
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.g
    }

    pub fn dim_a(&self) -> usize {
        self.g.rows()
    }

    pub fn dim_b(&self) -> usize {
        self.g.cols()
    }
}

/// Statistical mixture of pure states with positive weights summing to one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleState {
    components: Vec<(f64, StateMatrix)>,
}

impl EnsembleState {
    pub fn pure(state: StateMatrix) -> Self {
        Self {
            components: vec![(1.0, state)],
        }
    }

    pub fn new(components: Vec<(f64, StateMatrix)>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidParameter("ensemble needs components".into()));
        }
        let (na, nb) = (components[0].1.dim_a(), components[0].1.dim_b());
        let mut total = 0.0;
        for (w, s) in &components {
            if *w <= 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "ensemble weight {w} must be positive"
                )));
            }
            if s.dim_a() != na || s.dim_b() != nb {
                return Err(Error::DimensionMismatch {
                    op: "ensemble",
                    lhs_rows: na,
                    lhs_cols: nb,
                    rhs_rows: s.dim_a(),
                    rhs_cols: s.dim_b(),
                });
            }
            total += w;
        }
        if (total - 1.0).abs() > STATE_NORM_TOLERANCE {
            return Err(Error::InvalidParameter(format!(
                "ensemble weights sum to {total}, expected 1"
            )));
        }
        Ok(Self { components })
    }

    pub fn components(&self) -> &[(f64, StateMatrix)] {
        &self.components
    }

    pub fn is_pure(&self) -> bool {
        self.components.len() == 1
    }

    pub fn dim_a(&self) -> usize {
        self.components[0].1.dim_a()
    }

    pub fn dim_b(&self) -> usize {
        self.components[0].1.dim_b()
    }
}

impl From<StateMatrix> for EnsembleState {
    fn from(s: StateMatrix) -> Self {
        Self::pure(s)
    }
}

/// Output amplitudes `G' = U_A * G * U_B^T`; entry `(j, k)` is the amplitude
/// on port pair `(j, k)`.
pub fn transformed_amplitudes(
    state: &StateMatrix,
    u_a: &ComplexMatrix,
    u_b: &ComplexMatrix,
) -> Result<ComplexMatrix> {
    if u_a.cols() != state.dim_a() || u_b.cols() != state.dim_b() {
        return Err(Error::DimensionMismatch {
            op: "transformed_amplitudes",
            lhs_rows: u_a.cols(),
            lhs_cols: u_b.cols(),
            rhs_rows: state.dim_a(),
            rhs_cols: state.dim_b(),
        });
    }
    matmul(&matmul(u_a, state.matrix())?, &u_b.transpose())
}

/// Average power on one output port after both networks.
pub fn output_power(
    input: &EnsembleState,
    u_a: &ComplexMatrix,
    u_b: &ComplexMatrix,
    side: Side,
    port: usize,
) -> Result<f64> {
    let dim = match side {
        Side::A => input.dim_a(),
        Side::B => input.dim_b(),
    };
    if port >= dim {
        return Err(Error::PortOutOfRange { port, dim });
    }
    let mut total = 0.0;
    for (w, s) in input.components() {
        let gp = transformed_amplitudes(s, u_a, u_b)?;
        let p: f64 = match side {
            Side::A => gp.row(port).iter().map(|z| z.norm_sqr()).sum(),
            Side::B => (0..gp.rows()).map(|j| gp[(j, port)].norm_sqr()).sum(),
        };
        total += w * p;
    }
    Ok(total)
}

/// Coincidence probability between output port `j` of A and `k` of B.
pub fn coincidence(
    input: &EnsembleState,
    u_a: &ComplexMatrix,
    u_b: &ComplexMatrix,
    j: usize,
    k: usize,
) -> Result<f64> {
    if j >= input.dim_a() {
        return Err(Error::PortOutOfRange {
            port: j,
            dim: input.dim_a(),
        });
    }
    if k >= input.dim_b() {
        return Err(Error::PortOutOfRange {
            port: k,
            dim: input.dim_b(),
        });
    }
    let mut total = 0.0;
    for (w, s) in input.components() {
        let gp = transformed_amplitudes(s, u_a, u_b)?;
        total += w * gp[(j, k)].norm_sqr();
    }
    Ok(total)
}

/// Full `N_A x N_B` grid of coincidence probabilities, row-major.
pub fn coincidence_matrix(
    input: &EnsembleState,
    u_a: &ComplexMatrix,
    u_b: &ComplexMatrix,
) -> Result<Vec<Vec<f64>>> {
    let (na, nb) = (input.dim_a(), input.dim_b());
    let mut grid = vec![vec![0.0; nb]; na];
    for (w, s) in input.components() {
        let gp = transformed_amplitudes(s, u_a, u_b)?;
        for (j, row) in grid.iter_mut().enumerate() {
            for (k, cell) in row.iter_mut().enumerate() {
                *cell += w * gp[(j, k)].norm_sqr();
            }
        }
    }
    Ok(grid)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogBase {
    /// Entropy in bits.
    Two,
    /// Entropy in nats.
    E,
}

/// Von Neumann entropy `-sum lambda^2 log(lambda^2)` with `0 log 0 := 0`.
pub fn von_neumann_entropy(values: &[f64], base: LogBase) -> f64 {
    let s: f64 = values
        .iter()
        .map(|v| {
            let p = v * v;
            if p > 0.0 {
                -p * p.ln()
            } else {
                0.0
            }
        })
        .sum();
    match base {
        LogBase::Two => s / std::f64::consts::LN_2,
        LogBase::E => s,
    }
}

/// Number of values whose squared weight exceeds `threshold_sq` of the total.
pub fn schmidt_number(values: &[f64], threshold_sq: f64) -> usize {
    values.iter().filter(|v| *v * *v > threshold_sq).count()
}

pub const DEFAULT_SCHMIDT_THRESHOLD_SQ: f64 = 1e-6;

/// Squared overlap `|<reference|learned>|^2`; invariant under global phase.
pub fn mode_fidelity(learned: &[Complex64], reference: &[Complex64]) -> Result<f64> {
    if learned.len() != reference.len() {
        return Err(Error::LengthMismatch {
            left: learned.len(),
            right: reference.len(),
        });
    }
    Ok(inner(reference, learned).norm_sqr())
}

/// Projector `sum_k |c_k><c_k|` onto the span of orthonormal columns.
pub fn projector_onto(columns: &[Vec<Complex64>]) -> ComplexMatrix {
    let n = columns.first().map_or(0, |c| c.len());
    let mut p = ComplexMatrix::zeros(n, n);
    for col in columns {
        for i in 0..n {
            for j in 0..n {
                p[(i, j)] += col[i] * col[j].conj();
            }
        }
    }
    p
}

/// Mean of `<v|P|v>` over the learned vectors; 1 when they span the reference
/// subspace, 0 when orthogonal to it.
pub fn subspace_fidelity(learned: &[Vec<Complex64>], projector: &ComplexMatrix) -> Result<f64> {
    if learned.is_empty() {
        return Err(Error::InvalidParameter("no learned vectors".into()));
    }
    let mut total = 0.0;
    for v in learned {
        let pv = projector.apply(v)?;
        total += inner(v, &pv).re;
    }
    Ok(total / learned.len() as f64)
}

/// Fraction of coincidence weight off the diagonal of the leading
/// `min(N_A, N_B)` square of ports.
pub fn crosstalk(input: &EnsembleState, u_a: &ComplexMatrix, u_b: &ComplexMatrix) -> Result<f64> {
    let grid = coincidence_matrix(input, u_a, u_b)?;
    let m = input.dim_a().min(input.dim_b());
    let mut diag = 0.0;
    let mut total = 0.0;
    for (j, row) in grid.iter().take(m).enumerate() {
        for (k, &c) in row.iter().take(m).enumerate() {
            total += c;
            if j == k {
                diag += c;
            }
        }
    }
    if total <= 0.0 {
        return Err(Error::ZeroCoincidenceTotal);
    }
    Ok((total - diag) / total)
}
