//! Input state generators: seeded random matrices, SPDC joint spectral
//! amplitudes, engineered degenerate states, and Bell states.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{ginibre, haar_unitary, matmul, ComplexMatrix};
use crate::state::StateMatrix;

/// Spectral model of a down-conversion photon pair on a normalized frequency
/// grid. Frequencies are detunings in `[-1, 1]`, `n_bins` samples per side.
///
/// The amplitude on bin pair `(j, k)` is
/// `exp(-(nu_s + nu_i)^2 / 2 sigma^2)` (pump envelope) times
/// `sinc(L (k_s nu_s + k_i nu_i) / 2)` (phase matching with linear
/// group-velocity slopes) times Gaussian filters of width `sigma_f` on each
/// arm, normalized to a unit state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpdcParams {
    /// Frequency bins per side.
    pub n_bins: usize,
    /// Pump bandwidth in normalized frequency units.
    pub sigma: f64,
    /// Spectral filter width on signal and idler; `None` disables the filter.
    pub sigma_f: Option<f64>,
    /// Phase-matching slope coefficients `(k_s, k_i)`; `(0, 0)` disables the
    /// sinc factor.
    pub gvm: (f64, f64),
    /// Dimensionless phase-matching length scale multiplying the slopes.
    pub crystal_factor: f64,
}

impl Default for SpdcParams {
    fn default() -> Self {
        Self {
            n_bins: 32,
            sigma: 0.1,
            sigma_f: None,
            gvm: (0.0, 0.0),
            crystal_factor: 25.0,
        }
    }
}

impl SpdcParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_bins < 2 {
            return Err(Error::InvalidParameter("n_bins must be >= 2".into()));
        }
        if !(self.sigma > 0.0) {
            return Err(Error::InvalidParameter("sigma must be positive".into()));
        }
        if let Some(sf) = self.sigma_f {
            if !(sf > 0.0) {
                return Err(Error::InvalidParameter("sigma_f must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Complex Gaussian (Ginibre) state matrix, normalized.
pub fn random_state(n_a: usize, n_b: usize, rng: &mut impl Rng) -> Result<StateMatrix> {
    if n_a == 0 || n_b == 0 {
        return Err(Error::InvalidParameter("state dimensions must be >= 1".into()));
    }
    StateMatrix::normalized(ginibre(n_a, n_b, rng))
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// Discretized joint spectral amplitude as a normalized state matrix; rows
/// follow the signal detuning, columns the idler detuning.
pub fn spdc_jsa(params: &SpdcParams) -> Result<StateMatrix> {
    params.validate()?;
    let n = params.n_bins;
    let nu: Vec<f64> = (0..n)
        .map(|j| -1.0 + 2.0 * j as f64 / (n - 1) as f64)
        .collect();
    let (ks, ki) = params.gvm;
    let l = params.crystal_factor;
    let g = ComplexMatrix::from_fn(n, n, |j, k| {
        let (ns, ni) = (nu[j], nu[k]);
        let pump = (-(ns + ni).powi(2) / (2.0 * params.sigma * params.sigma)).exp();
        let matching = sinc(l * (ks * ns + ki * ni) / 2.0);
        let filter = match params.sigma_f {
            Some(sf) => ((-ns * ns - ni * ni) / (2.0 * sf * sf)).exp(),
            None => 1.0,
        };
        Complex64::new(pump * matching * filter, 0.0)
    });
    StateMatrix::normalized(g)
}

/// State with the two leading Schmidt values exactly equal, followed by a
/// geometrically decaying tail, in Haar-random bases.
pub fn degenerate_state(n: usize, rng: &mut impl Rng) -> Result<StateMatrix> {
    if n < 2 {
        return Err(Error::InvalidParameter(
            "degenerate state needs n >= 2".into(),
        ));
    }
    let mut spectrum = vec![1.0, 1.0];
    for i in 2..n {
        spectrum.push(0.3f64.powi(i as i32 - 1));
    }
    fixed_spectrum_state(n, &spectrum, rng)
}

/// Rotates `diag(spectrum)` (zero-padded to `n`) by independent Haar
/// unitaries on each side; the singular values are the normalized spectrum.
pub fn fixed_spectrum_state(n: usize, spectrum: &[f64], rng: &mut impl Rng) -> Result<StateMatrix> {
    if spectrum.is_empty() || spectrum.len() > n {
        return Err(Error::InvalidParameter(format!(
            "spectrum length {} must be in 1..={n}",
            spectrum.len()
        )));
    }
    if spectrum.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::InvalidParameter("spectrum must be non-negative".into()));
    }
    let w_a = haar_unitary(n, rng);
    let w_b = haar_unitary(n, rng);
    let mut d = ComplexMatrix::zeros(n, n);
    for (i, &v) in spectrum.iter().enumerate() {
        d[(i, i)] = Complex64::new(v, 0.0);
    }
    let g = matmul(&matmul(&w_a, &d)?, &w_b.adjoint())?;
    StateMatrix::normalized(g)
}

/// Two-mode maximally entangled state `(1/sqrt(2)) I_2`.
pub fn bell_state() -> StateMatrix {
    StateMatrix::normalized(ComplexMatrix::identity(2)).expect("identity normalizes")
}
