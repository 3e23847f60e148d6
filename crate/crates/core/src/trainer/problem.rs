//! Per-layer objective evaluation and analytic gradients.
//!
//! During layer-k training only that layer's phases move, so everything else
//! folds into constants once per layer: for power objectives a Hermitian
//! matrix `M = F R F^dagger` (R the relevant reduced density matrix, F the
//! frozen prefix unitary), for coincidence objectives the folded amplitudes
//! `F_A G F_B^T` per ensemble component. The active layer then only needs its
//! output row, which propagates through the node list in O(nodes) per
//! evaluation. Gradients use the fact that each phase appears in exactly one
//! 2x2 factor: replace that factor by its parameter derivative and contract.

use num_complex::Complex64;

use crate::error::Result;
use crate::linalg::{matmul, ComplexMatrix};
use crate::mesh::{mzi_unitary, mzi_unitary_dphi, mzi_unitary_dtheta, SelfConfiguringLayer};
use crate::state::EnsembleState;

/// A layer-local smooth objective over phase parameters.
pub(crate) trait LayerObjective {
    fn param_count(&self) -> usize;
    fn params(&self) -> Vec<f64>;
    fn set_params(&mut self, params: &[f64]);
    /// Exact expectation value of the objective (no loss scale, no noise).
    fn true_value(&self) -> f64;
    /// Exact value and gradient over the parameter vector.
    fn true_value_and_grad(&self) -> (f64, Vec<f64>);
    /// Number of leading parameters belonging to network A (for alternating
    /// block updates); the rest belong to network B.
    fn block_split(&self) -> usize;
    /// Writes the tuned layer(s) back into the target meshes.
    fn store(self: Box<Self>, into: StoreTarget<'_>);
}

pub(crate) enum StoreTarget<'a> {
    One(&'a mut SelfConfiguringLayer),
    Pair(&'a mut SelfConfiguringLayer, &'a mut SelfConfiguringLayer),
}

/// Output row of the active layer: `e_k^T E(t_n) ... E(t_1)`.
fn layer_output_row(layer: &SelfConfiguringLayer, dim: usize) -> Vec<Complex64> {
    let mut bra = vec![Complex64::new(0.0, 0.0); dim];
    bra[layer.output_port] = Complex64::new(1.0, 0.0);
    for node in layer.nodes.iter().rev() {
        let t = mzi_unitary(node);
        bra_absorb(&mut bra, node.top_port, node.bottom_port, &t);
    }
    bra
}

#[inline]
fn bra_absorb(bra: &mut [Complex64], p: usize, q: usize, t: &ComplexMatrix) {
    let (bp, bq) = (bra[p], bra[q]);
    bra[p] = bp * t[(0, 0)] + bq * t[(1, 0)];
    bra[q] = bp * t[(0, 1)] + bq * t[(1, 1)];
}

#[inline]
fn ket_absorb(ket: &mut [Complex64], p: usize, q: usize, t: &ComplexMatrix) {
    let (kp, kq) = (ket[p], ket[q]);
    ket[p] = t[(0, 0)] * kp + t[(0, 1)] * kq;
    ket[q] = t[(1, 0)] * kp + t[(1, 1)] * kq;
}

#[inline]
fn sandwich(bra: &[Complex64], d: &ComplexMatrix, ket: &[Complex64], p: usize, q: usize) -> Complex64 {
    bra[p] * (d[(0, 0)] * ket[p] + d[(0, 1)] * ket[q])
        + bra[q] * (d[(1, 0)] * ket[p] + d[(1, 1)] * ket[q])
}

/// Bras before each node is absorbed, walking the product from the output
/// side; `bras[m]` pairs with the ket that has absorbed nodes `0..m`.
fn gradient_bras(layer: &SelfConfiguringLayer, dim: usize) -> (Vec<Vec<Complex64>>, Vec<Complex64>) {
    let n = layer.nodes.len();
    let mut bras = vec![Vec::new(); n];
    let mut bra = vec![Complex64::new(0.0, 0.0); dim];
    bra[layer.output_port] = Complex64::new(1.0, 0.0);
    for m in (0..n).rev() {
        bras[m] = bra.clone();
        let node = &layer.nodes[m];
        let t = mzi_unitary(node);
        bra_absorb(&mut bra, node.top_port, node.bottom_port, &t);
    }
    (bras, bra)
}

/// Gradient of `2 Re[(d rho) . y]` over the layer's `[theta, phi]` pairs,
/// given the combined adjoint vector `y`.
fn row_gradient(layer: &SelfConfiguringLayer, bras: &[Vec<Complex64>], y: &[Complex64]) -> Vec<f64> {
    let mut grad = Vec::with_capacity(2 * layer.nodes.len());
    let mut ket = y.to_vec();
    for (m, node) in layer.nodes.iter().enumerate() {
        let (p, q) = (node.top_port, node.bottom_port);
        let dt = mzi_unitary_dtheta(node);
        let dp = mzi_unitary_dphi(node);
        grad.push(2.0 * sandwich(&bras[m], &dt, &ket, p, q).re);
        grad.push(2.0 * sandwich(&bras[m], &dp, &ket, p, q).re);
        let t = mzi_unitary(node);
        ket_absorb(&mut ket, p, q, &t);
    }
    grad
}

/// Power objective `P_k = rho M conj(rho)^T` for one side's layer `k`.
pub(crate) struct PowerProblem {
    dim: usize,
    layer: SelfConfiguringLayer,
    /// Prefix-folded Hermitian reduced density matrix.
    m: ComplexMatrix,
}

impl PowerProblem {
    /// `reduced` is `sum_i p_i G_i G_i^dagger` for side A or
    /// `sum_i p_i (G_i^dagger G_i)^T` for side B; `prefix` the unitary of the
    /// frozen layers `0..k`.
    pub fn new(
        layer: SelfConfiguringLayer,
        reduced: &ComplexMatrix,
        prefix: &ComplexMatrix,
    ) -> Result<Self> {
        let m = matmul(&matmul(prefix, reduced)?, &prefix.adjoint())?;
        Ok(Self {
            dim: m.rows(),
            layer,
            m,
        })
    }

    /// Power left in the not-yet-extracted block: `sum_{j >= k} M_jj`.
    pub fn residual(&self) -> f64 {
        (self.layer.output_port..self.dim)
            .map(|j| self.m[(j, j)].re)
            .sum()
    }

    fn adjoint_vector(&self, rho: &[Complex64]) -> Vec<Complex64> {
        (0..self.dim)
            .map(|i| {
                (0..self.dim)
                    .map(|j| self.m[(i, j)] * rho[j].conj())
                    .sum::<Complex64>()
            })
            .collect()
    }
}

impl LayerObjective for PowerProblem {
    fn param_count(&self) -> usize {
        self.layer.param_count()
    }

    fn params(&self) -> Vec<f64> {
        self.layer.params()
    }

    fn set_params(&mut self, params: &[f64]) {
        self.layer.set_params(params);
    }

    fn true_value(&self) -> f64 {
        let rho = layer_output_row(&self.layer, self.dim);
        let y = self.adjoint_vector(&rho);
        rho.iter().zip(&y).map(|(r, yv)| r * yv).sum::<Complex64>().re
    }

    fn true_value_and_grad(&self) -> (f64, Vec<f64>) {
        let (bras, rho) = gradient_bras(&self.layer, self.dim);
        let y = self.adjoint_vector(&rho);
        let value = rho.iter().zip(&y).map(|(r, yv)| r * yv).sum::<Complex64>().re;
        (value, row_gradient(&self.layer, &bras, &y))
    }

    fn block_split(&self) -> usize {
        self.param_count()
    }

    fn store(self: Box<Self>, into: StoreTarget<'_>) {
        match into {
            StoreTarget::One(slot) => *slot = self.layer,
            StoreTarget::Pair(..) => unreachable!("power problems train one mesh"),
        }
    }
}

/// Coincidence objective `C_kk = sum_i p_i |rho_A Gt_i rho_B^T|^2` over the
/// joint phases of layer `k` in both meshes.
pub(crate) struct CoincidenceProblem {
    dim_a: usize,
    dim_b: usize,
    layer_a: SelfConfiguringLayer,
    layer_b: SelfConfiguringLayer,
    /// Per-component `(weight, F_A G F_B^T)`.
    folded: Vec<(f64, ComplexMatrix)>,
}

impl CoincidenceProblem {
    pub fn new(
        layer_a: SelfConfiguringLayer,
        layer_b: SelfConfiguringLayer,
        input: &EnsembleState,
        prefix_a: &ComplexMatrix,
        prefix_b: &ComplexMatrix,
    ) -> Result<Self> {
        let mut folded = Vec::with_capacity(input.components().len());
        for (w, s) in input.components() {
            let gt = matmul(&matmul(prefix_a, s.matrix())?, &prefix_b.transpose())?;
            folded.push((*w, gt));
        }
        Ok(Self {
            dim_a: prefix_a.rows(),
            dim_b: prefix_b.rows(),
            layer_a,
            layer_b,
            folded,
        })
    }

    /// Pair probability left in the untouched corner block.
    pub fn residual(&self) -> f64 {
        let (ka, kb) = (self.layer_a.output_port, self.layer_b.output_port);
        self.folded
            .iter()
            .map(|(w, gt)| {
                let mut sum = 0.0;
                for j in ka..self.dim_a {
                    for l in kb..self.dim_b {
                        sum += gt[(j, l)].norm_sqr();
                    }
                }
                w * sum
            })
            .sum()
    }

    fn rows(&self) -> (Vec<Complex64>, Vec<Complex64>) {
        (
            layer_output_row(&self.layer_a, self.dim_a),
            layer_output_row(&self.layer_b, self.dim_b),
        )
    }

    /// Learned mode vectors in the frozen-prefix frame (conjugated output
    /// rows); equals the input-frame modes while the prefix is the identity.
    pub fn current_mode_vectors(&self) -> (Vec<Complex64>, Vec<Complex64>) {
        let (rho_a, rho_b) = self.rows();
        (
            rho_a.iter().map(|z| z.conj()).collect(),
            rho_b.iter().map(|z| z.conj()).collect(),
        )
    }

    fn amplitudes(&self, rho_a: &[Complex64], rho_b: &[Complex64]) -> Vec<(f64, Complex64, Vec<Complex64>)> {
        self.folded
            .iter()
            .map(|(w, gt)| {
                // col = Gt . rho_B (no conjugation: the bilinear form).
                let col: Vec<Complex64> = (0..self.dim_a)
                    .map(|j| {
                        (0..self.dim_b)
                            .map(|l| gt[(j, l)] * rho_b[l])
                            .sum::<Complex64>()
                    })
                    .collect();
                let s: Complex64 = rho_a.iter().zip(&col).map(|(r, c)| r * c).sum();
                (*w, s, col)
            })
            .collect()
    }
}

impl LayerObjective for CoincidenceProblem {
    fn param_count(&self) -> usize {
        self.layer_a.param_count() + self.layer_b.param_count()
    }

    fn params(&self) -> Vec<f64> {
        let mut p = self.layer_a.params();
        p.extend(self.layer_b.params());
        p
    }

    fn set_params(&mut self, params: &[f64]) {
        let na = self.layer_a.param_count();
        self.layer_a.set_params(&params[..na]);
        self.layer_b.set_params(&params[na..]);
    }

    fn true_value(&self) -> f64 {
        let (rho_a, rho_b) = self.rows();
        self.amplitudes(&rho_a, &rho_b)
            .iter()
            .map(|(w, s, _)| w * s.norm_sqr())
            .sum()
    }

    fn true_value_and_grad(&self) -> (f64, Vec<f64>) {
        let (bras_a, rho_a) = gradient_bras(&self.layer_a, self.dim_a);
        let (bras_b, rho_b) = gradient_bras(&self.layer_b, self.dim_b);
        let parts = self.amplitudes(&rho_a, &rho_b);
        let value: f64 = parts.iter().map(|(w, s, _)| w * s.norm_sqr()).sum();

        // y_A = sum_i w_i conj(s_i) (Gt_i rho_B); y_B likewise with Gt^T rho_A.
        let mut y_a = vec![Complex64::new(0.0, 0.0); self.dim_a];
        for (w, s, col) in &parts {
            let c = Complex64::new(*w, 0.0) * s.conj();
            for (ya, cv) in y_a.iter_mut().zip(col) {
                *ya += c * cv;
            }
        }
        let mut y_b = vec![Complex64::new(0.0, 0.0); self.dim_b];
        for ((w, s, _), (_, gt)) in parts.iter().zip(&self.folded) {
            let c = Complex64::new(*w, 0.0) * s.conj();
            for (l, yb) in y_b.iter_mut().enumerate() {
                let dot: Complex64 = (0..self.dim_a).map(|j| gt[(j, l)] * rho_a[j]).sum();
                *yb += c * dot;
            }
        }

        let mut grad = row_gradient(&self.layer_a, &bras_a, &y_a);
        grad.extend(row_gradient(&self.layer_b, &bras_b, &y_b));
        (value, grad)
    }

    fn block_split(&self) -> usize {
        self.layer_a.param_count()
    }

    fn store(self: Box<Self>, into: StoreTarget<'_>) {
        match into {
            StoreTarget::Pair(a, b) => {
                *a = self.layer_a;
                *b = self.layer_b;
            }
            StoreTarget::One(_) => unreachable!("coincidence problems train both meshes"),
        }
    }
}

/// Symmetric-difference gradient estimate; each probe calls `eval` once.
pub fn dither_gradient(
    params: &[f64],
    delta: f64,
    mut eval: impl FnMut(&[f64]) -> f64,
) -> Vec<f64> {
    let mut grad = Vec::with_capacity(params.len());
    let mut point = params.to_vec();
    for i in 0..params.len() {
        point[i] = params[i] + delta;
        let plus = eval(&point);
        point[i] = params[i] - delta;
        let minus = eval(&point);
        point[i] = params[i];
        grad.push((plus - minus) / (2.0 * delta));
    }
    grad
}
