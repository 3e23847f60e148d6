//! Self-configuring layer cascades of Mach-Zehnder interferometer nodes.
//!
//! A mesh of dimension N is an ordered cascade of layers; layer `k` funnels
//! one mode onto output port `k` and passes the orthogonal complement on, so
//! it only ever touches modes `k..N`. Every input of a layer reaches the
//! layer's output port through exactly one path of MZI nodes.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::linalg::{matmul, ComplexMatrix};

/// Two-mode MZI node with an input-side phase `phi` on the top port and a
/// mixing angle `theta`:
///
/// ```text
/// T(theta, phi) = [ e^{i phi} cos(theta)   -sin(theta) ]
///                 [ e^{i phi} sin(theta)    cos(theta) ]
/// ```
///
/// Placing the phase on the input (rather than the output) side is what lets
/// a single node interfere two arbitrary complex amplitudes completely into
/// one port, which the layer's self-configuration relies on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MziNode {
    #[serde(rename = "top")]
    pub top_port: usize,
    #[serde(rename = "bottom")]
    pub bottom_port: usize,
    pub theta: f64,
    pub phi: f64,
}

impl MziNode {
    pub fn new(top_port: usize, bottom_port: usize) -> Self {
        Self {
            top_port,
            bottom_port,
            theta: 0.0,
            phi: 0.0,
        }
    }
}

/// 2x2 transfer matrix of a node.
pub fn mzi_unitary(node: &MziNode) -> ComplexMatrix {
    let (s, c) = node.theta.sin_cos();
    let e = Complex64::from_polar(1.0, node.phi);
    ComplexMatrix::from_entries(
        2,
        2,
        vec![
            e * c,
            Complex64::new(-s, 0.0),
            e * s,
            Complex64::new(c, 0.0),
        ],
    )
    .expect("2x2")
}

/// Derivative of the transfer matrix with respect to theta.
pub(crate) fn mzi_unitary_dtheta(node: &MziNode) -> ComplexMatrix {
    let (s, c) = node.theta.sin_cos();
    let e = Complex64::from_polar(1.0, node.phi);
    ComplexMatrix::from_entries(
        2,
        2,
        vec![
            -e * s,
            Complex64::new(-c, 0.0),
            e * c,
            Complex64::new(-s, 0.0),
        ],
    )
    .expect("2x2")
}

/// Derivative of the transfer matrix with respect to phi.
pub(crate) fn mzi_unitary_dphi(node: &MziNode) -> ComplexMatrix {
    let (s, c) = node.theta.sin_cos();
    let ie = Complex64::new(0.0, 1.0) * Complex64::from_polar(1.0, node.phi);
    ComplexMatrix::from_entries(
        2,
        2,
        vec![
            ie * c,
            Complex64::new(0.0, 0.0),
            ie * s,
            Complex64::new(0.0, 0.0),
        ],
    )
    .expect("2x2")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    DiagonalLine,
    BinaryTree,
}

/// One self-configuring layer: an ordered list of nodes funneling the modes
/// `output_port..dimension` onto `output_port`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelfConfiguringLayer {
    pub output_port: usize,
    pub nodes: Vec<MziNode>,
}

impl SelfConfiguringLayer {
    /// Diagonal line on modes `k..n`: adjacent couplers applied bottom-up,
    /// `(n-2, n-1)` first, `(k, k+1)` last.
    pub fn diagonal_line(k: usize, n: usize) -> Self {
        let nodes = (k..n - 1)
            .rev()
            .map(|m| MziNode::new(m, m + 1))
            .collect();
        Self {
            output_port: k,
            nodes,
        }
    }

    /// Binary tree on modes `k..n`: pairwise merges per stage, odd leftovers
    /// pass through to the next stage, until one survivor remains on port `k`.
    pub fn binary_tree(k: usize, n: usize) -> Self {
        let mut nodes = Vec::new();
        let mut active: Vec<usize> = (k..n).collect();
        while active.len() > 1 {
            let mut next = Vec::with_capacity(active.len() / 2 + 1);
            for pair in active.chunks(2) {
                if pair.len() == 2 {
                    nodes.push(MziNode::new(pair[0], pair[1]));
                }
                next.push(pair[0]);
            }
            if active.len() % 2 == 1 {
                *next.last_mut().expect("non-empty") = *active.last().expect("non-empty");
            }
            active = next;
        }
        Self {
            output_port: k,
            nodes,
        }
    }

    /// Phases in node order, flattened as `[theta_0, phi_0, theta_1, ...]`.
    pub fn params(&self) -> Vec<f64> {
        self.nodes
            .iter()
            .flat_map(|n| [n.theta, n.phi])
            .collect()
    }

    pub fn set_params(&mut self, params: &[f64]) {
        debug_assert_eq!(params.len(), 2 * self.nodes.len());
        for (node, pair) in self.nodes.iter_mut().zip(params.chunks(2)) {
            node.theta = wrap_angle(pair[0]);
            node.phi = wrap_angle(pair[1]);
        }
    }

    pub fn param_count(&self) -> usize {
        2 * self.nodes.len()
    }

    /// Chooses phases that combine `target` (indexed over modes
    /// `output_port..n`, unit norm) entirely onto the output port.
    ///
    /// Test utility for layer expressivity; the trainer never calls this.
    pub fn steer_to_vector(&mut self, target: &[Complex64], n: usize) -> Result<Vec<(f64, f64)>> {
        let k = self.output_port;
        if target.len() != n - k {
            return Err(Error::LengthMismatch {
                left: n - k,
                right: target.len(),
            });
        }
        let norm: f64 = target.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm < 1e-12 {
            return Err(Error::ZeroVector);
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); n];
        for (i, &t) in target.iter().enumerate() {
            amps[k + i] = t / norm;
        }
        let mut phases = Vec::with_capacity(self.nodes.len());
        for node in &mut self.nodes {
            let a = amps[node.top_port];
            let b = amps[node.bottom_port];
            let (theta, phi) = if b.norm() < 1e-300 {
                (0.0, 0.0)
            } else if a.norm() < 1e-300 {
                (std::f64::consts::FRAC_PI_2, 0.0)
            } else {
                // Align e^{i phi} a against -b, then balance the coupler.
                let phi = wrap_angle(std::f64::consts::PI + b.arg() - a.arg());
                let theta = b.norm().atan2(a.norm());
                (theta, phi)
            };
            node.theta = theta;
            node.phi = phi;
            let t = mzi_unitary(node);
            let top = t[(0, 0)] * a + t[(0, 1)] * b;
            let bot = t[(1, 0)] * a + t[(1, 1)] * b;
            amps[node.top_port] = top;
            amps[node.bottom_port] = bot;
            phases.push((theta, phi));
        }
        Ok(phases)
    }
}

/// Unitary of one layer embedded in an n x n identity, nodes applied in
/// stored order.
pub fn layer_unitary(layer: &SelfConfiguringLayer, n: usize) -> Result<ComplexMatrix> {
    let mut u = ComplexMatrix::identity(n);
    for node in &layer.nodes {
        apply_node_left(&mut u, node, n)?;
    }
    Ok(u)
}

/// In-place `u <- E(node) * u` where E embeds the 2x2 block at the node ports.
fn apply_node_left(u: &mut ComplexMatrix, node: &MziNode, n: usize) -> Result<()> {
    let (p, q) = (node.top_port, node.bottom_port);
    if p >= n || q >= n {
        return Err(Error::PortOutOfRange {
            port: p.max(q),
            dim: n,
        });
    }
    if p == q {
        return Err(Error::InvalidParameter("node ports must differ".into()));
    }
    let t = mzi_unitary(node);
    for j in 0..u.cols() {
        let a = u[(p, j)];
        let b = u[(q, j)];
        u[(p, j)] = t[(0, 0)] * a + t[(0, 1)] * b;
        u[(q, j)] = t[(1, 0)] * a + t[(1, 1)] * b;
    }
    Ok(())
}

/// Cascade of self-configuring layers acting on `dimension` modes.
///
/// Layer `k` extracts port `k`; a full cascade has `dimension - 1` layers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshNetwork {
    dimension: usize,
    topology: Topology,
    layers: Vec<SelfConfiguringLayer>,
}

impl MeshNetwork {
    /// Mesh with `num_layers` layers, all phases zero (identity network).
    pub fn new(dimension: usize, num_layers: usize, topology: Topology) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::InvalidParameter("dimension must be >= 1".into()));
        }
        if num_layers + 1 > dimension {
            return Err(Error::InvalidParameter(format!(
                "at most {} layers fit a {}-mode mesh",
                dimension - 1,
                dimension
            )));
        }
        let layers = (0..num_layers)
            .map(|k| match topology {
                Topology::DiagonalLine => SelfConfiguringLayer::diagonal_line(k, dimension),
                Topology::BinaryTree => SelfConfiguringLayer::binary_tree(k, dimension),
            })
            .collect();
        Ok(Self {
            dimension,
            topology,
            layers,
        })
    }

    /// Full cascade: `dimension - 1` layers.
    pub fn full(dimension: usize, topology: Topology) -> Result<Self> {
        Self::new(dimension, dimension.saturating_sub(1), topology)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn topology(&self) -> Topology {
        self.topology
    }

    pub fn layers(&self) -> &[SelfConfiguringLayer] {
        &self.layers
    }

    pub fn layer(&self, k: usize) -> &SelfConfiguringLayer {
        &self.layers[k]
    }

    pub fn layer_mut(&mut self, k: usize) -> &mut SelfConfiguringLayer {
        &mut self.layers[k]
    }

    pub fn node_count(&self) -> usize {
        self.layers.iter().map(|l| l.nodes.len()).sum()
    }

    /// Unitary of layers `0..upto` (exclusive), layer 0 applied first.
    pub fn prefix_unitary(&self, upto: usize) -> Result<ComplexMatrix> {
        let mut u = ComplexMatrix::identity(self.dimension);
        for layer in &self.layers[..upto] {
            let l = layer_unitary(layer, self.dimension)?;
            u = matmul(&l, &u)?;
        }
        Ok(u)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("mesh serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mesh: MeshNetwork = serde_json::from_str(text)
            .map_err(|e| Error::InvalidParameter(format!("mesh JSON: {e}")))?;
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn validate(&self) -> Result<()> {
        for (k, layer) in self.layers.iter().enumerate() {
            if layer.output_port != k {
                return Err(Error::InvalidParameter(format!(
                    "layer {k} must extract port {k}, found {}",
                    layer.output_port
                )));
            }
            for node in &layer.nodes {
                if node.top_port >= self.dimension || node.bottom_port >= self.dimension {
                    return Err(Error::PortOutOfRange {
                        port: node.top_port.max(node.bottom_port),
                        dim: self.dimension,
                    });
                }
                if node.top_port == node.bottom_port {
                    return Err(Error::InvalidParameter("node ports must differ".into()));
                }
                if node.top_port < k || node.bottom_port < k {
                    return Err(Error::InvalidParameter(format!(
                        "layer {k} touches an already-extracted mode"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Full network unitary: ordered product of layer unitaries, layer 0 applied
/// first to the input state.
pub fn network_unitary(mesh: &MeshNetwork) -> ComplexMatrix {
    mesh.prefix_unitary(mesh.layers.len())
        .expect("validated mesh synthesizes")
}

pub fn wrap_angle(x: f64) -> f64 {
    let w = x.rem_euclid(TAU);
    // rem_euclid can return TAU itself for tiny negative inputs.
    if w >= TAU {
        0.0
    } else {
        w
    }
}
