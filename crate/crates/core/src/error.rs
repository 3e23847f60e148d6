//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {lhs_rows}x{lhs_cols} vs {rhs_rows}x{rhs_cols}")]
    DimensionMismatch {
        op: &'static str,
        lhs_rows: usize,
        lhs_cols: usize,
        rhs_rows: usize,
        rhs_cols: usize,
    },

    #[error("vector length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("SVD did not converge after {sweeps} sweeps (off-diagonal norm {off_diagonal:.3e})")]
    SvdNoConvergence { sweeps: usize, off_diagonal: f64 },

    #[error("port {port} out of range for dimension {dim}")]
    PortOutOfRange { port: usize, dim: usize },

    #[error("cannot steer a zero vector")]
    ZeroVector,

    #[error("empty measurement: shot-noise budget is zero")]
    EmptyMeasurement,

    #[error("all input transmissions are zero on side {side}")]
    DarkSide { side: &'static str },

    #[error("total coincidence is zero; crosstalk undefined")]
    ZeroCoincidenceTotal,

    #[error("mode absent: port {port} carries power {power:.3e}, below threshold {threshold:.3e}")]
    ModeAbsent {
        port: usize,
        power: f64,
        threshold: f64,
    },

    #[error("state is not degenerate: lambda1/lambda2 = {ratio:.6} outside 1 +/- {tolerance}")]
    NotDegenerate { ratio: f64, tolerance: f64 },

    #[error("mode {layer} not available: network trained through {trained} layer(s)")]
    LayerNotTrained { layer: usize, trained: usize },

    #[error("analytic gradients require the exact measurement model; use dither under shot noise")]
    AnalyticUnderShotNoise,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;
