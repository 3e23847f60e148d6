//! Independent SVD oracle based on one-sided Jacobi rotations.
//!
//! This routine exists to validate what the variational training learns, so it
//! deliberately shares no code with the mesh or trainer paths: it works
//! directly on matrix columns and converges by plane rotations alone.

use num_complex::Complex64;

use super::matrix::{inner, matmul, vec_norm, ComplexMatrix};
use crate::error::{Error, Result};

pub const DEFAULT_RANK_EPSILON: f64 = 1e-9;
pub const DEFAULT_MAX_SWEEPS: usize = 100;

/// `g = left * diag(values) * right.adjoint()`, truncated to the numerical rank.
#[derive(Clone, Debug)]
pub struct SvdResult {
    /// Left singular vectors, one column per retained value.
    pub left: ComplexMatrix,
    /// Singular values, sorted descending, all above the rank threshold.
    pub values: Vec<f64>,
    /// Right singular vectors, one column per retained value.
    pub right: ComplexMatrix,
}

impl SvdResult {
    pub fn rank(&self) -> usize {
        self.values.len()
    }

    pub fn reconstruct(&self) -> ComplexMatrix {
        let r = self.rank();
        let mut scaled = self.left.clone();
        for j in 0..r {
            let col: Vec<Complex64> = self
                .left
                .column(j)
                .iter()
                .map(|z| z * self.values[j])
                .collect();
            scaled.set_column(j, &col);
        }
        matmul(&scaled, &self.right.adjoint()).expect("rank-consistent shapes")
    }
}

/// One-sided cyclic Jacobi SVD.
///
/// Columns of a working copy of `g` are pairwise orthogonalized by right
/// rotations; accumulated rotations form the right singular vectors and the
/// surviving column directions the left ones. Columns whose norm ends up at
/// or below `rank_epsilon` are dropped.
pub fn svd_oracle(g: &ComplexMatrix, rank_epsilon: f64) -> Result<SvdResult> {
    svd_oracle_capped(g, rank_epsilon, DEFAULT_MAX_SWEEPS)
}

pub fn svd_oracle_capped(
    g: &ComplexMatrix,
    rank_epsilon: f64,
    max_sweeps: usize,
) -> Result<SvdResult> {
    if !g.is_finite() {
        return Err(Error::NonFinite("svd_oracle input"));
    }
    if rank_epsilon <= 0.0 {
        return Err(Error::InvalidParameter(
            "rank_epsilon must be positive".into(),
        ));
    }
    let (m, n) = (g.rows(), g.cols());
    let mut b: Vec<Vec<Complex64>> = (0..n).map(|j| g.column(j)).collect();
    let mut w: Vec<Vec<Complex64>> = (0..n)
        .map(|j| {
            let mut e = vec![Complex64::new(0.0, 0.0); n];
            e[j] = Complex64::new(1.0, 0.0);
            e
        })
        .collect();

    let tol = 1e-14;
    // Columns this far below the matrix scale are numerically zero; rotating
    // them against each other only stirs round-off and never converges.
    let floor = (1e-15 * g.frobenius_norm()).powi(2);
    let mut converged = false;
    for _sweep in 0..max_sweeps {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha = b[p].iter().map(|z| z.norm_sqr()).sum::<f64>();
                let gamma = b[q].iter().map(|z| z.norm_sqr()).sum::<f64>();
                if alpha <= floor || gamma <= floor {
                    continue;
                }
                let beta = inner(&b[p], &b[q]);
                let beta_abs = beta.norm();
                if beta_abs <= tol * (alpha * gamma).sqrt() {
                    continue;
                }
                // 2x2 Hermitian eigen-rotation zeroing <b_p|b_q>.
                let zeta = (alpha - gamma) / (2.0 * beta_abs);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                let phase = beta / beta_abs;
                let sp = s * phase; // s * e^{i psi}
                let spc = s * phase.conj(); // s * e^{-i psi}
                for i in 0..m {
                    let bp = b[p][i];
                    let bq = b[q][i];
                    b[p][i] = c * bp + spc * bq;
                    b[q][i] = -sp * bp + c * bq;
                }
                for i in 0..n {
                    let wp = w[p][i];
                    let wq = w[q][i];
                    w[p][i] = c * wp + spc * wq;
                    w[q][i] = -sp * wp + c * wq;
                }
                rotated = true;
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += inner(&b[p], &b[q]).norm_sqr();
            }
        }
        return Err(Error::SvdNoConvergence {
            sweeps: max_sweeps,
            off_diagonal: off.sqrt(),
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    let norms: Vec<f64> = b.iter().map(|col| vec_norm(col)).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).expect("finite norms"));

    let kept: Vec<usize> = order
        .into_iter()
        .filter(|&j| norms[j] > rank_epsilon)
        .collect();
    let r = kept.len();
    let mut left = ComplexMatrix::zeros(m, r);
    let mut right = ComplexMatrix::zeros(n, r);
    let mut values = Vec::with_capacity(r);
    for (out, &j) in kept.iter().enumerate() {
        let d = norms[j];
        values.push(d);
        let u: Vec<Complex64> = b[j].iter().map(|z| z / d).collect();
        left.set_column(out, &u);
        right.set_column(out, &w[j]);
    }
    Ok(SvdResult {
        left,
        values,
        right,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::random::{ginibre, SeededRng};

    #[test]
    fn bell_matrix_values() {
        let g = ComplexMatrix::identity(2).scaled(Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0));
        let svd = svd_oracle(&g, 1e-9).unwrap();
        assert_eq!(svd.rank(), 2);
        for v in &svd.values {
            assert!((v - 0.70711).abs() < 1e-5);
        }
    }

    #[test]
    fn rank_one_diagonal() {
        let mut g = ComplexMatrix::zeros(2, 2);
        g[(0, 0)] = Complex64::new(1.0, 0.0);
        let svd = svd_oracle(&g, 1e-9).unwrap();
        assert_eq!(svd.rank(), 1);
        assert!((svd.values[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn values_sorted_and_factors_orthonormal() {
        let mut rng = SeededRng::new(31).stream(&[0]);
        let g = ginibre(5, 7, &mut rng);
        let g = g.scaled(Complex64::new(1.0 / g.frobenius_norm(), 0.0));
        let svd = svd_oracle(&g, 1e-9).unwrap();
        for w in svd.values.windows(2) {
            assert!(w[0] >= w[1]);
        }
        assert!(matmul(&svd.left.adjoint(), &svd.left)
            .unwrap()
            .distance(&ComplexMatrix::identity(svd.rank()))
            .unwrap()
            < 1e-10);
        assert!(matmul(&svd.right.adjoint(), &svd.right)
            .unwrap()
            .distance(&ComplexMatrix::identity(svd.rank()))
            .unwrap()
            < 1e-10);
        assert!(svd.reconstruct().distance(&g).unwrap() < 1e-9);
    }

    #[test]
    fn sum_of_squares_matches_frobenius() {
        let mut rng = SeededRng::new(9).stream(&[1]);
        let g = ginibre(6, 4, &mut rng);
        let svd = svd_oracle(&g, 1e-9).unwrap();
        let sum: f64 = svd.values.iter().map(|v| v * v).sum();
        assert!((sum - g.frobenius_norm().powi(2)).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_rank_epsilon() {
        let g = ComplexMatrix::identity(2);
        assert!(svd_oracle(&g, 0.0).is_err());
    }
}
