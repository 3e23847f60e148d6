//! Damped-Newton refinement of a converged layer under exact expectations.
//!
//! Adam navigates to the right basin but stalls at a step-size floor well
//! above the value and phase tolerances this crate certifies, so each layer
//! finishes with a few Newton ascent steps on the exact objective. The
//! Hessian comes from central differences of the analytic gradient;
//! Levenberg damping keeps steps ascent-safe near degenerate curvature.

use super::problem::LayerObjective;

const HESSIAN_STEP: f64 = 1e-5;
const MAX_STEPS: usize = 40;
const MAX_DAMPING_TRIES: usize = 25;

pub(crate) fn newton_polish(problem: &mut dyn LayerObjective) -> f64 {
    let n = problem.param_count();
    if n == 0 {
        return problem.true_value();
    }
    let mut params = problem.params();
    let (mut f, mut grad) = problem.true_value_and_grad();
    let mut mu = 1e-9;
    for _ in 0..MAX_STEPS {
        let gmax = grad.iter().fold(0.0f64, |a, g| a.max(g.abs()));
        if gmax < 1e-12 * f.max(1e-9) {
            break;
        }
        let hessian = numeric_hessian(problem, &params);
        let mut improved = false;
        for _try in 0..MAX_DAMPING_TRIES {
            // Ascent step: (mu I - H) d = g.
            let mut system = hessian.clone();
            for i in 0..n {
                for j in 0..n {
                    system[i][j] = -system[i][j];
                }
                system[i][i] += mu;
            }
            if let Some(step) = solve(system, &grad) {
                let candidate: Vec<f64> =
                    params.iter().zip(&step).map(|(p, d)| p + d).collect();
                problem.set_params(&candidate);
                let f_new = problem.true_value();
                if f_new > f {
                    params = problem.params();
                    let (fv, g) = problem.true_value_and_grad();
                    f = fv;
                    grad = g;
                    mu = (mu / 3.0).max(1e-12);
                    improved = true;
                    break;
                }
            }
            mu = (mu * 10.0).max(1e-8);
        }
        if !improved {
            problem.set_params(&params);
            break;
        }
    }
    problem.set_params(&params);
    f
}

fn numeric_hessian(problem: &mut dyn LayerObjective, params: &[f64]) -> Vec<Vec<f64>> {
    let n = params.len();
    let mut h = vec![vec![0.0; n]; n];
    let mut point = params.to_vec();
    for i in 0..n {
        point[i] = params[i] + HESSIAN_STEP;
        problem.set_params(&point);
        let gp = problem.true_value_and_grad().1;
        point[i] = params[i] - HESSIAN_STEP;
        problem.set_params(&point);
        let gm = problem.true_value_and_grad().1;
        point[i] = params[i];
        for j in 0..n {
            h[i][j] = (gp[j] - gm[j]) / (2.0 * HESSIAN_STEP);
        }
    }
    problem.set_params(params);
    // Symmetrize away the differencing noise.
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (h[i][j] + h[j][i]);
            h[i][j] = avg;
            h[j][i] = avg;
        }
    }
    h
}

/// Gaussian elimination with partial pivoting; `None` for singular systems.
fn solve(mut a: Vec<Vec<f64>>, b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut x = b.to_vec();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| {
            a[i][col]
                .abs()
                .partial_cmp(&a[j][col].abs())
                .expect("finite")
        })?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        x.swap(col, pivot);
        for row in (col + 1)..n {
            let factor = a[row][col] / a[col][col];
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            x[row] -= factor * x[col];
        }
    }
    for col in (0..n).rev() {
        let mut sum = x[col];
        for k in (col + 1)..n {
            sum -= a[col][k] * x[k];
        }
        x[col] = sum / a[col][col];
        if !x[col].is_finite() {
            return None;
        }
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solver_inverts_small_system() {
        let a = vec![vec![2.0, 1.0], vec![1.0, 3.0]];
        let x = solve(a, &[5.0, 10.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12);
        assert!((x[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn solver_rejects_singular() {
        let a = vec![vec![1.0, 2.0], vec![2.0, 4.0]];
        assert!(solve(a, &[1.0, 2.0]).is_none());
    }
}
