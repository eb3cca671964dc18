//! Levenberg-Marquardt damped least squares with numeric Jacobians.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub struct LmOptions {
    pub max_iters: usize,
    pub initial_lambda: f64,
    pub lambda_up: f64,
    pub lambda_down: f64,
    /// Stop when the squared-residual improvement falls below this.
    pub cost_tol: f64,
    /// Absolute step for the numeric Jacobian.
    pub jacobian_step: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iters: 200,
            initial_lambda: 1e-3,
            lambda_up: 10.0,
            lambda_down: 0.25,
            cost_tol: 1e-14,
            jacobian_step: 1e-7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmResult {
    pub params: Vec<f64>,
    /// Final sum of squared residuals.
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Set when J^T J was near-singular at the solution.
    pub rank_deficient: bool,
}

fn jacobian<F: Fn(&[f64]) -> Vec<f64>>(f: &F, x: &[f64], m: usize, h: f64) -> DMatrix<f64> {
    let n = x.len();
    let mut jac = DMatrix::zeros(m, n);
    let mut probe = x.to_vec();
    for j in 0..n {
        let xj = x[j];
        probe[j] = xj + h;
        let rp = f(&probe);
        probe[j] = xj - h;
        let rm = f(&probe);
        probe[j] = xj;
        for i in 0..m {
            jac[(i, j)] = (rp[i] - rm[i]) / (2.0 * h);
        }
    }
    jac
}

/// Minimizes `|residuals(x)|^2` from `x0`.
pub fn levenberg_marquardt<F: Fn(&[f64]) -> Vec<f64>>(
    residuals: F,
    x0: &[f64],
    opts: &LmOptions,
) -> LmResult {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut r = DVector::from_vec(residuals(&x));
    let m = r.len();
    let mut cost = r.norm_squared();
    let mut lambda = opts.initial_lambda;
    let mut iterations = 0;
    let mut converged = false;
    let mut rank_deficient = false;

    while iterations < opts.max_iters {
        iterations += 1;
        let jac = jacobian(&residuals, &x, m, opts.jacobian_step);
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * &r;

        let mut improved = false;
        for _ in 0..30 {
            let mut damped = jtj.clone();
            for d in 0..n {
                damped[(d, d)] += lambda * jtj[(d, d)].max(1e-12);
            }
            let Some(step) = damped.lu().solve(&(-&jtr)) else {
                rank_deficient = true;
                lambda *= opts.lambda_up;
                continue;
            };
            let x_trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, s)| a + s).collect();
            let r_trial = DVector::from_vec(residuals(&x_trial));
            let cost_trial = r_trial.norm_squared();
            if cost_trial.is_finite() && cost_trial < cost {
                let gain = cost - cost_trial;
                x = x_trial;
                r = r_trial;
                cost = cost_trial;
                lambda = (lambda * opts.lambda_down).max(1e-12);
                improved = true;
                if gain < opts.cost_tol * (1.0 + cost) {
                    converged = true;
                }
                break;
            }
            lambda *= opts.lambda_up;
        }
        if !improved {
            converged = true;
            break;
        }
        if converged {
            break;
        }
    }

    // Condition check of the Gauss-Newton normal matrix at the solution.
    let jac = jacobian(&residuals, &x, m, opts.jacobian_step);
    let jtj = jac.transpose() * &jac;
    let svd = jtj.svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > smax * 1e-12) {
        rank_deficient = true;
    }

    LmResult { params: x, cost, iterations, converged, rank_deficient }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fits_exponential_decay() {
        let ts: Vec<f64> = (0..40).map(|i| i as f64 * 0.1).collect();
        let truth = (2.5, 1.3);
        let data: Vec<f64> = ts.iter().map(|t| truth.0 * (-truth.1 * t).exp()).collect();
        let residuals = |p: &[f64]| -> Vec<f64> {
            ts.iter().zip(&data).map(|(t, d)| p[0] * (-p[1] * t).exp() - d).collect()
        };
        let res = levenberg_marquardt(residuals, &[1.0, 0.5], &LmOptions::default());
        assert!((res.params[0] - truth.0).abs() < 1e-7, "{res:?}");
        assert!((res.params[1] - truth.1).abs() < 1e-7);
        assert!(!res.rank_deficient);
    }
}
