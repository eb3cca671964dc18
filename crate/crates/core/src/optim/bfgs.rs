//! BFGS quasi-Newton minimization with central-difference gradients and
//! Armijo backtracking.

use nalgebra::{DMatrix, DVector};

use super::numeric_gradient;

#[derive(Debug, Clone)]
pub struct BfgsOptions {
    pub max_iters: usize,
    pub grad_tol: f64,
    /// Absolute central-difference step for the numeric gradient.
    pub grad_step: f64,
    pub armijo_c1: f64,
    pub max_line_search: usize,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            max_iters: 200,
            grad_tol: 1e-8,
            grad_step: 1e-6,
            armijo_c1: 1e-4,
            max_line_search: 40,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BfgsResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub fn bfgs_minimize<F: Fn(&[f64]) -> f64>(f: F, x0: &[f64], opts: &BfgsOptions) -> BfgsResult {
    let n = x0.len();
    let mut x = DVector::from_column_slice(x0);
    let mut fx = f(x.as_slice());
    let mut grad = DVector::from_vec(numeric_gradient(&f, x.as_slice(), opts.grad_step));
    let mut h_inv = DMatrix::<f64>::identity(n, n);

    let mut iterations = 0;
    let mut converged = grad.norm() < opts.grad_tol;
    while iterations < opts.max_iters && !converged {
        iterations += 1;
        let mut direction = -(&h_inv * &grad);
        let mut slope = direction.dot(&grad);
        if !(slope < 0.0) {
            // Reset to steepest descent if the model lost positive definiteness.
            h_inv = DMatrix::identity(n, n);
            direction = -grad.clone();
            slope = direction.dot(&grad);
            if !(slope < 0.0) {
                break;
            }
        }

        // Armijo backtracking from a unit step.
        let mut step = 1.0;
        let mut accepted = false;
        let mut x_new = x.clone();
        let mut f_new = fx;
        for _ in 0..opts.max_line_search {
            x_new = &x + &direction * step;
            f_new = f(x_new.as_slice());
            if f_new.is_finite() && f_new <= fx + opts.armijo_c1 * step * slope {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }

        let grad_new = DVector::from_vec(numeric_gradient(&f, x_new.as_slice(), opts.grad_step));
        let s = &x_new - &x;
        let y = &grad_new - &grad;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            // Standard BFGS inverse-Hessian update.
            let rho = 1.0 / sy;
            let identity = DMatrix::<f64>::identity(n, n);
            let left = &identity - &s * y.transpose() * rho;
            let right = &identity - &y * s.transpose() * rho;
            h_inv = &left * h_inv * &right + &s * s.transpose() * rho;
        }

        x = x_new;
        fx = f_new;
        grad = grad_new;
        converged = grad.norm() < opts.grad_tol;
    }

    BfgsResult { x: x.as_slice().to_vec(), f: fx, grad_norm: grad.norm(), iterations, converged }
}
