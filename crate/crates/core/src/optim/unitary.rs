//! Riemannian gradient descent on the unitary group U(K).
//!
//! The tangent projection at U is `G - U herm(U^H G)` and steps retract back
//! to the manifold through a phase-corrected QR factorization. Step sizes use
//! Armijo backtracking and warm-start from the previously accepted step.

use nalgebra::Complex;

use crate::linalg::{qr_unitarize, CMatrix};

#[derive(Debug, Clone)]
pub struct UnitaryDescentOptions {
    pub max_iters: usize,
    /// Convergence threshold on the Riemannian gradient Frobenius norm.
    pub grad_tol: f64,
    pub armijo_c1: f64,
    pub max_line_search: usize,
}

impl Default for UnitaryDescentOptions {
    fn default() -> Self {
        Self { max_iters: 5000, grad_tol: 1e-9, armijo_c1: 1e-4, max_line_search: 50 }
    }
}

#[derive(Debug, Clone)]
pub struct UnitaryDescentResult {
    pub u: CMatrix,
    pub cost: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn riemannian_gradient(u: &CMatrix, euclidean: &CMatrix) -> CMatrix {
    let utg = u.adjoint() * euclidean;
    let herm = (&utg + utg.adjoint()) * Complex::new(0.5, 0.0);
    euclidean - u * herm
}

/// Minimizes `cost` over U(K) starting from the (not necessarily unitary)
/// matrix `u0`, using `egrad` as the Euclidean gradient of the cost.
pub fn minimize_on_unitary<F, G>(
    cost: F,
    egrad: G,
    u0: &CMatrix,
    opts: &UnitaryDescentOptions,
) -> UnitaryDescentResult
where
    F: Fn(&CMatrix) -> f64,
    G: Fn(&CMatrix) -> CMatrix,
{
    let mut u = qr_unitarize(u0);
    let mut f = cost(&u);
    let mut step = 1.0f64;
    let mut iterations = 0;
    let mut grad_norm = f64::INFINITY;
    let mut converged = false;

    while iterations < opts.max_iters {
        iterations += 1;
        let grad = riemannian_gradient(&u, &egrad(&u));
        grad_norm = grad.norm();
        if grad_norm < opts.grad_tol {
            converged = true;
            break;
        }

        let slope = -grad_norm * grad_norm;
        let mut alpha = (step * 4.0).min(1.0);
        let mut accepted = false;
        for _ in 0..opts.max_line_search {
            let trial = qr_unitarize(&(&u - &grad * Complex::new(alpha, 0.0)));
            let f_trial = cost(&trial);
            if f_trial <= f + opts.armijo_c1 * alpha * slope {
                u = trial;
                f = f_trial;
                step = alpha;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            // No descent possible at line-search resolution; treat the current
            // iterate as converged if the gradient is already tiny.
            converged = grad_norm < opts.grad_tol * 1e3;
            break;
        }
    }

    UnitaryDescentResult { u, cost: f, grad_norm, iterations, converged }
}
