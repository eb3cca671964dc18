//! Local optimizers used by the estimators and the YKL solver.
//!
//! Everything here is deterministic given its inputs; multi-start logic and
//! randomness live with the callers.

mod bfgs;
mod lm;
mod nelder_mead;
mod unitary;

pub use bfgs::{bfgs_minimize, BfgsOptions, BfgsResult};
pub use lm::{levenberg_marquardt, LmOptions, LmResult};
pub use nelder_mead::{nelder_mead_minimize, NelderMeadOptions, NelderMeadResult};
pub use unitary::{minimize_on_unitary, UnitaryDescentOptions, UnitaryDescentResult};

/// Central-difference gradient of `f` at `x` with absolute step `h`.
pub fn numeric_gradient<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64], h: f64) -> Vec<f64> {
    let mut grad = vec![0.0; x.len()];
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        let xi = x[i];
        probe[i] = xi + h;
        let fp = f(&probe);
        probe[i] = xi - h;
        let fm = f(&probe);
        probe[i] = xi;
        grad[i] = (fp - fm) / (2.0 * h);
    }
    grad
}
