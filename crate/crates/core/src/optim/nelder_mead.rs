//! Nelder-Mead downhill simplex minimization.

#[derive(Debug, Clone)]
pub struct NelderMeadOptions {
    pub max_iters: usize,
    /// Stop when the simplex function-value spread drops below this.
    pub f_tol: f64,
    /// Stop when the simplex diameter drops below this.
    pub x_tol: f64,
    /// Initial per-coordinate displacement used to build the simplex.
    pub initial_step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self { max_iters: 400, f_tol: 1e-10, x_tol: 1e-9, initial_step: 0.05 }
    }
}

#[derive(Debug, Clone)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimizes `f` starting from `x0` with the standard reflection/expansion/
/// contraction/shrink moves.
pub fn nelder_mead_minimize<F: Fn(&[f64]) -> f64>(
    f: F,
    x0: &[f64],
    opts: &NelderMeadOptions,
) -> NelderMeadResult {
    let n = x0.len();
    assert!(n >= 1);
    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += opts.initial_step;
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| f(v)).collect();

    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iters {
        iterations += 1;
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let best = order[0];
        let worst = order[n];
        let second_worst = order[n - 1];

        let spread = values[worst] - values[best];
        let diameter = simplex
            .iter()
            .map(|v| {
                v.iter()
                    .zip(&simplex[best])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0f64, f64::max);
        if spread.abs() < opts.f_tol && diameter < opts.x_tol {
            converged = true;
            break;
        }

        // Centroid of all but the worst vertex.
        let mut centroid = vec![0.0; n];
        for (idx, v) in simplex.iter().enumerate() {
            if idx != worst {
                for (c, x) in centroid.iter_mut().zip(v) {
                    *c += x / n as f64;
                }
            }
        }

        let blend = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[worst])
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };

        let reflected = blend(alpha);
        let f_reflected = f(&reflected);
        if f_reflected < values[best] {
            let expanded = blend(gamma);
            let f_expanded = f(&expanded);
            if f_expanded < f_reflected {
                simplex[worst] = expanded;
                values[worst] = f_expanded;
            } else {
                simplex[worst] = reflected;
                values[worst] = f_reflected;
            }
        } else if f_reflected < values[second_worst] {
            simplex[worst] = reflected;
            values[worst] = f_reflected;
        } else {
            let contracted = if f_reflected < values[worst] {
                blend(rho)
            } else {
                blend(-rho)
            };
            let f_contracted = f(&contracted);
            if f_contracted < values[worst].min(f_reflected) {
                simplex[worst] = contracted;
                values[worst] = f_contracted;
            } else {
                // Shrink toward the best vertex.
                let best_vertex = simplex[best].clone();
                for (idx, v) in simplex.iter_mut().enumerate() {
                    if idx != best {
                        for (x, b) in v.iter_mut().zip(&best_vertex) {
                            *x = b + sigma * (*x - b);
                        }
                        values[idx] = f(v);
                    }
                }
            }
        }
    }

    let mut best = 0;
    for i in 1..=n {
        if values[i] < values[best] {
            best = i;
        }
    }
    NelderMeadResult { x: simplex[best].clone(), f: values[best], iterations, converged }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let opts = NelderMeadOptions { max_iters: 5000, ..Default::default() };
        let res = nelder_mead_minimize(f, &[-1.2, 1.0], &opts);
        assert!((res.x[0] - 1.0).abs() < 1e-4, "{:?}", res.x);
        assert!((res.x[1] - 1.0).abs() < 1e-4);
    }
}
