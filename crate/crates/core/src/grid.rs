//! Uniform grids, quadrature rules, and Gauss-Hermite nodes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::sym_eigen_sorted;
use nalgebra::DMatrix;

/// Uniform 1D grid over a closed interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid1d {
    pub min: f64,
    pub max: f64,
    pub n: usize,
}

impl Grid1d {
    pub fn new(min: f64, max: f64, n: usize) -> Result<Self> {
        if !(max > min) || n < 2 {
            return Err(Error::InvalidParameter(format!(
                "grid requires max > min and n >= 2, got [{min}, {max}] x {n}"
            )));
        }
        Ok(Self { min, max, n })
    }

    pub fn step(&self) -> f64 {
        (self.max - self.min) / (self.n - 1) as f64
    }

    pub fn point(&self, i: usize) -> f64 {
        self.min + self.step() * i as f64
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.point(i)).collect()
    }
}

/// Trapezoid integral of samples over a uniform grid with step `h`.
pub fn trapezoid(values: &[f64], h: f64) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let interior: f64 = values[1..values.len() - 1].iter().sum();
    h * (0.5 * (values[0] + values[values.len() - 1]) + interior)
}

/// Mean of `f` under the density `density` sampled on a uniform grid.
pub fn grid_mean(points: &[f64], density: &[f64], h: f64) -> f64 {
    let weighted: Vec<f64> = points.iter().zip(density).map(|(x, p)| x * p).collect();
    trapezoid(&weighted, h)
}

/// Variance of the density sampled on a uniform grid.
pub fn grid_variance(points: &[f64], density: &[f64], h: f64) -> f64 {
    let mean = grid_mean(points, density, h);
    let weighted: Vec<f64> = points
        .iter()
        .zip(density)
        .map(|(x, p)| (x - mean) * (x - mean) * p)
        .collect();
    trapezoid(&weighted, h)
}

/// Square 2D grid specification used for mode rendering and quadrature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid2d {
    /// Half-extent: points span [-extent, extent] on both axes.
    pub extent: f64,
    /// Grid spacing; the number of points per axis is `2*extent/spacing + 1`.
    pub spacing: f64,
}

impl Grid2d {
    pub fn new(extent: f64, spacing: f64) -> Result<Self> {
        if !(extent > 0.0) || !(spacing > 0.0) || spacing >= extent {
            return Err(Error::InvalidParameter(format!(
                "grid extent/spacing must be positive with spacing < extent, got {extent}/{spacing}"
            )));
        }
        Ok(Self { extent, spacing })
    }

    pub fn points_per_axis(&self) -> usize {
        (2.0 * self.extent / self.spacing).round() as usize + 1
    }

    pub fn axis(&self) -> Vec<f64> {
        let n = self.points_per_axis();
        (0..n).map(|i| -self.extent + self.spacing * i as f64).collect()
    }
}

/// Nodes and weights of the n-point Gauss-Hermite rule for weight e^{-t^2},
/// computed by Golub-Welsch on the Jacobi matrix.
///
/// `integral f(t) e^{-t^2} dt = sum w_i f(t_i)`; for a Normal(0, s^2) average
/// substitute `t = x / (s sqrt(2))` and divide the weight sum by sqrt(pi).
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut jacobi = DMatrix::zeros(n, n);
    for k in 1..n {
        let b = (k as f64 / 2.0).sqrt();
        jacobi[(k - 1, k)] = b;
        jacobi[(k, k - 1)] = b;
    }
    let (vals, vecs) = sym_eigen_sorted(&jacobi);
    let mu0 = std::f64::consts::PI.sqrt();
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| (vals[i], mu0 * vecs[(0, i)] * vecs[(0, i)]))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

/// Nodes and weights for averaging over Normal(0, std^2): returns `(eps_i, w_i)`
/// with `sum w_i = 1` and `E[f] ~= sum w_i f(eps_i)`.
pub fn gauss_hermite_normal(n: usize, std: f64) -> (Vec<f64>, Vec<f64>) {
    let (t, w) = gauss_hermite(n);
    let scale = std * std::f64::consts::SQRT_2;
    let inv_sqrt_pi = 1.0 / std::f64::consts::PI.sqrt();
    (
        t.iter().map(|ti| ti * scale).collect(),
        w.iter().map(|wi| wi * inv_sqrt_pi).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn trapezoid_integrates_parabola() {
        let grid = Grid1d::new(0.0, 1.0, 2001).unwrap();
        let values: Vec<f64> = grid.points().iter().map(|x| x * x).collect();
        assert_relative_eq!(trapezoid(&values, grid.step()), 1.0 / 3.0, epsilon = 1e-7);
    }

    #[test]
    fn gauss_hermite_matches_gaussian_moments() {
        let (eps, w) = gauss_hermite_normal(21, 0.7);
        let total: f64 = w.iter().sum();
        assert_relative_eq!(total, 1.0, epsilon = 1e-12);
        let m2: f64 = eps.iter().zip(&w).map(|(e, wi)| wi * e * e).sum();
        assert_relative_eq!(m2, 0.49, epsilon = 1e-10);
        let m4: f64 = eps.iter().zip(&w).map(|(e, wi)| wi * e.powi(4)).sum();
        assert_relative_eq!(m4, 3.0 * 0.49 * 0.49, epsilon = 1e-9);
    }

    #[test]
    fn gauss_hermite_handles_nontrivial_integrand() {
        // E[cos(x)] under Normal(0, s^2) = exp(-s^2/2).
        let s = 0.5;
        let (eps, w) = gauss_hermite_normal(21, s);
        let got: f64 = eps.iter().zip(&w).map(|(e, wi)| wi * e.cos()).sum();
        assert_relative_eq!(got, (-s * s / 2.0f64).exp(), epsilon = 1e-12);
    }
}
