//! Sequential Bayesian two-emitter estimation in one dimension: moment-based
//! priors inherited from direct imaging, binary-SPADE posterior updates,
//! adaptive switching rules, the stable brightness posterior, and
//! difference-operator eigenmodes.

mod diffop;
mod posterior;
mod switching;

pub use diffop::{difference_operator_modes, DifferenceOperatorModes};
pub use posterior::{
    brightness_posterior, bspade_likelihood, update_separation_posterior, BrightnessPosterior,
};
pub use switching::{switch_type1, switch_type2, Type2Decision, DEFAULT_ZETA};

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::grid::{grid_mean, grid_variance, trapezoid};

/// Floor applied to `m2 - 1` when the empirical second moment undershoots the
/// PSF variance, keeping the Gamma hyperparameters positive.
pub const M2_FLOOR: f64 = 1e-6;

/// Grid resolutions for the Bayesian machinery.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BayesGrids {
    /// Points of the separation grid over (0, 2 sigma].
    pub s_points: usize,
    /// Points of the brightness-bias grid over [-1/2, 1/2]; odd counts center
    /// zero.
    pub kappa_points: usize,
    /// Gauss-Hermite nodes for pointing-error marginalization.
    pub gh_nodes: usize,
}

impl Default for BayesGrids {
    fn default() -> Self {
        Self { s_points: 400, kappa_points: 401, gh_nodes: 21 }
    }
}

/// Priors inherited from the calibration-stage direct-imaging measurement:
/// Normal pointing error, Gamma separation (on mu = (s/2sigma)^2), uniform
/// brightness bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSet {
    /// Standard deviation of the pointing-error prior (sigma / sqrt(M1)).
    pub epsilon_std: f64,
    /// Gamma shape on mu.
    pub alpha: f64,
    /// Gamma rate on mu.
    pub lambda: f64,
    /// Whitened second moment of the samples (after flooring).
    pub m2_hat: f64,
    /// Point estimate s_hat = sigma sqrt(m2_hat - 1).
    pub s_hat: f64,
    pub n_samples: u64,
    pub sigma: f64,
}

impl PriorSet {
    /// Log density of the separation prior
    /// `Gamma((s/2sigma)^2 | alpha, lambda) * s / (2 sigma^2)`.
    pub fn ln_separation_density(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let mu = (s / (2.0 * self.sigma)).powi(2);
        self.alpha * self.lambda.ln() - ln_gamma(self.alpha) + (self.alpha - 1.0) * mu.ln()
            - self.lambda * mu
            + (s / (2.0 * self.sigma * self.sigma)).ln()
    }

    /// Uniform prior density on kappa over [-1/2, 1/2].
    pub fn kappa_density(&self, kappa: f64) -> f64 {
        if (-0.5..=0.5).contains(&kappa) {
            1.0
        } else {
            0.0
        }
    }

    /// Separation prior sampled and normalized on the standard grid.
    pub fn separation_prior_grid(&self, grids: &BayesGrids) -> PosteriorGrid {
        let points = separation_grid(self.sigma, grids);
        let log_density: Vec<f64> = points.iter().map(|&s| self.ln_separation_density(s)).collect();
        PosteriorGrid::from_log_density(points, &log_density)
    }
}

/// Separation grid over (0, 2 sigma]: uniform, excluding the s = 0 endpoint
/// where small-shape Gamma priors have an integrable singularity.
pub fn separation_grid(sigma: f64, grids: &BayesGrids) -> Vec<f64> {
    let n = grids.s_points;
    let step = 2.0 * sigma / n as f64;
    (1..=n).map(|i| step * i as f64).collect()
}

/// Brightness-bias grid over [-1/2, 1/2].
pub fn kappa_grid(grids: &BayesGrids) -> Vec<f64> {
    let n = grids.kappa_points;
    (0..n).map(|i| -0.5 + i as f64 / (n - 1) as f64).collect()
}

/// A normalized density on a uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorGrid {
    pub points: Vec<f64>,
    pub density: Vec<f64>,
}

impl PosteriorGrid {
    /// Builds from unnormalized log density values, normalizing by the
    /// trapezoid rule.
    pub fn from_log_density(points: Vec<f64>, log_density: &[f64]) -> Self {
        assert_eq!(points.len(), log_density.len());
        let peak = log_density.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut density: Vec<f64> = if peak.is_finite() {
            log_density.iter().map(|&l| (l - peak).exp()).collect()
        } else {
            vec![1.0; points.len()]
        };
        let step = points[1] - points[0];
        let norm = trapezoid(&density, step);
        for d in density.iter_mut() {
            *d /= norm;
        }
        Self { points, density }
    }

    /// Builds from nonnegative density values, normalizing.
    pub fn from_density(points: Vec<f64>, density: Vec<f64>) -> Self {
        let step = points[1] - points[0];
        let norm = trapezoid(&density, step);
        let density = density.iter().map(|d| d / norm).collect();
        Self { points, density }
    }

    pub fn step(&self) -> f64 {
        self.points[1] - self.points[0]
    }

    pub fn integral(&self) -> f64 {
        trapezoid(&self.density, self.step())
    }

    pub fn mean(&self) -> f64 {
        grid_mean(&self.points, &self.density, self.step())
    }

    pub fn variance(&self) -> f64 {
        grid_variance(&self.points, &self.density, self.step())
    }
}

/// Moment-derived priors from 1D calibration direct-imaging samples.
///
/// The whitened second moment `m2` sets the separation point estimate
/// `s = sigma sqrt(m2 - 1)` and the Gamma hyperparameters
/// `alpha = (m2-1)^2 M1^2 / (2(M1-1))`, `lambda = 2 (m2-1) M1^2 / (M1-1)`;
/// `m2 - 1` is floored at a small positive value when the sample
/// underspreads the PSF.
pub fn build_priors_from_di(di_positions: &[f64], sigma: f64) -> Result<PriorSet> {
    let n = di_positions.len();
    if n < 2 {
        return Err(Error::EmptyInput("separation prior needs at least 2 photons".into()));
    }
    let nf = n as f64;
    let mean: f64 = di_positions.iter().sum::<f64>() / nf;
    let m2: f64 =
        di_positions.iter().map(|&x| ((x - mean) / sigma).powi(2)).sum::<f64>() / nf;
    let excess = (m2 - 1.0).max(M2_FLOOR);
    let m2_hat = 1.0 + excess;
    let ratio = nf * nf / (nf - 1.0);
    let alpha = 0.5 * excess * excess * ratio;
    let lambda = 2.0 * excess * ratio;
    Ok(PriorSet {
        epsilon_std: sigma / nf.sqrt(),
        alpha,
        lambda,
        m2_hat,
        s_hat: sigma * excess.sqrt(),
        n_samples: n as u64,
        sigma,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn clamped_prior_concentrates_near_zero_separation() {
        let samples = vec![0.0; 100];
        let prior = build_priors_from_di(&samples, 1.0).unwrap();
        assert_relative_eq!(prior.m2_hat, 1.0 + M2_FLOOR);
        // Gamma mean alpha/lambda = excess/4 => s scale ~ 2 sigma sqrt(mu).
        assert!(prior.alpha / prior.lambda < 1e-6);
        assert!(prior.s_hat < 2e-3);
    }

    #[test]
    fn gamma_moments_match_hyperparameters() {
        let samples = vec![-0.9, 0.4, 1.1, -0.2, 0.6, -0.8, 0.3, 0.05];
        let prior = build_priors_from_di(&samples, 1.0).unwrap();
        assert_relative_eq!(prior.alpha / prior.lambda, (prior.m2_hat - 1.0) / 4.0, epsilon = 1e-12);
        let n = samples.len() as f64;
        assert_relative_eq!(
            prior.alpha / (prior.lambda * prior.lambda),
            (n - 1.0) / (8.0 * n * n),
            epsilon = 1e-12
        );
    }

    #[test]
    fn prior_mean_tracks_true_separation_scale() {
        // Balanced pair at +-s with s = sigma/2: E[mu] = (s/2sigma)^2 = 1/16.
        let mut rng = crate::rng::stream(31, 0, Stage::BayesPhotons);
        let s = 0.5;
        let m1 = 20_000;
        let mut mus = Vec::new();
        for _ in 0..60 {
            let samples: Vec<f64> = (0..m1)
                .map(|_| {
                    let which = if rng.gen::<bool>() { s } else { -s };
                    let g: f64 = StandardNormal.sample(&mut rng);
                    which + g
                })
                .collect();
            let prior = build_priors_from_di(&samples, 1.0).unwrap();
            mus.push(prior.alpha / prior.lambda);
        }
        let mean_mu: f64 = mus.iter().sum::<f64>() / mus.len() as f64;
        assert_relative_eq!(mean_mu, 1.0 / 16.0, epsilon = 0.004);
    }

    use crate::rng::Stage;

    #[test]
    fn separation_prior_grid_normalizes() {
        let samples: Vec<f64> = (0..500).map(|i| ((i % 7) as f64 - 3.0) * 0.3).collect();
        let prior = build_priors_from_di(&samples, 1.0).unwrap();
        let grid = prior.separation_prior_grid(&BayesGrids::default());
        assert!((grid.integral() - 1.0).abs() < 1e-6);
        assert!(grid.density.iter().all(|&d| d >= 0.0));
    }
}
