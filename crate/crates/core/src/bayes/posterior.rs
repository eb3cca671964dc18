//! Grid posteriors for the separation and brightness-bias parameters.

use statrs::function::gamma::ln_gamma;

use crate::bayes::{kappa_grid, separation_grid, BayesGrids, PosteriorGrid, PriorSet};
use crate::error::{Error, Result};
use crate::grid::gauss_hermite_normal;

/// PSF-mode coupling probability for a balanced pair at `x0 -+ s` observed by
/// a sorter misaligned by `eps`:
/// `xi = (exp(-((eps+s)/2sigma)^2) + exp(-((eps-s)/2sigma)^2)) / 2`.
pub fn bspade_success_probability(s: f64, eps: f64, sigma: f64) -> f64 {
    let a = (eps + s) / (2.0 * sigma);
    let b = (eps - s) / (2.0 * sigma);
    0.5 * ((-a * a).exp() + (-b * b).exp())
}

fn ln_binomial_pmf(q: u64, n: u64, p: f64) -> f64 {
    if p <= 0.0 {
        return if q == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if p >= 1.0 {
        return if q == n { 0.0 } else { f64::NEG_INFINITY };
    }
    let (qf, nf) = (q as f64, n as f64);
    ln_gamma(nf + 1.0) - ln_gamma(qf + 1.0) - ln_gamma(nf - qf + 1.0)
        + qf * p.ln()
        + (nf - qf) * (1.0 - p).ln()
}

/// Probability of observing `q` PSF-mode photons out of `m2` under the
/// binary-SPADE measurement: `Binom(q | xi(s, eps), m2)`.
pub fn bspade_likelihood(q: u64, m2: u64, s: f64, eps: f64, sigma: f64) -> Result<f64> {
    if q > m2 {
        return Err(Error::InvalidParameter(format!("q = {q} exceeds budget {m2}")));
    }
    if !(s >= 0.0) || !(sigma > 0.0) {
        return Err(Error::InvalidParameter("negative separation or sigma".into()));
    }
    Ok(ln_binomial_pmf(q, m2, bspade_success_probability(s, eps, sigma)).exp())
}

/// Separation posterior after a binary-SPADE observation, marginalized over
/// the pointing-error prior by Gauss-Hermite quadrature:
/// `p(s) = integral p(s | eps) p(eps) deps` with
/// `p(s|eps) ~ Binom(q | xi(s, eps), M2) * prior(s)`.
pub fn update_separation_posterior(
    prior: &PriorSet,
    q: u64,
    m2: u64,
    grids: &BayesGrids,
) -> Result<PosteriorGrid> {
    if q > m2 {
        return Err(Error::InvalidParameter(format!("q = {q} exceeds budget {m2}")));
    }
    let points = separation_grid(prior.sigma, grids);
    let ln_prior: Vec<f64> = points.iter().map(|&s| prior.ln_separation_density(s)).collect();
    let (eps_nodes, eps_weights) = gauss_hermite_normal(grids.gh_nodes, prior.epsilon_std);

    let mut marginal = vec![0.0f64; points.len()];
    let mut cond = vec![0.0f64; points.len()];
    for (&eps, &w) in eps_nodes.iter().zip(&eps_weights) {
        let mut peak = f64::NEG_INFINITY;
        for (i, &s) in points.iter().enumerate() {
            let lp = ln_prior[i]
                + ln_binomial_pmf(q, m2, bspade_success_probability(s, eps, prior.sigma));
            cond[i] = lp;
            if lp > peak {
                peak = lp;
            }
        }
        if !peak.is_finite() {
            continue;
        }
        let mut total = 0.0;
        for c in cond.iter_mut() {
            *c = (*c - peak).exp();
            total += *c;
        }
        // Conditional posterior normalized on the grid, then weight by p(eps).
        for (m, &c) in marginal.iter_mut().zip(cond.iter()) {
            *m += w * c / total;
        }
    }
    Ok(PosteriorGrid::from_density(points, marginal))
}

/// Compressed 1D sample for repeated evaluation of the product likelihood
/// `prod_i (1 + u (x_i - eps))`: per-bin count, mean, and central second
/// moment, plus exact extremes for the positivity check.
#[derive(Debug, Clone)]
pub struct BinnedSample {
    count: Vec<f64>,
    mean: Vec<f64>,
    m2c: Vec<f64>,
    pub x_min: f64,
    pub x_max: f64,
}

impl BinnedSample {
    pub fn new(samples: &[f64], bins: usize) -> Self {
        assert!(!samples.is_empty());
        let x_min = samples.iter().cloned().fold(f64::INFINITY, f64::min);
        let x_max = samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let width = (x_max - x_min).max(1e-12);
        let mut count = vec![0.0; bins];
        let mut sum = vec![0.0; bins];
        let mut sum2 = vec![0.0; bins];
        for &x in samples {
            let idx = (((x - x_min) / width * bins as f64) as usize).min(bins - 1);
            count[idx] += 1.0;
            sum[idx] += x;
            sum2[idx] += x * x;
        }
        let mut mean = vec![0.0; bins];
        let mut m2c = vec![0.0; bins];
        for i in 0..bins {
            if count[i] > 0.0 {
                mean[i] = sum[i] / count[i];
                m2c[i] = (sum2[i] - count[i] * mean[i] * mean[i]).max(0.0);
            }
        }
        Self { count, mean, m2c, x_min, x_max }
    }

    /// `sum_i ln(1 + u (x_i - eps))` with a second-order in-bin correction;
    /// returns None when any factor is non-positive (model invalid there).
    pub fn ln_product(&self, u: f64, eps: f64) -> Option<f64> {
        if u != 0.0 {
            let lo = 1.0 + u * (self.x_min - eps);
            let hi = 1.0 + u * (self.x_max - eps);
            if lo <= 0.0 || hi <= 0.0 {
                return None;
            }
        }
        let mut total = 0.0;
        for i in 0..self.count.len() {
            if self.count[i] == 0.0 {
                continue;
            }
            let arg = 1.0 + u * (self.mean[i] - eps);
            total += self.count[i] * arg.ln() - 0.5 * u * u * self.m2c[i] / (arg * arg);
        }
        Some(total)
    }
}

/// Brightness-bias posterior produced by [`brightness_posterior`].
#[derive(Debug, Clone)]
pub struct BrightnessPosterior {
    pub posterior: PosteriorGrid,
    /// MMSE estimate: the posterior mean of kappa.
    pub kappa_mmse: f64,
    /// Some (kappa, s, eps) cells fell outside the sub-diffraction model's
    /// validity (a likelihood factor went non-positive) and were zeroed.
    pub clipped: bool,
}

/// Posterior on the brightness bias from sensing-stage direct-imaging
/// samples, marginalized over the separation posterior and the pointing
/// prior. Uses the numerically stable product form
/// `p(kappa | s, eps) ~ prod_i [1 + (2 kappa s / sigma^2)(x_i - eps)]`
/// valid in the sub-diffraction regime, accumulated in log space.
pub fn brightness_posterior(
    di_positions: &[f64],
    separation_posterior: &PosteriorGrid,
    prior: &PriorSet,
    grids: &BayesGrids,
) -> Result<BrightnessPosterior> {
    let kappas = kappa_grid(grids);
    if di_positions.is_empty() {
        let density = vec![1.0; kappas.len()];
        let posterior = PosteriorGrid::from_density(kappas, density);
        return Ok(BrightnessPosterior { posterior, kappa_mmse: 0.0, clipped: false });
    }

    let sample = BinnedSample::new(di_positions, 512);
    let (eps_nodes, eps_weights) = gauss_hermite_normal(grids.gh_nodes, prior.epsilon_std);
    let sigma2 = prior.sigma * prior.sigma;
    let s_step = separation_posterior.step();

    // Separation support with non-negligible posterior mass.
    let s_peak = separation_posterior.density.iter().cloned().fold(0.0f64, f64::max);
    let support: Vec<(f64, f64)> = separation_posterior
        .points
        .iter()
        .zip(&separation_posterior.density)
        .filter(|(_, &d)| d > 1e-12 * s_peak)
        .map(|(&s, &d)| (s, d * s_step))
        .collect();

    let mut clipped = false;
    let mut density = vec![0.0f64; kappas.len()];
    let mut cond = vec![0.0f64; kappas.len()];
    for (s, s_weight) in &support {
        for (&eps, &w_eps) in eps_nodes.iter().zip(&eps_weights) {
            let mut peak = f64::NEG_INFINITY;
            for (i, &kappa) in kappas.iter().enumerate() {
                let u = 2.0 * kappa * s / sigma2;
                match sample.ln_product(u, eps) {
                    Some(lp) => {
                        cond[i] = lp;
                        if lp > peak {
                            peak = lp;
                        }
                    }
                    None => {
                        cond[i] = f64::NEG_INFINITY;
                        clipped = true;
                    }
                }
            }
            if !peak.is_finite() {
                continue;
            }
            let mut total = 0.0;
            for c in cond.iter_mut() {
                *c = if c.is_finite() { (*c - peak).exp() } else { 0.0 };
                total += *c;
            }
            if total <= 0.0 {
                continue;
            }
            let scale = s_weight * w_eps / total;
            for (d, &c) in density.iter_mut().zip(cond.iter()) {
                *d += scale * c;
            }
        }
    }

    let posterior = PosteriorGrid::from_density(kappas, density);
    let kappa_mmse = posterior.mean();
    Ok(BrightnessPosterior { posterior, kappa_mmse, clipped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bayes::build_priors_from_di;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn toy_prior() -> PriorSet {
        let samples: Vec<f64> = (0..2000)
            .map(|i| {
                let t = (i as f64 / 2000.0) * std::f64::consts::TAU;
                0.4 * t.sin() + 0.9 * t.cos()
            })
            .collect();
        build_priors_from_di(&samples, 1.0).unwrap()
    }

    #[test]
    fn bspade_probability_special_values() {
        assert_relative_eq!(bspade_success_probability(0.0, 0.0, 1.0), 1.0);
        // eps = 0: xi = exp(-(s/2sigma)^2).
        assert_relative_eq!(bspade_success_probability(1.0, 0.0, 1.0), (-0.25f64).exp(), epsilon = 1e-15);
        let xi = bspade_success_probability(0.5, 0.0, 1.0);
        assert_relative_eq!(xi, (-0.0625f64).exp(), epsilon = 1e-15);
    }

    #[test]
    fn bspade_likelihood_degenerate_cases() {
        // s = 0, eps = 0: all photons stay in the PSF mode.
        assert_relative_eq!(bspade_likelihood(10, 10, 0.0, 0.0, 1.0).unwrap(), 1.0);
        assert_relative_eq!(bspade_likelihood(9, 10, 0.0, 0.0, 1.0).unwrap(), 0.0);
        assert!(bspade_likelihood(11, 10, 0.1, 0.0, 1.0).is_err());
    }

    #[test]
    fn no_data_returns_prior() {
        let prior = toy_prior();
        let grids = BayesGrids::default();
        let posterior = update_separation_posterior(&prior, 0, 0, &grids).unwrap();
        let prior_grid = prior.separation_prior_grid(&grids);
        for (a, b) in posterior.density.iter().zip(&prior_grid.density) {
            assert_relative_eq!(a, b, epsilon = 1e-9);
        }
    }

    #[test]
    fn all_psf_mode_counts_shift_mass_to_small_separations() {
        let prior = toy_prior();
        let grids = BayesGrids::default();
        let m2 = 2000;
        let posterior = update_separation_posterior(&prior, m2, m2, &grids).unwrap();
        let prior_grid = prior.separation_prior_grid(&grids);
        assert!(posterior.mean() < prior_grid.mean());
        assert!((posterior.integral() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn posterior_variance_shrinks_with_budget() {
        let mut rng = crate::rng::stream(41, 0, crate::rng::Stage::BayesPhotons);
        let prior = toy_prior();
        let grids = BayesGrids::default();
        let s_true = 0.4f64;
        let mut previous = f64::INFINITY;
        for &m2 in &[100u64, 10_000u64] {
            let xi = bspade_success_probability(s_true, 0.0, 1.0);
            // Average posterior variance over a few draws.
            let mut avg = 0.0;
            let reps = 12;
            for _ in 0..reps {
                let q = (0..m2).filter(|_| rng.gen::<f64>() < xi).count() as u64;
                let post = update_separation_posterior(&prior, q, m2, &grids).unwrap();
                avg += post.variance();
            }
            avg /= reps as f64;
            assert!(avg < previous, "variance should fall with budget: {avg} !< {previous}");
            previous = avg;
        }
    }

    #[test]
    fn binned_product_matches_exact_evaluation() {
        let mut rng = crate::rng::stream(42, 0, crate::rng::Stage::BayesPhotons);
        let samples: Vec<f64> = (0..20_000).map(|_| {
            let g: f64 = StandardNormal.sample(&mut rng);
            0.2 + g
        }).collect();
        let binned = BinnedSample::new(&samples, 512);
        for (u, eps) in [(0.05, 0.01), (-0.12, -0.02), (0.2, 0.0)] {
            let exact: f64 = samples.iter().map(|&x| (1.0 + u * (x - eps)).ln()).sum();
            let approx = binned.ln_product(u, eps).unwrap();
            assert!((exact - approx).abs() < 2e-3 * exact.abs().max(1.0), "{exact} vs {approx}");
        }
    }

    #[test]
    fn zero_photons_give_flat_kappa_posterior() {
        let prior = toy_prior();
        let grids = BayesGrids::default();
        let sep = prior.separation_prior_grid(&grids);
        let out = brightness_posterior(&[], &sep, &prior, &grids).unwrap();
        assert_relative_eq!(out.kappa_mmse, 0.0, epsilon = 1e-12);
        let spread = out.posterior.density.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - out.posterior.density.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(spread.abs() < 1e-12);
    }

    #[test]
    fn symmetric_samples_give_zero_mmse() {
        let prior = toy_prior();
        let grids = BayesGrids::default();
        let sep = prior.separation_prior_grid(&grids);
        // Samples exactly symmetric about zero, pointing prior symmetric too.
        let samples: Vec<f64> = (1..=4000).flat_map(|i| {
            let x = i as f64 * 1e-3;
            [x, -x]
        }).collect();
        let out = brightness_posterior(&samples, &sep, &prior, &grids).unwrap();
        assert!(out.kappa_mmse.abs() < 1e-10, "mmse {}", out.kappa_mmse);
    }
}
