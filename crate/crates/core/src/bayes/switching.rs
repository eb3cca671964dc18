//! Adaptive rules for switching from direct imaging to binary SPADE inside
//! the calibration stage.

use statrs::function::gamma::ln_gamma;

use crate::bayes::posterior::bspade_success_probability;
use crate::bayes::{build_priors_from_di, separation_grid, BayesGrids};
use crate::error::{Error, Result};
use crate::grid::gauss_hermite_normal;

/// Default confidence multiplier for the type-I rule.
pub const DEFAULT_ZETA: f64 = 2.0;

/// Type-I (unconstrained budget) rule: switch once the whitened second
/// moment exceeds 1 by `zeta` standard errors,
/// `m2 - zeta sqrt(2 (M1 - 1) / M1^2) > 1`.
pub fn switch_type1(di_positions: &[f64], zeta: f64, sigma: f64) -> Result<bool> {
    let n = di_positions.len();
    if n < 2 {
        return Err(Error::EmptyInput("type-I rule needs at least 2 samples".into()));
    }
    let nf = n as f64;
    let mean: f64 = di_positions.iter().sum::<f64>() / nf;
    let m2: f64 = di_positions.iter().map(|&x| ((x - mean) / sigma).powi(2)).sum::<f64>() / nf;
    Ok(m2 - zeta * (2.0 * (nf - 1.0) / (nf * nf)).sqrt() > 1.0)
}

/// Outcome of a type-II evaluation step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Type2Decision {
    pub switch_now: bool,
    /// Expected posterior variance of the separation if switching now.
    pub expected_variance: f64,
}

/// Type-II (fixed budget `m_total`) rule: compute the expected posterior
/// variance of the separation over all binary-SPADE outcomes that the
/// remaining budget could produce, weighted by their predictive probability
/// at the current point estimate; switch as soon as the expectation rises
/// above the previous step's value.
pub fn switch_type2(
    history: &[f64],
    di_positions: &[f64],
    m_total: u64,
    sigma: f64,
    grids: &BayesGrids,
) -> Result<Type2Decision> {
    let m1 = di_positions.len() as u64;
    if m1 < 2 {
        return Err(Error::EmptyInput("type-II rule needs at least 2 samples".into()));
    }
    if m1 >= m_total {
        return Err(Error::InvalidParameter(format!(
            "direct imaging consumed {m1} of {m_total} photons; nothing left to allocate"
        )));
    }
    let m2_budget = m_total - m1;
    let prior = build_priors_from_di(di_positions, sigma)?;
    let s_points = separation_grid(sigma, grids);
    let ln_prior: Vec<f64> = s_points.iter().map(|&s| prior.ln_separation_density(s)).collect();
    let (eps_nodes, eps_weights) = gauss_hermite_normal(grids.gh_nodes, prior.epsilon_std);

    // Point estimate of the separation: prior mean on the grid.
    let prior_grid = prior.separation_prior_grid(grids);
    let s_check = prior_grid.mean();

    // Outcome window covering all but ~1e-20 of the predictive mass.
    let mut q_lo = m2_budget;
    let mut q_hi = 0u64;
    for &eps in &eps_nodes {
        let xi = bspade_success_probability(s_check, eps, sigma).clamp(1e-12, 1.0 - 1e-12);
        let mean = m2_budget as f64 * xi;
        let sd = (m2_budget as f64 * xi * (1.0 - xi)).sqrt();
        let lo = (mean - 10.0 * sd - 5.0).floor().max(0.0) as u64;
        let hi = (mean + 10.0 * sd + 5.0).ceil().min(m2_budget as f64) as u64;
        q_lo = q_lo.min(lo);
        q_hi = q_hi.max(hi);
    }

    // Per-(s, eps) log success probabilities, reused across outcomes.
    let n_s = s_points.len();
    let n_e = eps_nodes.len();
    let mut ln_xi = vec![0.0f64; n_s * n_e];
    let mut ln_1m_xi = vec![0.0f64; n_s * n_e];
    for (l, &eps) in eps_nodes.iter().enumerate() {
        for (i, &s) in s_points.iter().enumerate() {
            let xi = bspade_success_probability(s, eps, sigma).clamp(1e-300, 1.0 - 1e-15);
            ln_xi[l * n_s + i] = xi.ln();
            ln_1m_xi[l * n_s + i] = (1.0 - xi).ln();
        }
    }
    // Predictive weights at the point estimate.
    let xi_check: Vec<f64> = eps_nodes
        .iter()
        .map(|&eps| bspade_success_probability(s_check, eps, sigma).clamp(1e-12, 1.0 - 1e-12))
        .collect();

    let mf = m2_budget as f64;
    let step = s_points[1] - s_points[0];
    let mut weighted_variance = 0.0;
    let mut weight_total = 0.0;
    let mut marginal = vec![0.0f64; n_s];
    let mut cond = vec![0.0f64; n_s];
    for q in q_lo..=q_hi {
        let qf = q as f64;
        // Predictive weight w_q = sum_l w_l Binom(q | xi(s_check, eps_l), M2).
        let ln_coeff = ln_gamma(mf + 1.0) - ln_gamma(qf + 1.0) - ln_gamma(mf - qf + 1.0);
        let mut w_q = 0.0;
        for (l, &xi) in xi_check.iter().enumerate() {
            w_q += eps_weights[l] * (ln_coeff + qf * xi.ln() + (mf - qf) * (1.0 - xi).ln()).exp();
        }
        if w_q < 1e-18 {
            continue;
        }

        marginal.iter_mut().for_each(|m| *m = 0.0);
        for l in 0..n_e {
            let mut peak = f64::NEG_INFINITY;
            for i in 0..n_s {
                let lp = ln_prior[i] + qf * ln_xi[l * n_s + i] + (mf - qf) * ln_1m_xi[l * n_s + i];
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
            for (m, &c) in marginal.iter_mut().zip(cond.iter()) {
                *m += eps_weights[l] * c / total;
            }
        }
        let mass: f64 = marginal.iter().sum::<f64>() * step;
        if mass <= 0.0 {
            continue;
        }
        let mean: f64 = s_points.iter().zip(&marginal).map(|(s, m)| s * m).sum::<f64>() * step / mass;
        let var: f64 = s_points
            .iter()
            .zip(&marginal)
            .map(|(s, m)| (s - mean) * (s - mean) * m)
            .sum::<f64>()
            * step
            / mass;
        weighted_variance += w_q * var;
        weight_total += w_q;
    }
    if weight_total <= 0.0 {
        return Err(Error::InvalidParameter("type-II predictive weights vanished".into()));
    }
    let expected_variance = weighted_variance / weight_total;
    let switch_now = history.last().map_or(false, |&prev| expected_variance > prev);
    Ok(Type2Decision { switch_now, expected_variance })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn type1_degenerate_samples_never_trigger() {
        assert!(!switch_type1(&vec![0.0; 50], DEFAULT_ZETA, 1.0).unwrap());
    }

    #[test]
    fn type1_exact_unity_moment_never_triggers() {
        // Two samples at +-sigma about their mean give m2 = 1 exactly.
        let samples = vec![-1.0, 1.0];
        assert!(!switch_type1(&samples, DEFAULT_ZETA, 1.0).unwrap());
        assert!(!switch_type1(&samples, 0.5, 1.0).unwrap());
    }

    #[test]
    fn type1_triggers_for_separated_pair_with_many_photons() {
        let mut rng = crate::rng::stream(51, 0, crate::rng::Stage::BayesPhotons);
        let s = 0.5;
        let samples: Vec<f64> = (0..10_000)
            .map(|_| {
                let c = if rng.gen::<bool>() { s } else { -s };
                let g: f64 = StandardNormal.sample(&mut rng);
                c + g
            })
            .collect();
        // m2 ~ 1.25, threshold band ~ 2 sqrt(2/1e4) ~ 0.028.
        assert!(switch_type1(&samples, DEFAULT_ZETA, 1.0).unwrap());
    }

    #[test]
    fn type2_first_step_never_switches() {
        let mut rng = crate::rng::stream(52, 0, crate::rng::Stage::BayesPhotons);
        let samples: Vec<f64> = (0..200)
            .map(|_| {
                let g: f64 = StandardNormal.sample(&mut rng);
                0.3 * if rng.gen::<bool>() { 1.0 } else { -1.0 } + g
            })
            .collect();
        let d = switch_type2(&[], &samples, 10_000, 1.0, &BayesGrids::default()).unwrap();
        assert!(!d.switch_now);
        assert!(d.expected_variance.is_finite() && d.expected_variance > 0.0);
    }

    #[test]
    fn type2_applies_monotone_rule() {
        let mut rng = crate::rng::stream(53, 0, crate::rng::Stage::BayesPhotons);
        let samples: Vec<f64> = (0..400)
            .map(|_| {
                let g: f64 = StandardNormal.sample(&mut rng);
                0.25 * if rng.gen::<bool>() { 1.0 } else { -1.0 } + g
            })
            .collect();
        let d = switch_type2(&[1e9], &samples, 10_000, 1.0, &BayesGrids::default()).unwrap();
        // Previous expected variance was enormous: keep imaging.
        assert!(!d.switch_now);
        let d2 = switch_type2(&[1e-12], &samples, 10_000, 1.0, &BayesGrids::default()).unwrap();
        assert!(d2.switch_now);
    }
}
