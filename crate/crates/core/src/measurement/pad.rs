//! PSF-adapted (Hermite-Gauss) mode sorting.
//!
//! For a Gaussian PSF, the probability that a photon from an emitter
//! displaced by `d` from the sorter origin lands in the (n, m) mode is a
//! product of two Poisson laws:
//! `p_nm = e^{-(mux+muy)} mux^n muy^m / (n! m!)` with `mux = (dx/2s)^2`,
//! `muy = (dy/2s)^2`. Probabilities are always computed from this closed
//! form; spatial grids exist only for visualization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::EmitterEnsemble;

/// Default sorted order cutoff: all modes with n + m <= 10 (66 modes).
pub const DEFAULT_MAX_TOTAL_ORDER: usize = 10;

/// Hermite-Gauss sorter configuration: alignment origin and the largest
/// sorted total order. Photons outside the sorted span land in an implicit
/// bucket outcome appended after the sorted modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PadSpadeConfig {
    pub origin: [f64; 2],
    pub max_total_order: usize,
}

impl PadSpadeConfig {
    pub fn new(origin: [f64; 2], max_total_order: usize) -> Self {
        Self { origin, max_total_order }
    }

    pub fn aligned_default(origin: [f64; 2]) -> Self {
        Self::new(origin, DEFAULT_MAX_TOTAL_ORDER)
    }

    /// Number of sorted modes: (Q+1)(Q+2)/2 for cutoff Q.
    pub fn sorted_mode_count(&self) -> usize {
        (self.max_total_order + 1) * (self.max_total_order + 2) / 2
    }

    /// Outcome count including the bucket.
    pub fn outcome_count(&self) -> usize {
        self.sorted_mode_count() + 1
    }

    /// Mode indices (n, m) in sorting order: ascending total order, then
    /// descending n, so the list starts with the PSF mode (0, 0).
    pub fn mode_indices(&self) -> Vec<(usize, usize)> {
        let mut modes = Vec::with_capacity(self.sorted_mode_count());
        for total in 0..=self.max_total_order {
            for n in (0..=total).rev() {
                modes.push((n, total - n));
            }
        }
        modes
    }
}

/// ln(k!) table up to `n` inclusive.
fn ln_factorials(n: usize) -> Vec<f64> {
    let mut table = vec![0.0; n + 1];
    for k in 1..=n {
        table[k] = table[k - 1] + (k as f64).ln();
    }
    table
}

/// Per-mode log-probabilities for a single emitter displaced by `d` from the
/// sorter origin. Returns `ln p_nm` for each sorted mode (no bucket).
pub fn single_emitter_log_probs(
    d: [f64; 2],
    sigma: f64,
    modes: &[(usize, usize)],
    max_order: usize,
) -> Vec<f64> {
    let mux = (d[0] / (2.0 * sigma)).powi(2);
    let muy = (d[1] / (2.0 * sigma)).powi(2);
    let ln_mux = if mux > 0.0 { mux.ln() } else { f64::NEG_INFINITY };
    let ln_muy = if muy > 0.0 { muy.ln() } else { f64::NEG_INFINITY };
    let lnf = ln_factorials(max_order);
    modes
        .iter()
        .map(|&(n, m)| {
            let mut lp = -(mux + muy);
            lp += if n > 0 { n as f64 * ln_mux - lnf[n] } else { 0.0 };
            lp += if m > 0 { m as f64 * ln_muy - lnf[m] } else { 0.0 };
            lp
        })
        .collect()
}

/// Sorted-mode probabilities for an arbitrary scene: mixture over emitters of
/// the closed-form displaced-PSF law. Bucket (last entry) closes the sum to 1.
pub fn pad_probabilities_at(
    positions: &[[f64; 2]],
    brightnesses: &[f64],
    config: &PadSpadeConfig,
    sigma: f64,
) -> Vec<f64> {
    let modes = config.mode_indices();
    let mut probs = vec![0.0; config.outcome_count()];
    for (pos, &b) in positions.iter().zip(brightnesses) {
        let d = [pos[0] - config.origin[0], pos[1] - config.origin[1]];
        let lp = single_emitter_log_probs(d, sigma, &modes, config.max_total_order);
        for (slot, lnp) in probs.iter_mut().zip(&lp) {
            *slot += b * lnp.exp();
        }
    }
    let sorted_total: f64 = probs[..probs.len() - 1].iter().sum();
    let last = probs.len() - 1;
    probs[last] = (1.0 - sorted_total).max(0.0);
    probs
}

/// Outcome probabilities of the PAD-SPADE measurement for an ensemble
/// (sorted modes first, bucket last).
pub fn pad_probabilities(ensemble: &EmitterEnsemble, config: &PadSpadeConfig) -> Result<Vec<f64>> {
    if ensemble.psf_width() <= 0.0 {
        return Err(Error::InvalidParameter("psf width must be positive".into()));
    }
    Ok(pad_probabilities_at(
        ensemble.positions(),
        ensemble.brightnesses(),
        config,
        ensemble.psf_width(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn mode_list_starts_with_psf_mode_and_counts_match() {
        let cfg = PadSpadeConfig::aligned_default([0.0, 0.0]);
        let modes = cfg.mode_indices();
        assert_eq!(modes.len(), 66);
        assert_eq!(modes[0], (0, 0));
        assert_eq!(cfg.outcome_count(), 67);
    }

    #[test]
    fn emitter_at_origin_couples_only_to_psf_mode() {
        let e = EmitterEnsemble::uniform(vec![[0.0, 0.0]], 1.0).unwrap();
        let cfg = PadSpadeConfig::aligned_default([0.0, 0.0]);
        let p = pad_probabilities(&e, &cfg).unwrap();
        assert_relative_eq!(p[0], 1.0, epsilon = 1e-15);
        assert!(p[1..].iter().all(|&x| x.abs() < 1e-15));
    }

    #[test]
    fn displaced_emitter_follows_poisson_law() {
        // One emitter at d = sigma along x: p_00 = exp(-1/4).
        let e = EmitterEnsemble::uniform(vec![[1.0, 0.0]], 1.0).unwrap();
        let cfg = PadSpadeConfig::aligned_default([0.0, 0.0]);
        let p = pad_probabilities(&e, &cfg).unwrap();
        assert_relative_eq!(p[0], (-0.25f64).exp(), epsilon = 1e-12);

        // Probability of HG(n, 0) is Poisson(mu = 1/4) at n.
        let modes = cfg.mode_indices();
        let mu: f64 = 0.25;
        for (idx, &(n, m)) in modes.iter().enumerate() {
            if m == 0 && n <= 4 {
                let fact: f64 = (1..=n).map(|k| k as f64).product::<f64>().max(1.0);
                assert_relative_eq!(p[idx], (-mu).exp() * mu.powi(n as i32) / fact, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn probabilities_form_a_simplex() {
        let e = EmitterEnsemble::new(
            vec![[0.3, -0.2], [-0.1, 0.4], [0.05, 0.0]],
            vec![0.5, 0.3, 0.2],
            1.0,
        )
        .unwrap();
        let cfg = PadSpadeConfig::aligned_default([0.02, -0.03]);
        let p = pad_probabilities(&e, &cfg).unwrap();
        assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
        let sum: f64 = p.iter().sum();
        assert_relative_eq!(sum, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn far_scene_lands_in_bucket() {
        let e = EmitterEnsemble::uniform(vec![[40.0, 0.0]], 1.0).unwrap();
        let cfg = PadSpadeConfig::new([0.0, 0.0], 4);
        let p = pad_probabilities(&e, &cfg).unwrap();
        assert!(p.last().unwrap() > &0.999);
    }
}
