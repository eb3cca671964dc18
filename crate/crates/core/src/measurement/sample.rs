//! Photon-level sampling: direct-imaging arrivals and multinomial mode counts.

use rand::Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::EmitterEnsemble;

/// Raw measurement record for one protocol stage: direct-imaging arrival
/// positions plus per-mode SPADE counts (bucket last), with the photon-budget
/// bookkeeping needed by the estimators.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PhotonData {
    pub di_positions: Vec<[f64; 2]>,
    pub spade_counts: Vec<u64>,
    /// Photons allocated to direct imaging (M1 or N1).
    pub di_budget: u64,
    /// Photons allocated to the SPADE measurement (M2 or N2).
    pub spade_budget: u64,
}

impl PhotonData {
    pub fn new(di_positions: Vec<[f64; 2]>, spade_counts: Vec<u64>) -> Result<Self> {
        let di_budget = di_positions.len() as u64;
        let spade_budget = spade_counts.iter().sum();
        Ok(Self { di_positions, spade_counts, di_budget, spade_budget })
    }

    pub fn total_budget(&self) -> u64 {
        self.di_budget + self.spade_budget
    }

    pub fn validate(&self) -> Result<()> {
        if self.di_positions.len() as u64 != self.di_budget {
            return Err(Error::InvalidParameter(format!(
                "di budget {} but {} arrival positions",
                self.di_budget,
                self.di_positions.len()
            )));
        }
        let total: u64 = self.spade_counts.iter().sum();
        if total != self.spade_budget {
            return Err(Error::InvalidParameter(format!(
                "spade counts sum to {total}, budget is {}",
                self.spade_budget
            )));
        }
        Ok(())
    }
}

/// Draws `n_photons` i.i.d. arrival positions from the image-plane intensity:
/// a Gaussian mixture with component weights `b_k`, means `r_k`, and isotropic
/// standard deviation `sigma` per axis.
pub fn sample_direct_imaging<R: Rng>(
    ensemble: &EmitterEnsemble,
    n_photons: u64,
    rng: &mut R,
) -> Vec<[f64; 2]> {
    let sigma = ensemble.psf_width();
    let positions = ensemble.positions();
    let mut cumulative: Vec<f64> = Vec::with_capacity(positions.len());
    let mut acc = 0.0;
    for &b in ensemble.brightnesses() {
        acc += b;
        cumulative.push(acc);
    }
    let last = cumulative.len() - 1;
    cumulative[last] = 1.0;

    (0..n_photons)
        .map(|_| {
            let u: f64 = rng.gen();
            let k = cumulative.partition_point(|&c| c < u).min(last);
            let gx: f64 = StandardNormal.sample(rng);
            let gy: f64 = StandardNormal.sample(rng);
            [positions[k][0] + sigma * gx, positions[k][1] + sigma * gy]
        })
        .collect()
}

/// Multinomial draw by sequential conditional binomials.
pub fn sample_multinomial<R: Rng>(probs: &[f64], n: u64, rng: &mut R) -> Result<Vec<u64>> {
    if probs.is_empty() {
        return Err(Error::InvalidSimplex("empty probability vector".into()));
    }
    if probs.iter().any(|&p| !(0.0..=1.0 + 1e-12).contains(&p)) {
        return Err(Error::InvalidSimplex(format!("entries outside [0, 1]: {probs:?}")));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidSimplex(format!("probabilities sum to {total}")));
    }

    let mut counts = vec![0u64; probs.len()];
    let mut remaining = n;
    let mut rest = total;
    for (i, &p) in probs.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if i == probs.len() - 1 || rest <= p {
            counts[i] = remaining;
            break;
        }
        let ratio = (p / rest).clamp(0.0, 1.0);
        let draw = if ratio <= 0.0 {
            0
        } else if ratio >= 1.0 {
            remaining
        } else {
            Binomial::new(remaining, ratio)
                .map_err(|e| Error::InvalidParameter(format!("binomial: {e}")))?
                .sample(rng)
        };
        counts[i] = draw;
        remaining -= draw;
        rest -= p;
    }
    Ok(counts)
}
