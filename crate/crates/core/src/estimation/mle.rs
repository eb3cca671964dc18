//! Maximum-likelihood estimators for the calibration stage (positions) and
//! the sensing stage (brightnesses).

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::likelihood::{ln_multinomial_coeff, multinomial_log_pmf, pad_log_likelihood, DiSample};
use crate::estimation::estimate_centroid;
use crate::measurement::{PadSpadeConfig, PhotonData, YklMeasurement};
use crate::optim::{bfgs_minimize, nelder_mead_minimize, BfgsOptions, NelderMeadOptions};
use crate::scene::min_pairwise_separation;

/// Position estimate from the joint DI + PAD-SPADE likelihood.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationEstimate {
    pub centroid: [f64; 2],
    pub positions: Vec<[f64; 2]>,
    /// Achieved joint log likelihood ln p(m, x | positions).
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Multi-start configuration for the position MLE.
#[derive(Debug, Clone)]
pub struct PositionMleOptions {
    /// Random starts drawn in a disk around the centroid, in addition to the
    /// moment-matched start.
    pub random_starts: usize,
    /// Disk radius for random starts, units of sigma.
    pub search_radius: f64,
    pub nm_max_iters: usize,
    /// Number of best simplex results polished by BFGS.
    pub refine_top: usize,
    pub bfgs_max_iters: usize,
    pub seed: u64,
}

impl Default for PositionMleOptions {
    fn default() -> Self {
        Self {
            random_starts: 5,
            search_radius: 0.5,
            nm_max_iters: 500,
            refine_top: 2,
            bfgs_max_iters: 120,
            seed: 0,
        }
    }
}

fn flatten(positions: &[[f64; 2]]) -> Vec<f64> {
    positions.iter().flat_map(|p| [p[0], p[1]]).collect()
}

fn unflatten(x: &[f64]) -> Vec<[f64; 2]> {
    x.chunks_exact(2).map(|c| [c[0], c[1]]).collect()
}

/// Deterministic start with the sample's principal-axis spread: K points on
/// an ellipse matched to the DI excess covariance.
fn moment_matched_start(di: &DiSample, centroid: [f64; 2], k: usize, sigma: f64) -> Vec<[f64; 2]> {
    let c = di.covariance();
    // Excess covariance beyond the PSF.
    let exx = c[0][0] - sigma * sigma;
    let eyy = c[1][1] - sigma * sigma;
    let exy = c[0][1];
    let tr = exx + eyy;
    let det = exx * eyy - exy * exy;
    let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
    let floor = (0.02 * sigma) * (0.02 * sigma);
    let l1 = (tr / 2.0 + disc).max(floor);
    let l2 = (tr / 2.0 - disc).max(floor);
    let (v1, v2) = if exy.abs() > 1e-14 {
        let v = [l1 - eyy, exy];
        let n = (v[0] * v[0] + v[1] * v[1]).sqrt();
        ([v[0] / n, v[1] / n], [-v[1] / n, v[0] / n])
    } else if exx >= eyy {
        ([1.0, 0.0], [0.0, 1.0])
    } else {
        ([0.0, 1.0], [1.0, 0.0])
    };

    if k == 1 {
        return vec![centroid];
    }
    if k == 2 {
        let a = l1.sqrt();
        return vec![
            [centroid[0] - a * v1[0], centroid[1] - a * v1[1]],
            [centroid[0] + a * v1[0], centroid[1] + a * v1[1]],
        ];
    }
    let (a, b) = ((2.0 * l1).sqrt(), (2.0 * l2).sqrt());
    (0..k)
        .map(|j| {
            let theta = 2.0 * std::f64::consts::PI * j as f64 / k as f64 + 0.35;
            let (ct, st) = (theta.cos(), theta.sin());
            [
                centroid[0] + a * ct * v1[0] + b * st * v2[0],
                centroid[1] + a * ct * v1[1] + b * st * v2[1],
            ]
        })
        .collect()
}

/// Joint maximum-likelihood localization over R^{2K}: Gaussian-mixture DI
/// term (uniform calibration brightness) plus the PAD-SPADE multinomial term
/// when SPADE photons are present. Multi-start Nelder-Mead refined by BFGS
/// with numeric gradients.
pub fn estimate_positions_mle(
    data: &PhotonData,
    k: usize,
    pad: &PadSpadeConfig,
    sigma: f64,
    opts: &PositionMleOptions,
) -> Result<CalibrationEstimate> {
    if data.di_positions.is_empty() {
        return Err(Error::EmptyInput("position MLE needs direct-imaging photons".into()));
    }
    if data.spade_budget > 0 && data.spade_counts.len() != pad.outcome_count() {
        return Err(Error::InvalidParameter(format!(
            "PAD counts have {} outcomes, sorter has {}",
            data.spade_counts.len(),
            pad.outcome_count()
        )));
    }
    let centroid = estimate_centroid(&data.di_positions)?;
    let di = DiSample::new(&data.di_positions, sigma);
    let uniform = vec![1.0 / k as f64; k];
    let use_pad = data.spade_budget > 0;
    let ln_coeff = if use_pad { ln_multinomial_coeff(&data.spade_counts) } else { 0.0 };

    let objective = |x: &[f64]| -> f64 {
        let positions = unflatten(x);
        let mut ll = di.log_likelihood(&positions, &uniform);
        if use_pad {
            ll += pad_log_likelihood(&data.spade_counts, &positions, pad, sigma, ln_coeff);
        }
        -ll
    };

    let mut starts: Vec<Vec<[f64; 2]>> = vec![moment_matched_start(&di, centroid, k, sigma)];
    let mut rng = ChaCha12Rng::seed_from_u64(opts.seed);
    while starts.len() < 1 + opts.random_starts {
        let pts: Vec<[f64; 2]> = (0..k)
            .map(|_| {
                let r = opts.search_radius * sigma * rng.gen::<f64>().sqrt();
                let theta = rng.gen_range(0.0..std::f64::consts::TAU);
                [centroid[0] + r * theta.cos(), centroid[1] + r * theta.sin()]
            })
            .collect();
        starts.push(pts);
    }

    let nm_opts = NelderMeadOptions {
        max_iters: opts.nm_max_iters,
        initial_step: 0.05 * sigma,
        ..Default::default()
    };
    let mut runs: Vec<(f64, Vec<f64>, usize, bool)> = starts
        .iter()
        .map(|s| {
            let x0 = flatten(s);
            let r = nelder_mead_minimize(&objective, &x0, &nm_opts);
            (r.f, r.x, r.iterations, r.converged)
        })
        .collect();
    runs.sort_by(|a, b| a.0.total_cmp(&b.0));

    let bfgs_opts = BfgsOptions { max_iters: opts.bfgs_max_iters, ..Default::default() };
    let mut best: Option<(f64, Vec<f64>, usize, bool)> = None;
    let mut total_iters: usize = runs.iter().map(|r| r.2).sum();
    for run in runs.iter().take(opts.refine_top.max(1)) {
        let polished = bfgs_minimize(&objective, &run.1, &bfgs_opts);
        total_iters += polished.iterations;
        let candidate = if polished.f <= run.0 {
            (polished.f, polished.x, polished.iterations, polished.converged || run.3)
        } else {
            (run.0, run.1.clone(), run.2, run.3)
        };
        if best.as_ref().map_or(true, |b| candidate.0 < b.0) {
            best = Some(candidate);
        }
    }
    let (mut f_best, mut x_best, _, mut converged) = best.expect("at least one start");

    // Collapsed-pair guard: nudge coincident estimates apart and re-polish.
    let mut positions = unflatten(&x_best);
    if k >= 2 {
        if let Ok(d) = min_pairwise_separation(&positions) {
            if d < 1e-6 * sigma {
                for (idx, p) in positions.iter_mut().enumerate() {
                    let angle = 2.0 * std::f64::consts::PI * idx as f64 / k as f64;
                    p[0] += 1e-3 * sigma * angle.cos();
                    p[1] += 1e-3 * sigma * angle.sin();
                }
                let retry = bfgs_minimize(&objective, &flatten(&positions), &bfgs_opts);
                total_iters += retry.iterations;
                if retry.f < f_best {
                    f_best = retry.f;
                    x_best = retry.x;
                    converged = retry.converged;
                }
            }
        }
    }
    positions = unflatten(&x_best);

    Ok(CalibrationEstimate {
        centroid,
        positions,
        log_likelihood: -f_best,
        iterations: total_iters,
        converged,
    })
}

/// Brightness pre-estimate from sensing-stage DI photons with positions held
/// at the calibration estimate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BrightnessPreEstimate {
    pub weights: Vec<f64>,
    pub log_likelihood: f64,
    /// Set when there were no photons and the uniform fallback was returned.
    pub empty_data: bool,
}

/// Mixture-weight maximum likelihood with fixed Gaussian components by EM;
/// the weight likelihood is concave, so EM converges to the global optimum.
pub fn brightness_pre_estimate(
    di_positions: &[[f64; 2]],
    positions_est: &[[f64; 2]],
    sigma: f64,
) -> Result<BrightnessPreEstimate> {
    let k = positions_est.len();
    if k == 0 {
        return Err(Error::InvalidParameter("no emitter positions".into()));
    }
    if di_positions.is_empty() {
        return Ok(BrightnessPreEstimate {
            weights: vec![1.0 / k as f64; k],
            log_likelihood: 0.0,
            empty_data: true,
        });
    }
    let di = DiSample::new(di_positions, sigma);
    let n = di.n_photons();
    let mut weights = vec![1.0 / k as f64; k];
    let mut ll = di.log_likelihood(positions_est, &weights);
    for _ in 0..500 {
        let resp = di.responsibilities(positions_est, &weights);
        let mut next: Vec<f64> = resp.iter().map(|r| (r / n).max(1e-12)).collect();
        let total: f64 = next.iter().sum();
        for w in next.iter_mut() {
            *w /= total;
        }
        let ll_next = di.log_likelihood(positions_est, &next);
        weights = next;
        if (ll_next - ll).abs() < 1e-10 * (1.0 + ll.abs()) {
            ll = ll_next;
            break;
        }
        ll = ll_next;
    }
    Ok(BrightnessPreEstimate { weights, log_likelihood: ll, empty_data: false })
}

/// Final brightness estimate for one modulation point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SensingEstimate {
    pub pre_estimate: Vec<f64>,
    pub brightnesses: Vec<f64>,
    pub log_likelihood: f64,
    /// All SPADE photons landed in the bucket; the estimate fell back to the
    /// DI-only likelihood.
    pub bucket_fallback: bool,
    pub converged: bool,
}

fn softmax_from_logits(z: &[f64]) -> Vec<f64> {
    let mut full: Vec<f64> = z.to_vec();
    full.push(0.0);
    let peak = full.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = full.iter().map(|v| (v - peak).exp()).collect();
    let total: f64 = out.iter().sum();
    for v in out.iter_mut() {
        *v /= total;
    }
    out
}

fn logits_from_weights(w: &[f64]) -> Vec<f64> {
    let anchor = w[w.len() - 1].max(1e-9).ln();
    w[..w.len() - 1].iter().map(|&x| x.max(1e-9).ln() - anchor).collect()
}

/// Joint multinomial(YKL) + mixture(DI) brightness MLE over the closed
/// simplex, parameterized by K-1 free logits.
pub fn estimate_brightness_mle(
    data: &PhotonData,
    positions_est: &[[f64; 2]],
    measurement: &YklMeasurement,
    sigma: f64,
) -> Result<SensingEstimate> {
    let k = positions_est.len();
    if measurement.emitter_count() != k {
        return Err(Error::InvalidParameter(format!(
            "measurement built for {} emitters, scene has {k}",
            measurement.emitter_count()
        )));
    }
    if data.spade_counts.len() != k + 1 {
        return Err(Error::InvalidParameter(format!(
            "YKL counts have {} outcomes, expected {}",
            data.spade_counts.len(),
            k + 1
        )));
    }
    let pre = brightness_pre_estimate(&data.di_positions, positions_est, sigma)?;

    let bucket_only = data.spade_budget > 0 && data.spade_counts[k] == data.spade_budget;
    if bucket_only || data.spade_budget == 0 {
        return Ok(SensingEstimate {
            brightnesses: pre.weights.clone(),
            log_likelihood: pre.log_likelihood,
            pre_estimate: pre.weights,
            bucket_fallback: bucket_only,
            converged: true,
        });
    }

    let coupling = measurement.design_coupling()?;
    let di = DiSample::new(&data.di_positions, sigma);
    let has_di = !di.is_empty();
    let ln_coeff = ln_multinomial_coeff(&data.spade_counts);

    let objective = |z: &[f64]| -> f64 {
        let b = softmax_from_logits(z);
        let mut probs = vec![0.0f64; k + 1];
        for row in 0..=k {
            let mut acc = 0.0;
            for (j, &bj) in b.iter().enumerate() {
                acc += coupling[(row, j)] * bj;
            }
            probs[row] = acc;
        }
        let mut ll = multinomial_log_pmf(&data.spade_counts, &probs, ln_coeff);
        if has_di {
            ll += di.log_likelihood(positions_est, &b);
        }
        -ll
    };

    let z0 = logits_from_weights(&pre.weights);
    let bfgs = bfgs_minimize(&objective, &z0, &BfgsOptions { max_iters: 300, ..Default::default() });
    let brightnesses = softmax_from_logits(&bfgs.x);

    Ok(SensingEstimate {
        pre_estimate: pre.weights,
        brightnesses,
        log_likelihood: -bfgs.f,
        bucket_fallback: false,
        converged: bfgs.converged,
    })
}
