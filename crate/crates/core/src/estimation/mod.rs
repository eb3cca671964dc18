//! Calibration- and sensing-stage estimators plus the error metrics used to
//! score them.

pub mod likelihood;
mod mle;

pub use likelihood::{DiSample, BIN_THRESHOLD};
pub use mle::{
    brightness_pre_estimate, estimate_brightness_mle, estimate_positions_mle, CalibrationEstimate,
    PositionMleOptions, SensingEstimate,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::min_pairwise_separation;

/// Arithmetic mean of the arrival positions; the near-ML estimator of the
/// scene center for sub-diffraction ensembles.
pub fn estimate_centroid(di_positions: &[[f64; 2]]) -> Result<[f64; 2]> {
    if di_positions.is_empty() {
        return Err(Error::EmptyInput("centroid needs at least one photon".into()));
    }
    let n = di_positions.len() as f64;
    let mut c = [0.0, 0.0];
    for p in di_positions {
        c[0] += p[0];
        c[1] += p[1];
    }
    Ok([c[0] / n, c[1] / n])
}

fn assignment_cost(r_true: &[[f64; 2]], r_est: &[[f64; 2]], perm: &[usize]) -> f64 {
    r_true
        .iter()
        .zip(perm)
        .map(|(t, &j)| {
            let dx = t[0] - r_est[j][0];
            let dy = t[1] - r_est[j][1];
            (dx * dx + dy * dy).sqrt()
        })
        .sum()
}

/// Hungarian algorithm (potentials form) on a square cost matrix; returns the
/// column assigned to each row.
fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut result = vec![0usize; n];
    for j in 1..=n {
        if p[j] > 0 {
            result[p[j] - 1] = j - 1;
        }
    }
    result
}

/// Emitter relabeling that minimizes the summed true-to-estimate distances:
/// exhaustive over permutations for K <= 8, Hungarian assignment above.
/// `result[k]` is the estimate index matched to true emitter k.
pub fn align_permutation(r_true: &[[f64; 2]], r_est: &[[f64; 2]]) -> Result<Vec<usize>> {
    let k = r_true.len();
    if r_est.len() != k {
        return Err(Error::InvalidParameter(format!(
            "true and estimated scenes have {k} vs {} emitters",
            r_est.len()
        )));
    }
    if k <= 8 {
        let mut best: Option<(f64, Vec<usize>)> = None;
        let mut perm: Vec<usize> = (0..k).collect();
        permute(&mut perm, 0, &mut |p| {
            let c = assignment_cost(r_true, r_est, p);
            if best.as_ref().map_or(true, |(bc, _)| c < *bc) {
                best = Some((c, p.to_vec()));
            }
        });
        Ok(best.expect("k >= 1").1)
    } else {
        let cost: Vec<Vec<f64>> = r_true
            .iter()
            .map(|t| {
                r_est
                    .iter()
                    .map(|e| {
                        let dx = t[0] - e[0];
                        let dy = t[1] - e[1];
                        (dx * dx + dy * dy).sqrt()
                    })
                    .collect()
            })
            .collect();
        Ok(hungarian(&cost))
    }
}

fn permute<F: FnMut(&[usize])>(items: &mut Vec<usize>, start: usize, visit: &mut F) {
    if start == items.len() {
        visit(items);
        return;
    }
    for i in start..items.len() {
        items.swap(start, i);
        permute(items, start + 1, visit);
        items.swap(start, i);
    }
}

/// Mean emitter-to-estimate distance normalized by the true scene's minimum
/// pairwise separation. Expects estimates already aligned by
/// [`align_permutation`].
pub fn localization_error(r_true: &[[f64; 2]], r_est: &[[f64; 2]]) -> Result<f64> {
    let k = r_true.len();
    if r_est.len() != k {
        return Err(Error::InvalidParameter("length mismatch".into()));
    }
    let d_min = min_pairwise_separation(r_true)?;
    let total: f64 = r_true
        .iter()
        .zip(r_est)
        .map(|(t, e)| {
            let dx = t[0] - e[0];
            let dy = t[1] - e[1];
            (dx * dx + dy * dy).sqrt()
        })
        .sum();
    Ok(total / (k as f64 * d_min))
}

/// Total-variation distance between two brightness vectors.
pub fn brightness_error(b_true: &[f64], b_est: &[f64]) -> Result<f64> {
    if b_true.len() != b_est.len() {
        return Err(Error::InvalidParameter(format!(
            "brightness vectors have lengths {} vs {}",
            b_true.len(),
            b_est.len()
        )));
    }
    Ok(0.5 * b_true.iter().zip(b_est).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// Pearson correlation and least-squares slope of brightness error against
/// localization error over Monte Carlo samples.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ErrorCorrelation {
    pub pearson: f64,
    pub slope: f64,
}

pub fn error_correlation(samples: &[(f64, f64)]) -> Result<ErrorCorrelation> {
    if samples.len() < 3 {
        return Err(Error::EmptyInput("correlation needs at least 3 samples".into()));
    }
    let n = samples.len() as f64;
    let mean_r: f64 = samples.iter().map(|s| s.0).sum::<f64>() / n;
    let mean_b: f64 = samples.iter().map(|s| s.1).sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_r = 0.0;
    let mut var_b = 0.0;
    for (r, b) in samples {
        cov += (r - mean_r) * (b - mean_b);
        var_r += (r - mean_r) * (r - mean_r);
        var_b += (b - mean_b) * (b - mean_b);
    }
    if var_r <= 0.0 || var_b <= 0.0 {
        return Err(Error::InvalidParameter("zero variance in error samples".into()));
    }
    Ok(ErrorCorrelation { pearson: cov / (var_r * var_b).sqrt(), slope: cov / var_r })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn centroid_basics() {
        assert!(estimate_centroid(&[]).is_err());
        let c = estimate_centroid(&[[-1.0, 0.0], [1.0, 0.0]]).unwrap();
        assert_relative_eq!(c[0], 0.0);
        let single = estimate_centroid(&[[0.3, -0.7]]).unwrap();
        assert_eq!(single, [0.3, -0.7]);
    }

    #[test]
    fn alignment_identity_and_swap() {
        let r = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        assert_eq!(align_permutation(&r, &r).unwrap(), vec![0, 1, 2]);
        let swapped = vec![r[1], r[0], r[2]];
        assert_eq!(align_permutation(&r, &swapped).unwrap(), vec![1, 0, 2]);
    }

    #[test]
    fn alignment_matches_hungarian_on_random_scenes() {
        let mut rng = ChaCha12Rng::seed_from_u64(99);
        for _ in 0..25 {
            let k = 6;
            let r_true: Vec<[f64; 2]> =
                (0..k).map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect();
            let r_est: Vec<[f64; 2]> =
                (0..k).map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect();
            let brute = align_permutation(&r_true, &r_est).unwrap();
            let cost: Vec<Vec<f64>> = r_true
                .iter()
                .map(|t| {
                    r_est
                        .iter()
                        .map(|e| ((t[0] - e[0]).powi(2) + (t[1] - e[1]).powi(2)).sqrt())
                        .collect()
                })
                .collect();
            let hung = hungarian(&cost);
            assert_relative_eq!(
                assignment_cost(&r_true, &r_est, &brute),
                assignment_cost(&r_true, &r_est, &hung),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn localization_error_quarter_offset() {
        let d = 0.4;
        let r_true = vec![[-d / 2.0, 0.0], [d / 2.0, 0.0]];
        let r_est = vec![[-d / 2.0 + d / 4.0, 0.0], [d / 2.0 - d / 4.0, 0.0]];
        assert_relative_eq!(localization_error(&r_true, &r_est).unwrap(), 0.25, epsilon = 1e-14);
        assert_relative_eq!(localization_error(&r_true, &r_true).unwrap(), 0.0);
    }

    #[test]
    fn localization_error_rigid_motion_invariance() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let r_true: Vec<[f64; 2]> =
            (0..4).map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect();
        let r_est: Vec<[f64; 2]> = r_true
            .iter()
            .map(|p| [p[0] + rng.gen_range(-0.05..0.05), p[1] + rng.gen_range(-0.05..0.05)])
            .collect();
        let base = localization_error(&r_true, &r_est).unwrap();
        let (c, s) = (0.6f64.cos(), 0.6f64.sin());
        let shift = [1.3, -0.8];
        let transform = |p: &[f64; 2]| [c * p[0] - s * p[1] + shift[0], s * p[0] + c * p[1] + shift[1]];
        let rt: Vec<[f64; 2]> = r_true.iter().map(&transform).collect();
        let re: Vec<[f64; 2]> = r_est.iter().map(&transform).collect();
        assert_relative_eq!(localization_error(&rt, &re).unwrap(), base, epsilon = 1e-12);
    }

    #[test]
    fn brightness_error_bounds_and_values() {
        assert_relative_eq!(brightness_error(&[0.5, 0.5], &[0.5, 0.5]).unwrap(), 0.0);
        let delta = 0.1;
        let e = brightness_error(&[1.0 - delta, delta], &[delta, 1.0 - delta]).unwrap();
        assert_relative_eq!(e, 1.0 - 2.0 * delta, epsilon = 1e-14);
        // Disjoint support maximum.
        let m = brightness_error(&[1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert_relative_eq!(m, 1.0);
        assert!(brightness_error(&[0.5, 0.5], &[1.0]).is_err());
    }

    #[test]
    fn correlation_recovers_linear_relation() {
        let samples: Vec<(f64, f64)> = (0..10).map(|i| (i as f64 * 0.1, i as f64 * 0.2)).collect();
        let c = error_correlation(&samples).unwrap();
        assert_relative_eq!(c.pearson, 1.0, epsilon = 1e-12);
        assert_relative_eq!(c.slope, 2.0, epsilon = 1e-12);
        let flat: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, 1.0)).collect();
        assert!(error_correlation(&flat).is_err());
    }
}
