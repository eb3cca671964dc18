//! Spatial rendering of measurement modes for visualization export.
//!
//! Probabilities never come from these grids; they exist to reproduce the
//! mode-profile panels and to sanity-check normalization by quadrature.

use nalgebra::Complex;
use serde::{Deserialize, Serialize};
use std::io::Write as _;
use std::path::Path;

use crate::error::Result;
use crate::grid::Grid2d;

/// What to render.
#[derive(Debug, Clone)]
pub enum ModeSpec {
    /// Hermite-Gauss mode (n, m) centered at `origin`.
    HermiteGauss { n: usize, m: usize, origin: [f64; 2] },
    /// Superposition of PSF modes anchored at `positions` with complex
    /// `weights` (e.g. a YKL mode expanded over the design emitter states).
    EmitterSuperposition { weights: Vec<Complex<f64>>, positions: Vec<[f64; 2]> },
}

/// A complex field sampled on a square grid, row-major with x varying fastest.
#[derive(Debug, Clone)]
pub struct RenderedMode {
    pub grid: Grid2d,
    pub values: Vec<Complex<f64>>,
}

/// Normalized 1D PSF amplitude (2 pi s^2)^{-1/4} exp(-x^2 / 4 s^2).
fn psf_amp_1d(x: f64, sigma: f64) -> f64 {
    (2.0 * std::f64::consts::PI * sigma * sigma).powf(-0.25) * (-x * x / (4.0 * sigma * sigma)).exp()
}

/// 2D PSF amplitude, the product of two 1D factors.
pub fn psf_amplitude(x: f64, y: f64, sigma: f64) -> f64 {
    psf_amp_1d(x, sigma) * psf_amp_1d(y, sigma)
}

/// Physicists' Hermite polynomial by recurrence.
fn hermite(n: usize, u: f64) -> f64 {
    let mut h_prev = 1.0;
    if n == 0 {
        return h_prev;
    }
    let mut h = 2.0 * u;
    for k in 1..n {
        let next = 2.0 * u * h - 2.0 * k as f64 * h_prev;
        h_prev = h;
        h = next;
    }
    h
}

/// Normalized 1D Hermite-Gauss amplitude of order n.
pub fn hermite_gauss_amp_1d(n: usize, x: f64, sigma: f64) -> f64 {
    let u = x / (sigma * std::f64::consts::SQRT_2);
    let norm: f64 = (0..n).fold(1.0, |acc, k| acc * 2.0 * (k + 1) as f64);
    hermite(n, u) / norm.sqrt() * psf_amp_1d(x, sigma)
}

/// Samples the requested mode on the grid.
pub fn render_mode(spec: &ModeSpec, grid: &Grid2d, sigma: f64) -> RenderedMode {
    let axis = grid.axis();
    let n_axis = axis.len();
    let mut values = Vec::with_capacity(n_axis * n_axis);
    for &y in &axis {
        for &x in &axis {
            let v = match spec {
                ModeSpec::HermiteGauss { n, m, origin } => Complex::new(
                    hermite_gauss_amp_1d(*n, x - origin[0], sigma)
                        * hermite_gauss_amp_1d(*m, y - origin[1], sigma),
                    0.0,
                ),
                ModeSpec::EmitterSuperposition { weights, positions } => {
                    let mut acc = Complex::new(0.0, 0.0);
                    for (w, p) in weights.iter().zip(positions) {
                        acc += w * psf_amplitude(x - p[0], y - p[1], sigma);
                    }
                    acc
                }
            };
            values.push(v);
        }
    }
    RenderedMode { grid: grid.clone(), values }
}

impl RenderedMode {
    /// L2 norm over the grid (should be ~1 for a normalized mode).
    pub fn l2_norm(&self) -> f64 {
        let cell = self.grid.spacing * self.grid.spacing;
        (self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * cell).sqrt()
    }

    /// Writes rows (x, y, re, im).
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["x", "y", "re", "im"])?;
        let axis = self.grid.axis();
        let n = axis.len();
        for (j, &y) in axis.iter().enumerate() {
            for (i, &x) in axis.iter().enumerate() {
                let v = self.values[j * n + i];
                w.write_record([
                    format!("{x:.9}"),
                    format!("{y:.9}"),
                    format!("{:.12e}", v.re),
                    format!("{:.12e}", v.im),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Writes row-major little-endian f64 pairs (re, im) plus a JSON sidecar
    /// describing the grid geometry.
    pub fn write_binary(&self, data_path: &Path, sidecar_path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(self.values.len() * 16);
        for v in &self.values {
            buf.extend_from_slice(&v.re.to_le_bytes());
            buf.extend_from_slice(&v.im.to_le_bytes());
        }
        std::fs::write(data_path, &buf)?;

        #[derive(Serialize, Deserialize)]
        struct Sidecar {
            extent: f64,
            spacing: f64,
            points_per_axis: usize,
            layout: String,
            dtype: String,
        }
        let sidecar = Sidecar {
            extent: self.grid.extent,
            spacing: self.grid.spacing,
            points_per_axis: self.grid.points_per_axis(),
            layout: "row-major, x fastest, interleaved re/im".into(),
            dtype: "f64-le".into(),
        };
        let mut f = std::fs::File::create(sidecar_path)?;
        writeln!(f, "{}", serde_json::to_string_pretty(&sidecar)?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psf_mode_is_normalized_and_peaked_at_origin() {
        let grid = Grid2d::new(6.0, 1.0 / 16.0).unwrap();
        let mode = render_mode(&ModeSpec::HermiteGauss { n: 0, m: 0, origin: [0.0, 0.0] }, &grid, 1.0);
        assert!((mode.l2_norm() - 1.0).abs() < 1e-6);
        let peak = mode.values.iter().map(|v| v.norm()).fold(0.0f64, f64::max);
        let axis = grid.axis();
        let n = axis.len();
        let center = mode.values[(n / 2) * n + (n / 2)].norm();
        assert!((peak - center).abs() < 1e-12);
    }

    #[test]
    fn hg10_is_odd_in_x_and_zero_at_origin() {
        let grid = Grid2d::new(6.0, 0.05).unwrap();
        let mode = render_mode(&ModeSpec::HermiteGauss { n: 1, m: 0, origin: [0.0, 0.0] }, &grid, 1.0);
        let axis = grid.axis();
        let n = axis.len();
        let mid = n / 2;
        assert!(mode.values[mid * n + mid].norm() < 1e-12);
        // Odd parity along x at fixed y.
        let v_left = mode.values[mid * n + (mid - 8)];
        let v_right = mode.values[mid * n + (mid + 8)];
        assert!((v_left.re + v_right.re).abs() < 1e-12);
    }

    #[test]
    fn superposed_gaussians_norm_matches_gram_quadratic_form() {
        // |w1 psi(r1) + w2 psi(r2)|^2 = w^H G w.
        let positions = vec![[-0.4, 0.0], [0.4, 0.1]];
        let weights = vec![Complex::new(0.8, 0.0), Complex::new(-0.45, 0.1)];
        let grid = Grid2d::new(8.0, 1.0 / 32.0).unwrap();
        let mode = render_mode(
            &ModeSpec::EmitterSuperposition { weights: weights.clone(), positions: positions.clone() },
            &grid,
            1.0,
        );
        let g = crate::scene::cross_gram(&positions, &positions, 1.0).unwrap();
        let mut quad = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                quad += (weights[i].conj() * weights[j]).re * g[(i, j)];
            }
        }
        assert!((mode.l2_norm() - quad.sqrt()).abs() < 1e-6);
    }
}
