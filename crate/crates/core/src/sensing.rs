//! Photoluminescence response models (CW-ODMR, Rabi), field/intensity
//! mappings, and least-squares recovery of the field from brightness traces.
//!
//! Dimensionless conventions: ODMR sweeps `gamma = (omega - Omega0) / Delta`
//! and reports `phi = Omega / Delta`; Rabi sweeps `gamma = Omega0 t / 2` and
//! reports `phi = Omega / Omega0 >= 1`. Overall intensity scales are not
//! identifiable and are absorbed into a per-emitter fit amplitude.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{levenberg_marquardt, LmOptions};
use crate::scene::validate_simplex;

/// Physical constants entering the Zeeman map `Omega = sqrt((g muB B / hbar)^2 + E^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldMap {
    pub g_factor: f64,
    pub bohr_magneton: f64,
    pub hbar: f64,
    /// Off-axis zero-field splitting from lattice strain.
    pub strain: f64,
}

/// CW-ODMR response: a pair of Lorentzian dips of depth chi/2 at detunings
/// -+Omega_k around the zero-field frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdmrModel {
    /// Non-radiative transition probability, in (0, 1).
    pub chi: f64,
    /// Zero-field resonance frequency.
    pub omega0: f64,
    /// Lorentzian linewidth.
    pub linewidth: f64,
    /// Per-emitter Zeeman detunings.
    pub detunings: Vec<f64>,
    pub field_map: Option<FieldMap>,
}

impl OdmrModel {
    pub fn new(chi: f64, omega0: f64, linewidth: f64, detunings: Vec<f64>) -> Result<Self> {
        if !(0.0 < chi && chi < 1.0) {
            return Err(Error::InvalidParameter(format!("chi {chi} must lie in (0, 1)")));
        }
        if !(linewidth > 0.0) {
            return Err(Error::InvalidParameter("linewidth must be positive".into()));
        }
        Ok(Self { chi, omega0, linewidth, detunings, field_map: None })
    }

    pub fn with_field_map(mut self, map: FieldMap) -> Self {
        self.field_map = Some(map);
        self
    }
}

fn lorentzian(omega: f64, omega0: f64, detuning: f64, linewidth: f64) -> f64 {
    1.0 / (1.0 + ((omega - omega0 - detuning) / linewidth).powi(2))
}

/// Relative ODMR intensity at drive frequency `omega` for an emitter with
/// Zeeman detuning `omega_k`:
/// `1 - chi/2 (L(omega, -Omega_k) + L(omega, +Omega_k))`.
pub fn odmr_intensity(omega: f64, omega_k: f64, model: &OdmrModel) -> f64 {
    1.0 - 0.5
        * model.chi
        * (lorentzian(omega, model.omega0, -omega_k, model.linewidth)
            + lorentzian(omega, model.omega0, omega_k, model.linewidth))
}

/// Zeeman detuning induced by a field `b` along the NV axis.
pub fn zeeman_from_field(b: f64, map: &FieldMap) -> f64 {
    ((map.g_factor * map.bohr_magneton * b / map.hbar).powi(2) + map.strain * map.strain).sqrt()
}

/// Inverse of [`zeeman_from_field`] on the positive branch.
pub fn field_from_zeeman(omega: f64, map: &FieldMap) -> Result<f64> {
    let inner = omega * omega - map.strain * map.strain;
    if inner < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "detuning {omega} below strain floor {}",
            map.strain
        )));
    }
    Ok(inner.sqrt() * map.hbar / (map.g_factor * map.bohr_magneton))
}

/// Rabi response of a driven two-level emitter prepared in the excited state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RabiModel {
    /// Resonant Rabi frequency (common to the ensemble).
    pub omega0: f64,
    /// Per-emitter generalized Rabi frequencies, all >= omega0.
    pub rabi_frequencies: Vec<f64>,
}

impl RabiModel {
    pub fn new(omega0: f64, rabi_frequencies: Vec<f64>) -> Result<Self> {
        if !(omega0 > 0.0) {
            return Err(Error::InvalidParameter("resonant frequency must be positive".into()));
        }
        if rabi_frequencies.iter().any(|&w| w < omega0) {
            return Err(Error::InvalidParameter(
                "generalized Rabi frequency below the resonant frequency".into(),
            ));
        }
        Ok(Self { omega0, rabi_frequencies })
    }

    /// Rabi frequency from a local detuning: sqrt(Omega0^2 + detuning^2).
    pub fn frequency_from_detuning(omega0: f64, detuning: f64) -> f64 {
        (omega0 * omega0 + detuning * detuning).sqrt()
    }
}

/// Rabi intensity `(Omega0/Omega_k)^2 cos^2(Omega_k t / 2)`.
pub fn rabi_intensity(t: f64, omega_k: f64, omega0: f64) -> Result<f64> {
    if !(omega0 > 0.0) || omega_k < omega0 {
        return Err(Error::InvalidParameter(format!(
            "need Omega_k >= Omega0 > 0, got {omega_k} vs {omega0}"
        )));
    }
    let envelope = (omega0 / omega_k).powi(2);
    Ok(envelope * (omega_k * t / 2.0).cos().powi(2))
}

/// Normalizes per-emitter intensities into relative brightnesses.
pub fn brightness_from_intensities(intensities: &[f64]) -> Result<Vec<f64>> {
    if intensities.is_empty() {
        return Err(Error::EmptyInput("no intensities".into()));
    }
    if intensities.iter().any(|&i| !(i > 0.0)) {
        return Err(Error::InvalidParameter("intensities must be positive".into()));
    }
    let total: f64 = intensities.iter().sum();
    Ok(intensities.iter().map(|&i| i / total).collect())
}

/// Which dimensionless photoluminescence model a trace follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ResponseModel {
    /// `I(gamma | phi) = 1 - chi/2 [L(gamma - phi) + L(gamma + phi)]` with
    /// unit-width Lorentzians; phi = Omega/Delta >= 0.
    Odmr { chi_permille: u32 },
    /// `I(gamma | phi) = cos^2(phi gamma) / phi^2`; phi = Omega/Omega0 >= 1.
    Rabi,
}

impl ResponseModel {
    pub fn odmr(chi: f64) -> Self {
        ResponseModel::Odmr { chi_permille: (chi * 1000.0).round() as u32 }
    }

    pub fn chi(&self) -> f64 {
        match self {
            ResponseModel::Odmr { chi_permille } => *chi_permille as f64 / 1000.0,
            ResponseModel::Rabi => 0.0,
        }
    }

    /// Dimensionless intensity at modulation `gamma` for field value `phi`.
    pub fn intensity(&self, gamma: f64, phi: f64) -> f64 {
        match self {
            ResponseModel::Odmr { .. } => {
                let chi = self.chi();
                1.0 - 0.5 * chi * (1.0 / (1.0 + (gamma - phi).powi(2)) + 1.0 / (1.0 + (gamma + phi).powi(2)))
            }
            ResponseModel::Rabi => (phi * gamma).cos().powi(2) / (phi * phi),
        }
    }

    /// Coarse search grid for the per-emitter field parameter.
    fn phi_grid(&self, gammas: &[f64]) -> Vec<f64> {
        match self {
            ResponseModel::Odmr { .. } => {
                let max = gammas.iter().cloned().fold(0.0f64, |a, g| a.max(g.abs())) + 1.0;
                (0..=60).map(|i| max * i as f64 / 60.0).collect()
            }
            // Rabi frequencies of interest sit within a few times resonance.
            ResponseModel::Rabi => (0..=60).map(|i| 1.0 + 2.0 * i as f64 / 60.0).collect(),
        }
    }

    fn phi_lower_bound(&self) -> f64 {
        match self {
            ResponseModel::Odmr { .. } => 0.0,
            ResponseModel::Rabi => 1.0,
        }
    }
}

/// Estimated intensity series for every emitter over the modulation sweep:
/// entry (gamma index, emitter) holds `I_k = N2 * b_k`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BrightnessTrace {
    pub gammas: Vec<f64>,
    /// Estimated brightness vectors, one per gamma (each on the simplex).
    pub brightnesses: Vec<Vec<f64>>,
    /// SPADE photon budget per gamma (intensity scale).
    pub budgets: Vec<f64>,
}

impl BrightnessTrace {
    pub fn new(gammas: Vec<f64>, brightnesses: Vec<Vec<f64>>, budgets: Vec<f64>) -> Result<Self> {
        if gammas.len() != brightnesses.len() || gammas.len() != budgets.len() {
            return Err(Error::InvalidParameter("trace arrays must share a length".into()));
        }
        for b in &brightnesses {
            validate_simplex(b)?;
        }
        Ok(Self { gammas, brightnesses, budgets })
    }

    pub fn emitter_count(&self) -> usize {
        self.brightnesses.first().map_or(0, |b| b.len())
    }

    /// Intensity estimates for emitter k across the sweep.
    pub fn intensities(&self, k: usize) -> Vec<f64> {
        self.brightnesses
            .iter()
            .zip(&self.budgets)
            .map(|(b, n2)| n2 * b[k])
            .collect()
    }
}

/// Per-emitter field estimate with fit diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FieldFit {
    pub phi: f64,
    pub amplitude: f64,
    pub residual_norm: f64,
    pub converged: bool,
    pub rank_deficient: bool,
}

/// Independent per-emitter least-squares fits of `c_k I(gamma | phi_k)` to
/// the estimated intensities: coarse grid over phi, damped refinement of the
/// best starts, amplitude profiled in closed form at the grid stage.
pub fn fit_field(
    trace: &BrightnessTrace,
    model: ResponseModel,
    init: Option<&[f64]>,
) -> Result<Vec<FieldFit>> {
    let k_count = trace.emitter_count();
    if k_count == 0 {
        return Err(Error::EmptyInput("empty trace".into()));
    }
    // Two parameters per emitter (phi, amplitude).
    if trace.gammas.len() < 6 {
        return Err(Error::EmptyInput(format!(
            "{} modulation points cannot identify a 2-parameter response",
            trace.gammas.len()
        )));
    }
    if let Some(init) = init {
        if init.len() != k_count {
            return Err(Error::InvalidParameter("one initial phi per emitter required".into()));
        }
    }

    let gammas = trace.gammas.clone();
    let mut fits = Vec::with_capacity(k_count);
    for k in 0..k_count {
        let data = trace.intensities(k);

        // Profile the amplitude for a given phi: c = <I_model, data>/|I_model|^2.
        let profiled = |phi: f64| -> (f64, f64) {
            let mut num = 0.0;
            let mut den = 0.0;
            for (&g, &d) in gammas.iter().zip(&data) {
                let m = model.intensity(g, phi);
                num += m * d;
                den += m * m;
            }
            let c = if den > 0.0 { num / den } else { 0.0 };
            let sse: f64 = gammas
                .iter()
                .zip(&data)
                .map(|(&g, &d)| {
                    let r = d - c * model.intensity(g, phi);
                    r * r
                })
                .sum();
            (c, sse)
        };

        let mut starts: Vec<f64> = model.phi_grid(&gammas);
        if let Some(init) = init {
            starts.push(init[k].max(model.phi_lower_bound()));
        }
        let mut ranked: Vec<(f64, f64, f64)> =
            starts.iter().map(|&phi| {
                let (c, sse) = profiled(phi);
                (sse, phi, c)
            }).collect();
        ranked.sort_by(|a, b| a.0.total_cmp(&b.0));

        let lower = model.phi_lower_bound();
        let mut best: Option<(f64, LmFit)> = None;
        for &(_, phi0, c0) in ranked.iter().take(4) {
            let residuals = |p: &[f64]| -> Vec<f64> {
                let phi = p[0].max(lower);
                let c = p[1];
                gammas
                    .iter()
                    .zip(&data)
                    .map(|(&g, &d)| c * model.intensity(g, phi) - d)
                    .collect()
            };
            let run = levenberg_marquardt(residuals, &[phi0.max(lower + 1e-6), c0.max(1e-12)], &LmOptions::default());
            let fit = LmFit {
                phi: run.params[0].max(lower),
                amplitude: run.params[1],
                cost: run.cost,
                converged: run.converged,
                rank_deficient: run.rank_deficient,
            };
            if best.as_ref().map_or(true, |(c, _)| fit.cost < *c) {
                best = Some((fit.cost, fit));
            }
        }
        let (_, fit) = best.expect("at least one start");
        fits.push(FieldFit {
            phi: fit.phi,
            amplitude: fit.amplitude,
            residual_norm: fit.cost.sqrt(),
            converged: fit.converged,
            rank_deficient: fit.rank_deficient,
        });
    }
    Ok(fits)
}

struct LmFit {
    phi: f64,
    amplitude: f64,
    cost: f64,
    converged: bool,
    rank_deficient: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn odmr_limits_and_symmetry() {
        let model = OdmrModel::new(0.5, 100.0, 2.0, vec![6.0]).unwrap();
        // Far detuned drive: full brightness.
        assert_relative_eq!(odmr_intensity(1e9, 6.0, &model), 1.0, epsilon = 1e-12);
        // Far-separated lines probed on resonance: 1 - chi/2.
        let well_split = odmr_intensity(100.0 + 600.0, 600.0, &model);
        assert_relative_eq!(well_split, 0.75, epsilon = 1e-4);
        // Degenerate lines stack to depth chi.
        assert_relative_eq!(odmr_intensity(100.0, 0.0, &model), 0.5, epsilon = 1e-12);
        // Even in omega about omega0.
        let a = odmr_intensity(100.0 + 1.3, 6.0, &model);
        let b = odmr_intensity(100.0 - 1.3, 6.0, &model);
        assert_relative_eq!(a, b, epsilon = 1e-12);
        // Range (1 - chi, 1].
        for i in 0..200 {
            let w = 80.0 + i as f64 * 0.4;
            let v = odmr_intensity(w, 6.0, &model);
            assert!(v > 1.0 - model.chi && v <= 1.0);
        }
    }

    #[test]
    fn zeeman_map_round_trips() {
        let map = FieldMap { g_factor: 2.0, bohr_magneton: 1.4, hbar: 1.0, strain: 3.0 };
        assert_relative_eq!(zeeman_from_field(0.0, &map), 3.0);
        let map0 = FieldMap { strain: 0.0, ..map };
        assert_relative_eq!(zeeman_from_field(2.0, &map0), 2.0 * 2.0 * 1.4, epsilon = 1e-12);
        for b in [0.1, 1.0, 7.3] {
            let omega = zeeman_from_field(b, &map);
            assert_relative_eq!(field_from_zeeman(omega, &map).unwrap(), b, epsilon = 1e-10);
        }
    }

    #[test]
    fn rabi_intensity_values() {
        // t = 0: envelope (Omega0/Omega)^2.
        assert_relative_eq!(rabi_intensity(0.0, 2.0, 1.0).unwrap(), 0.25);
        // Omega t = pi: zero crossing.
        let t = std::f64::consts::PI / 2.0;
        assert!(rabi_intensity(t, 2.0, 1.0).unwrap() < 1e-30);
        // On resonance: unit amplitude cosine.
        let v = rabi_intensity(0.7, 1.0, 1.0).unwrap();
        assert_relative_eq!(v, (0.35f64).cos().powi(2), epsilon = 1e-12);
        assert!(rabi_intensity(0.0, 0.9, 1.0).is_err());
    }

    #[test]
    fn rabi_periodicity_and_envelope() {
        let (w0, wk) = (1.0, 1.7);
        let period = 2.0 * std::f64::consts::PI / wk;
        for t in [0.3, 1.1, 2.9] {
            assert_relative_eq!(
                rabi_intensity(t, wk, w0).unwrap(),
                rabi_intensity(t + period, wk, w0).unwrap(),
                epsilon = 1e-12
            );
            assert!(rabi_intensity(t, wk, w0).unwrap() <= (w0 / wk).powi(2) + 1e-15);
        }
    }

    #[test]
    fn brightness_normalization() {
        let b = brightness_from_intensities(&[1.0, 3.0]).unwrap();
        assert_relative_eq!(b[0], 0.25);
        assert_relative_eq!(b[1], 0.75);
        let u = brightness_from_intensities(&[2.0, 2.0, 2.0]).unwrap();
        assert!(u.iter().all(|&x| (x - 1.0 / 3.0).abs() < 1e-15));
        assert!(brightness_from_intensities(&[1.0, 0.0]).is_err());
        // Composition identity with the ODMR response.
        let model = OdmrModel::new(0.4, 0.0, 1.0, vec![]).unwrap();
        let i1 = odmr_intensity(0.3, 2.0, &model);
        let i2 = odmr_intensity(0.3, 5.0, &model);
        let b2 = brightness_from_intensities(&[i1, i2]).unwrap();
        assert_relative_eq!(b2[0], i1 / (i1 + i2), epsilon = 1e-14);
    }

    fn noiseless_trace(model: ResponseModel, phis: &[f64], scale: f64) -> BrightnessTrace {
        let gammas: Vec<f64> = match model {
            ResponseModel::Odmr { .. } => (0..41).map(|i| -8.0 + 16.0 * i as f64 / 40.0).collect(),
            ResponseModel::Rabi => (0..41).map(|i| 0.1 + 6.0 * i as f64 / 40.0).collect(),
        };
        let mut brightnesses = Vec::new();
        let mut budgets = Vec::new();
        for &g in &gammas {
            let intensities: Vec<f64> = phis.iter().map(|&p| model.intensity(g, p).max(1e-9)).collect();
            brightnesses.push(brightness_from_intensities(&intensities).unwrap());
            budgets.push(scale * intensities.iter().sum::<f64>());
        }
        BrightnessTrace::new(gammas, brightnesses, budgets).unwrap()
    }

    #[test]
    fn noiseless_odmr_fit_recovers_field() {
        let phis = [1.5, 3.2, 5.0, 0.8];
        let model = ResponseModel::odmr(0.5);
        let trace = noiseless_trace(model, &phis, 1e5);
        let fits = fit_field(&trace, model, None).unwrap();
        for (fit, &phi) in fits.iter().zip(&phis) {
            assert!((fit.phi - phi).abs() < 1e-6, "phi {} vs {}", fit.phi, phi);
        }
    }

    #[test]
    fn noiseless_rabi_fit_recovers_field() {
        let phis = [1.05, 1.4, 1.9, 2.6];
        let trace = noiseless_trace(ResponseModel::Rabi, &phis, 1e5);
        let fits = fit_field(&trace, ResponseModel::Rabi, None).unwrap();
        for (fit, &phi) in fits.iter().zip(&phis) {
            assert!((fit.phi - phi).abs() < 1e-6, "phi {} vs {}", fit.phi, phi);
        }
    }

    #[test]
    fn fit_is_scale_equivariant() {
        let phis = [1.3, 2.1];
        let model = ResponseModel::odmr(0.5);
        let base = noiseless_trace(model, &phis, 1e5);
        let scaled = BrightnessTrace::new(
            base.gammas.clone(),
            base.brightnesses.clone(),
            base.budgets.iter().map(|b| b * 7.5).collect(),
        )
        .unwrap();
        let f1 = fit_field(&base, model, None).unwrap();
        let f2 = fit_field(&scaled, model, None).unwrap();
        for (a, b) in f1.iter().zip(&f2) {
            assert_relative_eq!(a.phi, b.phi, epsilon = 1e-8);
            assert_relative_eq!(b.amplitude / a.amplitude, 7.5, epsilon = 1e-6);
        }
    }
}
