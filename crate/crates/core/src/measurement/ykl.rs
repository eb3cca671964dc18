//! Minimum-error (YKL) state discrimination measurements.
//!
//! For two states the optimal projectors follow in closed form from the
//! difference operator; for K states the measurement unitary is found by
//! Riemannian descent on U(K) of the error probability
//! `P_e(U) = 1 - sum_k b_k |(U^H Psi)_kk|^2`, best-of-restarts with the
//! identity and the square-root ("pretty good") measurement as warm starts.

use nalgebra::{Complex, DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::linalg::{fix_column_phases_by_peak, qr_unitarize, unitarity_defect, CMatrix};
use crate::optim::{minimize_on_unitary, UnitaryDescentOptions};
use crate::scene::{
    cross_gram, eigenbasis_representation, gram_matrix, validate_simplex, EigenbasisRep,
    EmitterEnsemble,
};

/// Binary minimum-error measurement in the orthonormal e+- basis spanned by
/// the symmetric/antisymmetric combinations of the two states.
#[derive(Debug, Clone)]
pub struct HelstromBinary {
    /// Detector for state 1, coordinates in the e+- basis.
    pub projector_1: [f64; 2],
    /// Detector for state 2.
    pub projector_2: [f64; 2],
    /// Minimum error probability (1 - sqrt(1 - 4 b1 b2 phi^2)) / 2.
    pub error_probability: f64,
}

/// Closed-form binary YKL/Helstrom measurement for priors `(b1, b2)` and
/// state overlap `phi`.
///
/// The detectors are the eigenvectors of `b2 |psi2><psi2| - b1 |psi1><psi1|`;
/// the one attached to the negative eigenvalue detects state 1. Each returned
/// vector has its first nonzero component made positive.
pub fn helstrom_binary(b1: f64, b2: f64, phi: f64) -> Result<HelstromBinary> {
    if !(b1 > 0.0) || !(b2 > 0.0) || (b1 + b2 - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidSimplex(format!("priors ({b1}, {b2}) must be positive and sum to 1")));
    }
    if !(0.0..1.0).contains(&phi) {
        return Err(Error::InvalidParameter(format!("overlap {phi} must lie in [0, 1)")));
    }
    let kappa = (b2 - b1) / 2.0;
    let a = 2.0 * kappa * phi;
    let c = (1.0 - phi * phi).sqrt();
    let g = (1.0 - 4.0 * b1 * b2 * phi * phi).sqrt();

    let normalize_signed = |mut v: [f64; 2]| -> [f64; 2] {
        let norm = (v[0] * v[0] + v[1] * v[1]).sqrt();
        v[0] /= norm;
        v[1] /= norm;
        let lead = if v[0].abs() > 1e-12 { v[0] } else { v[1] };
        if lead < 0.0 {
            v[0] = -v[0];
            v[1] = -v[1];
        }
        v
    };

    // Negative eigenvector detects state 1, positive detects state 2.
    let projector_1 = normalize_signed([a - g, c]);
    let projector_2 = normalize_signed([a + g, c]);
    let error_probability = 0.5 * (1.0 - g);
    Ok(HelstromBinary { projector_1, projector_2, error_probability })
}

/// Options for the manifold YKL solver.
#[derive(Debug, Clone)]
pub struct YklOptions {
    /// Total number of starts: identity, square-root measurement, then random
    /// unitaries (any count beyond the two warm starts).
    pub restarts: usize,
    /// Riemannian gradient-norm tolerance.
    pub tol: f64,
    pub max_iters: usize,
    /// Seed for the random restarts.
    pub seed: u64,
}

impl Default for YklOptions {
    fn default() -> Self {
        Self { restarts: 8, tol: 1e-9, max_iters: 5000, seed: 0 }
    }
}

/// Result of the manifold optimization alone (no scene bookkeeping).
#[derive(Debug, Clone)]
pub struct YklSolution {
    /// Columns are YKL states in the eigenbasis of the design density operator.
    pub unitary: CMatrix,
    pub min_error: f64,
    pub grad_norm: f64,
    pub converged: bool,
}

fn error_probability(u: &CMatrix, psi: &CMatrix, priors: &[f64]) -> f64 {
    let overlap = u.adjoint() * psi;
    let mut success = 0.0;
    for (k, &b) in priors.iter().enumerate() {
        success += b * overlap[(k, k)].norm_sqr();
    }
    1.0 - success
}

fn error_gradient(u: &CMatrix, psi: &CMatrix, priors: &[f64]) -> CMatrix {
    // d/dU* of (1 - sum_k b_k |(U^H Psi)_kk|^2) = -Psi diag(b_k conj(c_k));
    // the factor 2 makes this the gradient of the real-valued cost.
    let overlap = u.adjoint() * psi;
    let k = priors.len();
    let mut scale = DVector::from_element(k, Complex::new(0.0, 0.0));
    for (i, &b) in priors.iter().enumerate() {
        scale[i] = overlap[(i, i)].conj() * Complex::new(2.0 * b, 0.0);
    }
    -psi * CMatrix::from_diagonal(&scale)
}

fn random_unitary(k: usize, rng: &mut ChaCha12Rng) -> CMatrix {
    let ginibre = CMatrix::from_fn(k, k, |_, _| {
        let re: f64 = rng.sample(rand_distr::StandardNormal);
        let im: f64 = rng.sample(rand_distr::StandardNormal);
        Complex::new(re, im)
    });
    qr_unitarize(&ginibre)
}

/// Square-root ("pretty good") measurement unitary: `Lambda^{-1/2} Psi B^{1/2}`.
fn square_root_measurement(rep: &EigenbasisRep) -> CMatrix {
    let k = rep.dim();
    let lam_inv_sqrt = CMatrix::from_diagonal(&DVector::from_iterator(
        k,
        rep.eigenvalues().iter().map(|&l| Complex::new(1.0 / l.sqrt(), 0.0)),
    ));
    let b_sqrt = CMatrix::from_diagonal(&DVector::from_iterator(
        k,
        rep.priors().iter().map(|&b| Complex::new(b.sqrt(), 0.0)),
    ));
    qr_unitarize(&(lam_inv_sqrt * rep.psi() * b_sqrt))
}

/// Minimizes the discrimination error over U(K) for the states in `rep`.
pub fn solve_ykl(rep: &EigenbasisRep, opts: &YklOptions) -> Result<YklSolution> {
    if opts.restarts < 1 {
        return Err(Error::InvalidParameter("solve_ykl needs at least one restart".into()));
    }
    let k = rep.dim();
    let psi = rep.psi().clone();
    let priors = rep.priors().to_vec();
    let cost = |u: &CMatrix| error_probability(u, &psi, &priors);
    let egrad = |u: &CMatrix| error_gradient(u, &psi, &priors);

    let descent_opts = UnitaryDescentOptions {
        max_iters: opts.max_iters,
        grad_tol: opts.tol,
        ..Default::default()
    };

    let mut rng = ChaCha12Rng::seed_from_u64(opts.seed);
    let mut starts: Vec<CMatrix> = vec![CMatrix::identity(k, k), square_root_measurement(rep)];
    while starts.len() < opts.restarts.max(2) {
        starts.push(random_unitary(k, &mut rng));
    }
    starts.truncate(opts.restarts.max(2));

    let mut best: Option<YklSolution> = None;
    for start in &starts {
        let run = minimize_on_unitary(&cost, &egrad, start, &descent_opts);
        let candidate = YklSolution {
            unitary: run.u,
            min_error: run.cost,
            grad_norm: run.grad_norm,
            converged: run.converged,
        };
        let better = match &best {
            None => true,
            Some(b) => candidate.min_error < b.min_error,
        };
        if better {
            best = Some(candidate);
        }
    }
    let mut solution = best.expect("at least one start");
    fix_column_phases_by_peak(&mut solution.unitary);
    solution.min_error = solution.min_error.clamp(0.0, 1.0);
    Ok(solution)
}

/// A YKL-SPADE measurement bound to the design scene it was built from.
///
/// `unitary` columns are the YKL states in the eigenbasis of the design-time
/// density operator; outcome k detects emitter k of the design, and an extra
/// bucket outcome (last) captures the orthogonal complement of the design
/// span.
#[derive(Debug, Clone)]
pub struct YklMeasurement {
    unitary: CMatrix,
    design_positions: Vec<[f64; 2]>,
    design_priors: Vec<f64>,
    sigma: f64,
    min_error: f64,
    converged: bool,
    /// (Psi^{-1})^H, cached for outcome-probability evaluation.
    psi_inv_adjoint: CMatrix,
}

impl YklMeasurement {
    /// Builds the measurement for estimated positions and prior brightnesses.
    pub fn build(
        design_positions: &[[f64; 2]],
        design_priors: &[f64],
        sigma: f64,
        opts: &YklOptions,
    ) -> Result<Self> {
        validate_simplex(design_priors)?;
        let scene = EmitterEnsemble::new(design_positions.to_vec(), design_priors.to_vec(), sigma)?;
        let gram = gram_matrix(&scene)?;
        let rep = eigenbasis_representation(&gram, design_priors)?;
        let solution = solve_ykl(&rep, opts)?;
        let psi_inv = rep
            .psi()
            .clone()
            .lu()
            .try_inverse()
            .ok_or_else(|| Error::SingularMatrix("Psi in YKL measurement".into()))?;
        Ok(Self {
            unitary: solution.unitary,
            design_positions: design_positions.to_vec(),
            design_priors: design_priors.to_vec(),
            sigma,
            min_error: solution.min_error,
            converged: solution.converged,
            psi_inv_adjoint: psi_inv.adjoint(),
        })
    }

    pub fn unitary(&self) -> &CMatrix {
        &self.unitary
    }

    pub fn design_positions(&self) -> &[[f64; 2]] {
        &self.design_positions
    }

    pub fn design_priors(&self) -> &[f64] {
        &self.design_priors
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn min_error(&self) -> f64 {
        self.min_error
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    pub fn emitter_count(&self) -> usize {
        self.design_priors.len()
    }

    pub fn unitarity_defect(&self) -> f64 {
        unitarity_defect(&self.unitary)
    }

    /// `<upsilon_k | psi(r_j)>` for arbitrary true positions, through the
    /// cross-Gram coupling between design and true states.
    fn mode_state_overlaps(&self, true_positions: &[[f64; 2]]) -> Result<CMatrix> {
        let cross = cross_gram(&self.design_positions, true_positions, self.sigma)?
            .map(|x| Complex::new(x, 0.0));
        Ok(self.unitary.adjoint() * &self.psi_inv_adjoint * cross)
    }

    /// Design self-coupling matrix: row k < K gives `|<upsilon_k|psi_j>|^2`
    /// for the design states, last row is the bucket completion. Used as the
    /// estimator's forward model.
    pub fn design_coupling(&self) -> Result<DMatrix<f64>> {
        self.coupling_for(&self.design_positions)
    }

    /// Coupling matrix to arbitrary true positions, bucket row last.
    pub fn coupling_for(&self, true_positions: &[[f64; 2]]) -> Result<DMatrix<f64>> {
        let overlaps = self.mode_state_overlaps(true_positions)?;
        let k = self.emitter_count();
        let j = true_positions.len();
        let mut coupling = DMatrix::zeros(k + 1, j);
        for col in 0..j {
            let mut used = 0.0;
            for row in 0..k {
                let p = overlaps[(row, col)].norm_sqr();
                coupling[(row, col)] = p;
                used += p;
            }
            coupling[(k, col)] = (1.0 - used).max(0.0);
        }
        Ok(coupling)
    }

    /// Expansion weights of YKL mode `k` over the design emitter states
    /// (`Psi^{-1} Upsilon` column k); used to render the spatial mode profile.
    pub fn mode_weights(&self, k: usize) -> Vec<Complex<f64>> {
        let w = self.psi_inv_adjoint.adjoint() * self.unitary.column(k);
        w.iter().copied().collect()
    }
}

/// Outcome probabilities of the YKL measurement applied to a (possibly
/// different) true ensemble: K detector outcomes first, bucket last.
pub fn ykl_outcome_probabilities(
    measurement: &YklMeasurement,
    true_ensemble: &EmitterEnsemble,
) -> Result<Vec<f64>> {
    if (true_ensemble.psf_width() - measurement.sigma()).abs() > 1e-12 {
        return Err(Error::InvalidParameter(
            "true ensemble and measurement use different PSF widths".into(),
        ));
    }
    let coupling = measurement.coupling_for(true_ensemble.positions())?;
    let k = measurement.emitter_count();
    let b = true_ensemble.brightnesses();
    let mut probs = vec![0.0; k + 1];
    for row in 0..k {
        probs[row] = (0..b.len()).map(|j| b[j] * coupling[(row, j)]).sum();
    }
    let used: f64 = probs[..k].iter().sum();
    probs[k] = (1.0 - used).max(0.0);
    Ok(probs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::state_overlap;
    use approx::assert_relative_eq;

    #[test]
    fn orthogonal_states_discriminate_perfectly() {
        let phi = 0.0;
        let h = helstrom_binary(0.5, 0.5, phi).unwrap();
        assert_relative_eq!(h.error_probability, 0.0, epsilon = 1e-15);
        // Detectors are (e+ -+ e-)/sqrt(2), i.e. the states themselves.
        assert_relative_eq!(h.projector_1[0], 1.0 / 2.0f64.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(h.projector_1[1], -1.0 / 2.0f64.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(h.projector_2[0], 1.0 / 2.0f64.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(h.projector_2[1], 1.0 / 2.0f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn balanced_pair_at_half_separation_sigma() {
        // Frozen from the closed form and cross-checked by the brute-force
        // eigensolve below: phi = e^{-1/2} gives P_e = 0.10246995...
        let phi = (-0.5f64).exp();
        let h = helstrom_binary(0.5, 0.5, phi).unwrap();
        assert_relative_eq!(h.error_probability, 0.10246995118967495, epsilon = 1e-14);

        // Brute-force: eigenvectors of Delta = b2 P2 - b1 P1 in e+- basis.
        let (b1, b2) = (0.5, 0.5);
        let kappa: f64 = (b2 - b1) / 2.0;
        let c = (1.0 - phi * phi).sqrt();
        let delta = DMatrix::from_row_slice(2, 2, &[
            kappa * (1.0 + phi),
            0.5 * c,
            0.5 * c,
            kappa * (1.0 - phi),
        ]);
        let eig = delta.symmetric_eigen();
        let success: f64 = (0..2).map(|i| eig.eigenvalues[i].max(0.0)).sum::<f64>() + b1;
        // P_e = 1 - (b1 + sum of positive eigenvalues of Delta).
        assert_relative_eq!(1.0 - success, h.error_probability, epsilon = 1e-12);
    }

    #[test]
    fn certain_prior_recovers_state_one() {
        let phi = 0.6;
        let h = helstrom_binary(1.0 - 1e-9, 1e-9, phi).unwrap();
        assert!(h.error_probability < 1e-8);
        // State 1 in the e+- basis.
        let psi1 = [((1.0 + phi) / 2.0f64).sqrt(), -((1.0 - phi) / 2.0f64).sqrt()];
        let dot = h.projector_1[0] * psi1[0] + h.projector_1[1] * psi1[1];
        assert!(dot.abs() > 1.0 - 1e-4, "projector_1 should align with state 1, dot = {dot}");
    }

    #[test]
    fn solver_matches_closed_form_for_two_states() {
        let s = 1.0; // half-separation sigma => separation 2 sigma
        let scene = EmitterEnsemble::uniform(vec![[-s, 0.0], [s, 0.0]], 1.0).unwrap();
        let rep = crate::scene::ensemble_eigenbasis(&scene).unwrap();
        let sol = solve_ykl(&rep, &YklOptions::default()).unwrap();
        let phi = state_overlap(4.0 * s * s, 1.0);
        let expected = helstrom_binary(0.5, 0.5, phi).unwrap().error_probability;
        assert_relative_eq!(sol.min_error, expected, epsilon = 1e-9);
        assert!(sol.converged);
        assert!(unitarity_defect(&sol.unitary) < 1e-10);
    }

    #[test]
    fn near_orthogonal_triangle_discriminates() {
        let side = 10.0;
        let pos = vec![
            [0.0, 0.0],
            [side, 0.0],
            [side / 2.0, side * 3.0f64.sqrt() / 2.0],
        ];
        let scene = EmitterEnsemble::uniform(pos, 1.0).unwrap();
        let rep = crate::scene::ensemble_eigenbasis(&scene).unwrap();
        let sol = solve_ykl(&rep, &YklOptions { restarts: 4, ..Default::default() }).unwrap();
        assert!(sol.min_error < 1e-6, "P_e = {}", sol.min_error);
    }

    #[test]
    fn identity_gram_yields_zero_error_permutation() {
        let pos = vec![[0.0, 0.0], [50.0, 0.0], [0.0, 50.0]];
        let scene = EmitterEnsemble::uniform(pos, 1.0).unwrap();
        let rep = crate::scene::ensemble_eigenbasis(&scene).unwrap();
        let sol = solve_ykl(&rep, &YklOptions { restarts: 3, ..Default::default() }).unwrap();
        assert!(sol.min_error < 1e-9);
        // |U^H Psi| should be a permutation of the identity.
        let overlap = sol.unitary.adjoint() * rep.psi();
        for col in 0..3 {
            let mags: Vec<f64> = (0..3).map(|r| overlap[(r, col)].norm()).collect();
            let peak = mags.iter().cloned().fold(0.0f64, f64::max);
            assert!(peak > 1.0 - 1e-6);
        }
    }

    #[test]
    fn exact_design_bucket_vanishes_and_error_matches() {
        let s = 0.5;
        let positions = vec![[-s, 0.0], [s, 0.0]];
        let priors = vec![0.5, 0.5];
        let m = YklMeasurement::build(&positions, &priors, 1.0, &YklOptions::default()).unwrap();
        let scene = EmitterEnsemble::uniform(positions.clone(), 1.0).unwrap();
        let q = ykl_outcome_probabilities(&m, &scene).unwrap();
        assert!(q[2].abs() < 1e-12, "bucket {}", q[2]);
        let phi = state_overlap(4.0 * s * s, 1.0);
        let pe_closed = helstrom_binary(0.5, 0.5, phi).unwrap().error_probability;
        // Error of the deployed measurement on the design state.
        let coupling = m.design_coupling().unwrap();
        let pe = 1.0 - (0.5 * coupling[(0, 0)] + 0.5 * coupling[(1, 1)]);
        assert_relative_eq!(pe, pe_closed, epsilon = 1e-8);
    }

    #[test]
    fn far_off_design_sends_everything_to_bucket() {
        let m = YklMeasurement::build(
            &[[-0.3, 0.0], [0.3, 0.0]],
            &[0.5, 0.5],
            1.0,
            &YklOptions::default(),
        )
        .unwrap();
        let shifted = EmitterEnsemble::uniform(vec![[99.7, 0.0], [100.3, 0.0]], 1.0).unwrap();
        let q = ykl_outcome_probabilities(&m, &shifted).unwrap();
        assert!(q[2] > 1.0 - 1e-12);
    }

    #[test]
    fn relabeling_emitters_permutes_but_preserves_error() {
        let positions = vec![[-0.2, 0.1], [0.3, 0.0], [0.0, -0.25]];
        let priors = vec![0.5, 0.2, 0.3];
        let opts = YklOptions::default();
        let m1 = YklMeasurement::build(&positions, &priors, 1.0, &opts).unwrap();

        let permuted_pos = vec![positions[2], positions[0], positions[1]];
        let permuted_priors = vec![priors[2], priors[0], priors[1]];
        let m2 = YklMeasurement::build(&permuted_pos, &permuted_priors, 1.0, &opts).unwrap();
        assert_relative_eq!(m1.min_error(), m2.min_error(), epsilon = 1e-7);
    }
}
