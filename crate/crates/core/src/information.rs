//! Quantum and classical Fisher information: the closed-form two-source QFIM,
//! SLD construction, the general brightness QFIM block via Lyapunov solves in
//! the density-operator eigenbasis, finite-difference CFIMs, the
//! nuisance-partitioned QCRB, and the calibration/sensing allocation optimum.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::invert;
use crate::scene::EigenbasisRep;

/// Two-emitter scene in midpoint / half-separation / brightness-bias
/// coordinates: emitters at `x0 -+ s` with brightnesses `1/2 -+ kappa`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoSourceParams {
    pub midpoint: f64,
    pub half_separation: f64,
    pub kappa: f64,
    pub sigma: f64,
}

impl TwoSourceParams {
    pub fn new(midpoint: f64, half_separation: f64, kappa: f64, sigma: f64) -> Result<Self> {
        if !(half_separation > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "half separation {half_separation} must be positive"
            )));
        }
        if !(kappa.abs() < 0.5) {
            return Err(Error::InvalidParameter(format!("|kappa| = {} must be < 1/2", kappa.abs())));
        }
        if !(sigma > 0.0) {
            return Err(Error::InvalidParameter("sigma must be positive".into()));
        }
        Ok(Self { midpoint, half_separation, kappa, sigma })
    }

    /// State overlap phi = exp(-(s/sigma)^2 / 2); the emitters sit 2s apart.
    pub fn overlap(&self) -> f64 {
        (-0.5 * (self.half_separation / self.sigma).powi(2)).exp()
    }

    pub fn brightnesses(&self) -> [f64; 2] {
        [0.5 - self.kappa, 0.5 + self.kappa]
    }

    pub fn positions(&self) -> [f64; 2] {
        [self.midpoint - self.half_separation, self.midpoint + self.half_separation]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FisherKind {
    Quantum,
    Classical,
}

/// Symmetric positive-semidefinite information matrix with parameter labels.
#[derive(Debug, Clone)]
pub struct FisherMatrix {
    pub entries: DMatrix<f64>,
    pub labels: Vec<String>,
    pub kind: FisherKind,
}

impl FisherMatrix {
    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

/// Closed-form 3x3 QFIM of the two-source scene, parameters (x0, s, kappa).
pub fn qfim_two_source(p: &TwoSourceParams) -> FisherMatrix {
    let sigma2 = p.sigma * p.sigma;
    let phi = p.overlap();
    let phi2 = phi * phi;
    let nu = 4.0 * p.kappa * p.kappa;
    let h = (p.half_separation * phi / p.sigma).powi(2);
    let entries = DMatrix::from_row_slice(3, 3, &[
        (1.0 - h * (1.0 - nu)) / sigma2,
        2.0 * p.kappa / sigma2,
        2.0 * p.half_separation * phi2 / sigma2,
        2.0 * p.kappa / sigma2,
        1.0 / sigma2,
        0.0,
        2.0 * p.half_separation * phi2 / sigma2,
        0.0,
        4.0 * (1.0 - phi2) / (1.0 - nu),
    ]);
    FisherMatrix {
        entries,
        labels: vec!["x0".into(), "s".into(), "kappa".into()],
        kind: FisherKind::Quantum,
    }
}

/// Symmetric logarithmic derivative of the brightness bias in the e+- basis,
/// together with its (normalized) eigenvector pair ordered as (detector for
/// state 1, detector for state 2) — identical to the Helstrom projectors.
#[derive(Debug, Clone)]
pub struct SldBrightness {
    /// 2x2 SLD matrix in the ordered {e+, e-} basis.
    pub matrix: DMatrix<f64>,
    pub eigenvector_1: [f64; 2],
    pub eigenvector_2: [f64; 2],
}

pub fn sld_brightness_two_source(p: &TwoSourceParams) -> Result<SldBrightness> {
    let phi = p.overlap();
    let c = (1.0 - phi * phi).sqrt();
    let tau = 1.0 - 4.0 * p.kappa * p.kappa;
    let matrix = DMatrix::from_row_slice(2, 2, &[
        -4.0 * p.kappa * (1.0 - phi) / tau,
        2.0 * c / tau,
        2.0 * c / tau,
        -4.0 * p.kappa * (1.0 + phi) / tau,
    ]);
    let [b1, b2] = p.brightnesses();
    let h = crate::measurement::helstrom_binary(b1, b2, phi)?;
    Ok(SldBrightness { matrix, eigenvector_1: h.projector_1, eigenvector_2: h.projector_2 })
}

/// Density operator of the two-source scene in the e+- basis.
pub fn rho_two_source_epm(p: &TwoSourceParams) -> DMatrix<f64> {
    let phi = p.overlap();
    let c = (1.0 - phi * phi).sqrt();
    DMatrix::from_row_slice(2, 2, &[
        (1.0 + phi) / 2.0,
        p.kappa * c,
        p.kappa * c,
        (1.0 - phi) / 2.0,
    ])
}

/// Antisymmetric difference operator Delta_- in the e+- basis (the kappa
/// derivative of the density operator).
pub fn delta_minus_epm(p: &TwoSourceParams) -> DMatrix<f64> {
    let phi = p.overlap();
    let c = (1.0 - phi * phi).sqrt();
    DMatrix::from_row_slice(2, 2, &[0.0, c, c, 0.0])
}

/// Brightness-block QFIM in the chart (b_1, ..., b_{K-1}) with
/// b_K = 1 - sum of the rest, so each derivative state is
/// `psi_k psi_k^H - psi_K psi_K^H`. SLDs are solved elementwise in the
/// eigenbasis where the density operator is diagonal.
pub fn qfim_brightness_block(rep: &EigenbasisRep) -> Result<FisherMatrix> {
    let k = rep.dim();
    if k < 2 {
        return Err(Error::InvalidParameter("brightness QFIM needs at least two emitters".into()));
    }
    let lambda = rep.eigenvalues();
    if lambda.min() < 1e-12 {
        return Err(Error::RankDeficient(format!(
            "density-operator eigenvalue {:.3e} below 1e-12",
            lambda.min()
        )));
    }
    let psi = rep.psi();

    // d rho / d b_j as Hermitian matrices in the eigenbasis.
    let outer = |j: usize| -> DMatrix<nalgebra::Complex<f64>> {
        let col = psi.column(j);
        &col * col.adjoint()
    };
    let last = outer(k - 1);
    let mut slds = Vec::with_capacity(k - 1);
    for j in 0..k - 1 {
        let drho = outer(j) - &last;
        let mut l = drho.clone();
        for a in 0..k {
            for b in 0..k {
                l[(a, b)] = drho[(a, b)] * nalgebra::Complex::new(2.0 / (lambda[a] + lambda[b]), 0.0);
            }
        }
        slds.push(l);
    }

    let mut entries = DMatrix::zeros(k - 1, k - 1);
    for i in 0..k - 1 {
        for j in i..k - 1 {
            // tr[rho (L_i o L_j)] with rho = diag(lambda).
            let prod = &slds[i] * &slds[j];
            let mut v = 0.0;
            for a in 0..k {
                v += lambda[a] * prod[(a, a)].re;
            }
            entries[(i, j)] = v;
            entries[(j, i)] = v;
        }
    }
    let labels = (0..k - 1).map(|i| format!("b{}", i + 1)).collect();
    Ok(FisherMatrix { entries, labels, kind: FisherKind::Quantum })
}

/// Minimum total brightness imprecision: trace of the inverse information
/// matrix.
pub fn brightness_imprecision(fisher: &FisherMatrix) -> Result<f64> {
    let inv = invert(&fisher.entries, "brightness Fisher matrix")?;
    Ok(inv.trace())
}

/// Options for the finite-difference classical Fisher information.
#[derive(Debug, Clone)]
pub struct CfimOptions {
    /// Central-difference step in natural units.
    pub step: f64,
    /// Outcomes with probability below this are excluded from the sum.
    pub prob_floor: f64,
    /// Allowed deviation of each probability vector from unit sum.
    pub simplex_tol: f64,
}

impl Default for CfimOptions {
    fn default() -> Self {
        Self { step: 1e-5, prob_floor: 1e-14, simplex_tol: 1e-6 }
    }
}

/// Classical Fisher information of a finite outcome model by central
/// differences: `I_ij = sum_k (d_i p_k)(d_j p_k) / p_k`.
///
/// Continuous direct-imaging measurements enter through quadrature: pass the
/// density sampled on a grid times the cell measure (see
/// [`di_outcome_model_2d`]), which turns the integral into the same sum.
pub fn cfim<F>(model: F, theta: &[f64], labels: &[&str], opts: &CfimOptions) -> Result<FisherMatrix>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let dim = theta.len();
    if labels.len() != dim {
        return Err(Error::InvalidParameter("one label per parameter required".into()));
    }
    let check = |p: &[f64]| -> Result<()> {
        let sum: f64 = p.iter().sum();
        if p.iter().any(|&x| x < -1e-12) || (sum - 1.0).abs() > opts.simplex_tol {
            return Err(Error::InvalidSimplex(format!(
                "model probabilities sum to {sum} (tolerance {})",
                opts.simplex_tol
            )));
        }
        Ok(())
    };

    let base = model(theta)?;
    check(&base)?;
    let mut derivs: Vec<Vec<f64>> = Vec::with_capacity(dim);
    let mut probe = theta.to_vec();
    for i in 0..dim {
        let t = theta[i];
        probe[i] = t + opts.step;
        let plus = model(&probe)?;
        check(&plus)?;
        probe[i] = t - opts.step;
        let minus = model(&probe)?;
        check(&minus)?;
        probe[i] = t;
        if plus.len() != base.len() || minus.len() != base.len() {
            return Err(Error::InvalidParameter("model outcome count changed under perturbation".into()));
        }
        derivs.push(
            plus.iter().zip(&minus).map(|(a, b)| (a - b) / (2.0 * opts.step)).collect(),
        );
    }

    let mut entries = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        for j in i..dim {
            let mut acc = 0.0;
            for (k, &p) in base.iter().enumerate() {
                if p > opts.prob_floor {
                    acc += derivs[i][k] * derivs[j][k] / p;
                }
            }
            entries[(i, j)] = acc;
            entries[(j, i)] = acc;
        }
    }
    Ok(FisherMatrix {
        entries,
        labels: labels.iter().map(|s| s.to_string()).collect(),
        kind: FisherKind::Classical,
    })
}

/// Direct-imaging outcome model on a 2D quadrature grid for a parametric
/// scene builder: returns cell probabilities (density times cell area).
///
/// The grid spans `extent + scene_radius` around the origin at the given
/// spacing; callers keep the builder's scenes inside that radius.
pub fn di_outcome_model_2d<B>(
    builder: B,
    sigma: f64,
    scene_radius: f64,
    spacing: f64,
) -> impl Fn(&[f64]) -> Result<Vec<f64>>
where
    B: Fn(&[f64]) -> Result<(Vec<[f64; 2]>, Vec<f64>)>,
{
    let extent = 6.0 * sigma + scene_radius;
    let n = (2.0 * extent / spacing).round() as usize + 1;
    let axis: Vec<f64> = (0..n).map(|i| -extent + spacing * i as f64).collect();
    move |theta: &[f64]| {
        let (positions, weights) = builder(theta)?;
        let cell = spacing * spacing;
        let norm = 1.0 / (2.0 * std::f64::consts::PI * sigma * sigma);
        let inv2s2 = 1.0 / (2.0 * sigma * sigma);
        let mut out = Vec::with_capacity(axis.len() * axis.len());
        for &y in &axis {
            for &x in &axis {
                let mut dens = 0.0;
                for (r, &b) in positions.iter().zip(&weights) {
                    let dx = x - r[0];
                    let dy = y - r[1];
                    dens += b * (-(dx * dx + dy * dy) * inv2s2).exp();
                }
                out.push(dens * norm * cell);
            }
        }
        Ok(out)
    }
}

/// QCRB on the target block with the remaining parameters treated as
/// nuisance: inverse of the Schur complement
/// `Q_tt - Q_tn Q_nn^{-1} Q_nt`.
pub fn nuisance_qcrb(fisher: &FisherMatrix, target_labels: &[&str]) -> Result<DMatrix<f64>> {
    let dim = fisher.dim();
    let mut targets = Vec::new();
    for label in target_labels {
        let idx = fisher
            .label_index(label)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown label {label}")))?;
        targets.push(idx);
    }
    let nuisance: Vec<usize> = (0..dim).filter(|i| !targets.contains(i)).collect();
    let sub = |rows: &[usize], cols: &[usize]| {
        DMatrix::from_fn(rows.len(), cols.len(), |i, j| fisher.entries[(rows[i], cols[j])])
    };
    let q_tt = sub(&targets, &targets);
    if nuisance.is_empty() {
        return invert(&q_tt, "target Fisher block");
    }
    let q_tn = sub(&targets, &nuisance);
    let q_nn = sub(&nuisance, &nuisance);
    let q_nt = sub(&nuisance, &targets);
    let q_nn_inv = invert(&q_nn, "nuisance Fisher block")?;
    let schur = q_tt - q_tn * q_nn_inv * q_nt;
    invert(&schur, "Schur complement")
}

/// Residual of the allocation quartic `nu^2 b^4 - 2 nu b^2 - 2(1-nu) b + 1`.
pub fn allocation_quartic(beta: f64, nu: f64) -> f64 {
    nu * nu * beta.powi(4) - 2.0 * nu * beta * beta - 2.0 * (1.0 - nu) * beta + 1.0
}

/// Optimal calibration/sensing allocation in the sub-diffraction limit: the
/// unique quartic root in [0, 1]. Exactly 1/2 for kappa = 0.
pub fn optimal_allocation(kappa: f64) -> Result<f64> {
    if !(kappa.abs() < 0.5) {
        return Err(Error::InvalidParameter(format!("|kappa| = {} must be < 1/2", kappa.abs())));
    }
    let nu = 4.0 * kappa * kappa;
    if nu == 0.0 {
        return Ok(0.5);
    }
    // The quartic is strictly decreasing on [0, 1]: bisection, then Newton.
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if allocation_quartic(mid, nu) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 {
            break;
        }
    }
    let mut beta = 0.5 * (lo + hi);
    for _ in 0..8 {
        let f = allocation_quartic(beta, nu);
        let df = 4.0 * nu * nu * beta.powi(3) - 4.0 * nu * beta - 2.0 * (1.0 - nu);
        if df.abs() < 1e-30 {
            break;
        }
        let next = beta - f / df;
        if (next - beta).abs() < 1e-15 {
            beta = next;
            break;
        }
        beta = next.clamp(0.0, 1.0);
    }
    Ok(beta)
}

/// Closed-form QCRB on the brightness bias with positions as nuisance
/// parameters, split between a calibration block and a sensing block.
///
/// `beta` here is the fraction that multiplies the sensing-stage QFIM in the
/// additive information budget (the quartic above is stationary in the same
/// variable); `total` is M + N.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AllocatedQcrb {
    pub exact: f64,
    pub sub_diffraction: f64,
}

pub fn allocated_brightness_qcrb(p: &TwoSourceParams, beta: f64, total: f64) -> Result<AllocatedQcrb> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::InvalidParameter(format!("beta {beta} must lie in (0, 1)")));
    }
    if !(total > 0.0) {
        return Err(Error::InvalidParameter("photon total must be positive".into()));
    }
    let phi2 = p.overlap().powi(2);
    let nu = 4.0 * p.kappa * p.kappa;
    let h = (p.half_separation * p.overlap() / p.sigma).powi(2);

    let numerator = (1.0 - nu) * (1.0 - nu * beta * beta - h * (1.0 - nu * beta));
    let denominator = 4.0
        * beta
        * ((1.0 - nu * beta * beta) * (1.0 - phi2) - h * (1.0 - nu * beta - (1.0 - beta) * phi2));
    let exact = numerator / denominator / total;

    let ratio = (p.sigma / p.half_separation).powi(2);
    let bracket = 1.0 / (beta * (1.0 - nu)) - 1.0 / (1.0 - nu * beta * beta);
    let sub_diffraction = ratio / (4.0 * beta * beta) / bracket / total;

    Ok(AllocatedQcrb { exact, sub_diffraction })
}
