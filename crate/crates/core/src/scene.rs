//! Emitter ensembles, the Gaussian PSF, Gram matrices, and the eigenbasis
//! representation of convex state expansions.
//!
//! All lengths are expressed in units of the PSF width `sigma`; the stored
//! `psf_width` only matters at I/O boundaries. The overlap between two
//! emitter states imaged through a Gaussian PSF is
//! `exp(-|r_i - r_j|^2 / (8 sigma^2))`, which is all downstream code ever
//! needs about the PSF.

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{sym_eigen_sorted, CMatrix};

/// Simplex tolerance used for brightness vectors.
pub const SIMPLEX_TOL: f64 = 1e-12;
/// Positions closer than this (in units of sigma) make the Gram matrix
/// numerically singular.
pub const DEGENERATE_SEP_TOL: f64 = 1e-9;
/// Gram eigenvalues below this fraction of the largest are treated as rank
/// deficiency; Lyapunov solves diverge below it.
pub const GRAM_RANK_TOL: f64 = 1e-12;

/// A K-emitter scene: positions (units of sigma), relative brightnesses on
/// the open probability simplex, and the PSF width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmitterEnsemble {
    positions: Vec<[f64; 2]>,
    brightnesses: Vec<f64>,
    psf_width: f64,
}

/// Checks that `b` lies on the probability simplex within `SIMPLEX_TOL` with
/// strictly positive entries.
pub fn validate_simplex(b: &[f64]) -> Result<()> {
    if b.is_empty() {
        return Err(Error::InvalidSimplex("empty vector".into()));
    }
    if b.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::InvalidSimplex(format!("non-positive entry in {b:?}")));
    }
    let sum: f64 = b.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOL.max(1e-12 * b.len() as f64) {
        return Err(Error::InvalidSimplex(format!("entries sum to {sum}, not 1")));
    }
    Ok(())
}

impl EmitterEnsemble {
    pub fn new(positions: Vec<[f64; 2]>, brightnesses: Vec<f64>, psf_width: f64) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::InvalidScene("no emitters".into()));
        }
        if positions.len() != brightnesses.len() {
            return Err(Error::InvalidScene(format!(
                "{} positions but {} brightnesses",
                positions.len(),
                brightnesses.len()
            )));
        }
        if !(psf_width > 0.0) {
            return Err(Error::InvalidScene(format!("psf width {psf_width} must be positive")));
        }
        validate_simplex(&brightnesses)?;
        if positions.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
            return Err(Error::InvalidScene("non-finite position".into()));
        }
        if positions.len() >= 2 {
            let d = min_pairwise_separation(&positions)?;
            if d < DEGENERATE_SEP_TOL * psf_width {
                return Err(Error::DegeneratePositions {
                    min_sep: d,
                    threshold: DEGENERATE_SEP_TOL * psf_width,
                });
            }
        }
        Ok(Self { positions, brightnesses, psf_width })
    }

    /// Scene with equal brightness for every emitter (the calibration state).
    pub fn uniform(positions: Vec<[f64; 2]>, psf_width: f64) -> Result<Self> {
        let k = positions.len();
        Self::new(positions, vec![1.0 / k as f64; k], psf_width)
    }

    pub fn emitter_count(&self) -> usize {
        self.positions.len()
    }

    pub fn positions(&self) -> &[[f64; 2]] {
        &self.positions
    }

    pub fn brightnesses(&self) -> &[f64] {
        &self.brightnesses
    }

    pub fn psf_width(&self) -> f64 {
        self.psf_width
    }

    /// Geometric center (unweighted mean position).
    pub fn centroid(&self) -> [f64; 2] {
        let k = self.positions.len() as f64;
        let (mut cx, mut cy) = (0.0, 0.0);
        for p in &self.positions {
            cx += p[0];
            cy += p[1];
        }
        [cx / k, cy / k]
    }

    /// Same positions, different brightness vector.
    pub fn with_brightnesses(&self, brightnesses: Vec<f64>) -> Result<Self> {
        Self::new(self.positions.clone(), brightnesses, self.psf_width)
    }
}

/// K x K matrix of pairwise emitter-state overlaps; symmetric positive
/// definite with unit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    entries: DMatrix<f64>,
}

impl GramMatrix {
    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }
}

/// Emitter states written in the eigenbasis of the density operator, plus the
/// operator's eigenvalues and the priors that built it.
///
/// Column k of `psi` is the k-th emitter state; `psi^H psi` reproduces the
/// Gram matrix and `psi diag(priors) psi^H = diag(eigenvalues)`.
#[derive(Debug, Clone)]
pub struct EigenbasisRep {
    psi: CMatrix,
    eigenvalues: DVector<f64>,
    priors: Vec<f64>,
}

impl EigenbasisRep {
    pub fn psi(&self) -> &CMatrix {
        &self.psi
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn priors(&self) -> &[f64] {
        &self.priors
    }

    pub fn dim(&self) -> usize {
        self.priors.len()
    }

    /// Density operator in its own eigenbasis: diag(eigenvalues).
    pub fn rho_diagonal(&self) -> DVector<f64> {
        self.eigenvalues.clone()
    }
}

/// Squared Euclidean distance of two planar points.
fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

/// Overlap of two PSF-blurred emitter states separated by `d` (units of
/// sigma): exp(-d^2 / 8 sigma^2).
pub fn state_overlap(d2: f64, sigma: f64) -> f64 {
    (-d2 / (8.0 * sigma * sigma)).exp()
}

/// Gram matrix of the ensemble's emitter states.
pub fn gram_matrix(ensemble: &EmitterEnsemble) -> Result<GramMatrix> {
    let k = ensemble.emitter_count();
    let sigma = ensemble.psf_width();
    if k >= 2 {
        let d = min_pairwise_separation(ensemble.positions())?;
        if d < DEGENERATE_SEP_TOL * sigma {
            return Err(Error::DegeneratePositions {
                min_sep: d,
                threshold: DEGENERATE_SEP_TOL * sigma,
            });
        }
    }
    let pos = ensemble.positions();
    let entries = DMatrix::from_fn(k, k, |i, j| state_overlap(dist2(pos[i], pos[j]), sigma));
    Ok(GramMatrix { entries })
}

/// Overlaps between two position sets: entry (j, k) couples `positions_a[j]`
/// to `positions_b[k]`. With `a == b` this reproduces the Gram matrix.
pub fn cross_gram(positions_a: &[[f64; 2]], positions_b: &[[f64; 2]], sigma: f64) -> Result<DMatrix<f64>> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidParameter(format!("sigma {sigma} must be positive")));
    }
    Ok(DMatrix::from_fn(positions_a.len(), positions_b.len(), |j, k| {
        state_overlap(dist2(positions_a[j], positions_b[k]), sigma)
    }))
}

/// Minimum pairwise separation over all emitter pairs.
pub fn min_pairwise_separation(positions: &[[f64; 2]]) -> Result<f64> {
    if positions.len() < 2 {
        return Err(Error::EmptyInput(
            "minimum pairwise separation needs at least two emitters".into(),
        ));
    }
    let mut best = f64::INFINITY;
    for i in 0..positions.len() {
        for j in i + 1..positions.len() {
            best = best.min(dist2(positions[i], positions[j]));
        }
    }
    Ok(best.sqrt())
}

/// Expresses the emitter states in the eigenbasis of the density operator
/// `rho = sum_k priors[k] |psi_k><psi_k|`.
///
/// From the spectral decomposition `G = U D U^T`, the matrix
/// `S = D^{1/2} U^T diag(priors) U D^{1/2}` shares its spectrum with `rho`;
/// diagonalizing `S = W diag(L) W^T` yields `psi = W^T D^{1/2} U^T`, which
/// satisfies `psi^H psi = G` and `psi diag(priors) psi^H = diag(L)`.
pub fn eigenbasis_representation(gram: &GramMatrix, priors: &[f64]) -> Result<EigenbasisRep> {
    let k = gram.dim();
    if priors.len() != k {
        return Err(Error::InvalidSimplex(format!(
            "{} priors for a {k}-state Gram matrix",
            priors.len()
        )));
    }
    validate_simplex(priors)?;

    let (d, u) = sym_eigen_sorted(gram.entries());
    if d[k - 1] < GRAM_RANK_TOL * d[0].max(f64::MIN_POSITIVE) {
        return Err(Error::RankDeficient(format!(
            "smallest Gram eigenvalue {:.3e} below {:.1e} of largest {:.3e}",
            d[k - 1],
            GRAM_RANK_TOL,
            d[0]
        )));
    }

    let d_sqrt = DMatrix::from_diagonal(&d.map(|x| x.sqrt()));
    let b_diag = DMatrix::from_diagonal(&DVector::from_column_slice(priors));
    let s = &d_sqrt * u.transpose() * b_diag * &u * &d_sqrt;
    let s = (&s + s.transpose()) * 0.5;
    let (lambda, w) = sym_eigen_sorted(&s);
    let psi_real = w.transpose() * d_sqrt * u.transpose();

    let psi = psi_real.map(|x| Complex::new(x, 0.0));
    Ok(EigenbasisRep { psi, eigenvalues: lambda, priors: priors.to_vec() })
}

/// Eigenbasis representation of an ensemble's own density operator.
pub fn ensemble_eigenbasis(ensemble: &EmitterEnsemble) -> Result<EigenbasisRep> {
    eigenbasis_representation(&gram_matrix(ensemble)?, ensemble.brightnesses())
}
