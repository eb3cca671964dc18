//! Photon-level simulation and estimation toolkit for SPADE-enhanced
//! super-resolution sensing of sub-diffraction emitter ensembles.
//!
//! The crate models a two-stage measurement protocol for ensembles of point
//! emitters packed below the diffraction limit of a Gaussian-PSF imaging
//! system. A calibration stage localizes the emitters from direct imaging
//! plus Hermite-Gauss mode sorting; a sensing stage estimates per-emitter
//! brightnesses with a minimum-error (YKL) mode sorter designed from the
//! calibration output. Field-recovery experiments (CW-ODMR, Rabi) sit on
//! top, along with the quantum/classical Fisher-information machinery that
//! bounds every estimator, a sequential Bayesian variant for emitter pairs,
//! and a batch experiment driver with deterministic, seeded outputs.
//!
//! Lengths are measured in units of the PSF width throughout; the PSF width
//! itself only matters when reading or writing scene descriptions.

pub mod bayes;
pub mod error;
pub mod estimation;
pub mod grid;
pub mod information;
pub mod linalg;
pub mod measurement;
pub mod optim;
pub mod protocol;
pub mod rng;
pub mod scene;
pub mod sensing;

pub use error::{Error, Result};
pub use scene::{EmitterEnsemble, GramMatrix};
