//! Reproducible RNG streams.
//!
//! A single master seed fans out into independent streams keyed by
//! `(trial, stage)`, so Monte Carlo trials can run in parallel while
//! replaying bit-identically from the seed alone.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Protocol stages that consume randomness, used as stream discriminators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    SceneGeneration = 0,
    CalibrationDirectImaging = 1,
    CalibrationSpade = 2,
    SensingDirectImaging = 3,
    SensingSpade = 4,
    Optimizer = 5,
    BrightnessDraw = 6,
    BayesPhotons = 7,
}

/// Deterministic per-(trial, stage) stream derived from one master seed.
pub fn stream(master_seed: u64, trial: u64, stage: Stage) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(master_seed);
    rng.set_stream(trial.wrapping_mul(16).wrapping_add(stage as u64));
    rng
}

/// Sub-stream for repeated draws within one stage (e.g. one per gamma point).
pub fn substream(master_seed: u64, trial: u64, stage: Stage, index: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(master_seed);
    rng.set_stream(
        trial
            .wrapping_mul(16)
            .wrapping_add(stage as u64)
            .wrapping_add(index.wrapping_mul(0x9e37_79b9_7f4a_7c15)),
    );
    rng
}
