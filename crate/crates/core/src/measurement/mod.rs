//! The three measurement families: direct imaging, PAD-SPADE, and YKL-SPADE.

pub mod pad;
pub mod render;
pub mod sample;
pub mod ykl;

pub use pad::{pad_probabilities, pad_probabilities_at, PadSpadeConfig, DEFAULT_MAX_TOTAL_ORDER};
pub use render::{psf_amplitude, render_mode, ModeSpec, RenderedMode};
pub use sample::{sample_direct_imaging, sample_multinomial, PhotonData};
pub use ykl::{
    helstrom_binary, solve_ykl, ykl_outcome_probabilities, HelstromBinary, YklMeasurement,
    YklOptions, YklSolution,
};
