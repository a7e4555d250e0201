//! Time-dependent cavity amplitudes and photon statistics.
//!
//! The Laplace-domain amplitudes Ã_m(s) and B̃_{m,k}(s) are finite sums of
//! rational terms with poles in the left half plane, so they are inverted
//! exactly by residues. P₁ needs B for every continuum detuning; the fast path
//! in `kernel` keeps that affordable.

mod kernel;
pub mod laplace;
pub mod probabilities;
pub mod rational;

pub use laplace::{laplace_a, laplace_b, persistent_residue_c, Poles};
pub use probabilities::{
    g2_of_probs, g2_scan, probabilities, probabilities_with_order, sideband_resonances, ScanPoint,
    TransientTrace, G2_FLOOR,
};
pub use rational::{cluster_tolerance, initial_value, invert, RationalTerm};
