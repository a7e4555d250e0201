//! Exact two-photon scattering in a single-mode optomechanical cavity.
//!
//! All frequencies are in units of the mechanical frequency (ω_M = 1) and all
//! times in units of 1/ω_M. The crate is organised bottom-up:
//!
//! - [`params`] holds the physical parameters, packet and mirror descriptions
//!   and the truncation policy.
//! - [`franck_condon`] computes displaced-number-state overlaps.
//! - [`longtime`] assembles the long-time two-photon amplitude C(∞).
//! - [`spectrum`] evaluates joint spectra on detuning grids.
//! - [`transient`] inverts the Laplace-domain amplitudes and produces P₁, P₂
//!   and g²(t).
//! - [`oracle`] integrates the discretized-continuum equations of motion by
//!   brute force, as an independent check.
//! - [`cli`] parses JSON run configurations and writes CSV artifacts.

pub mod cli;
pub mod error;
pub mod franck_condon;
pub mod longtime;
pub mod oracle;
pub mod params;
pub mod quadrature;
pub mod spectrum;
pub mod transient;

pub use error::{Error, Result};
pub use franck_condon::{fc_overlap, fc_table, overlap_combo, FcOrder, FcPair, FcTable, OverlapKind};
pub use params::{
    initial_amplitude_c, packet_norm, MirrorExpansion, MirrorInit, PhotonPacket, SystemParams,
    Truncation,
};

pub use num_complex::Complex64;
