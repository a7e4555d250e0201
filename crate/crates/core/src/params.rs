//! Physical parameters, the incident two-photon packet, the mirror's initial
//! state and the truncation policy shared by every computation.
//!
//! All frequencies are measured in units of the mechanical frequency, which is
//! therefore fixed to one.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::franck_condon::fc_overlap;

const MODULE: &str = "params";

/// Cavity, mirror and coupling constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSystem", into = "RawSystem")]
pub struct SystemParams {
    g0: f64,
    gamma_c: f64,
}

#[derive(Serialize, Deserialize)]
struct RawSystem {
    g0: f64,
    gamma_c: f64,
}

impl TryFrom<RawSystem> for SystemParams {
    type Error = Error;
    fn try_from(raw: RawSystem) -> Result<Self> {
        SystemParams::new(raw.g0, raw.gamma_c)
    }
}

impl From<SystemParams> for RawSystem {
    fn from(p: SystemParams) -> Self {
        RawSystem {
            g0: p.g0,
            gamma_c: p.gamma_c,
        }
    }
}

impl SystemParams {
    pub const OMEGA_M: f64 = 1.0;

    pub fn new(g0: f64, gamma_c: f64) -> Result<Self> {
        if !g0.is_finite() || g0 < 0.0 {
            return Err(Error::invalid(MODULE, "g0", format!("must be finite and >= 0, got {g0}")));
        }
        if !gamma_c.is_finite() || gamma_c <= 0.0 {
            return Err(Error::invalid(
                MODULE,
                "gamma_c",
                format!("must be finite and > 0, got {gamma_c}"),
            ));
        }
        Ok(SystemParams { g0, gamma_c })
    }

    pub fn g0(&self) -> f64 {
        self.g0
    }

    pub fn gamma_c(&self) -> f64 {
        self.gamma_c
    }

    pub fn omega_m(&self) -> f64 {
        Self::OMEGA_M
    }

    /// Single-photon displacement of the mirror, g0 / omega_M.
    pub fn beta0(&self) -> f64 {
        self.g0 / Self::OMEGA_M
    }

    /// Single-photon frequency shift, g0^2 / omega_M.
    pub fn nu(&self) -> f64 {
        self.g0 * self.g0 / Self::OMEGA_M
    }

    /// Cavity-continuum hopping strength, sqrt(gamma_c / 2 pi).
    pub fn xi(&self) -> f64 {
        (self.gamma_c / (2.0 * PI)).sqrt()
    }

    pub fn with_g0(&self, g0: f64) -> Result<Self> {
        SystemParams::new(g0, self.gamma_c)
    }
}

/// Lorentzian two-photon wave packet: center detunings and common half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPacket", into = "RawPacket")]
pub struct PhotonPacket {
    delta1: f64,
    delta2: f64,
    epsilon: f64,
}

#[derive(Serialize, Deserialize)]
struct RawPacket {
    delta1: f64,
    delta2: f64,
    epsilon: f64,
}

impl TryFrom<RawPacket> for PhotonPacket {
    type Error = Error;
    fn try_from(raw: RawPacket) -> Result<Self> {
        PhotonPacket::new(raw.delta1, raw.delta2, raw.epsilon)
    }
}

impl From<PhotonPacket> for RawPacket {
    fn from(p: PhotonPacket) -> Self {
        RawPacket {
            delta1: p.delta1,
            delta2: p.delta2,
            epsilon: p.epsilon,
        }
    }
}

impl PhotonPacket {
    pub fn new(delta1: f64, delta2: f64, epsilon: f64) -> Result<Self> {
        for (name, v) in [("delta1", delta1), ("delta2", delta2)] {
            if !v.is_finite() {
                return Err(Error::invalid(MODULE, name, "must be finite"));
            }
        }
        if !epsilon.is_finite() || epsilon <= 0.0 {
            return Err(Error::invalid(
                MODULE,
                "epsilon",
                format!("spectral half-width must be > 0, got {epsilon}"),
            ));
        }
        Ok(PhotonPacket {
            delta1,
            delta2,
            epsilon,
        })
    }

    /// Both photons tuned to the single-photon resonance, delta = -nu.
    pub fn single_photon_resonant(params: &SystemParams, epsilon: f64) -> Result<Self> {
        PhotonPacket::new(-params.nu(), -params.nu(), epsilon)
    }

    pub fn delta1(&self) -> f64 {
        self.delta1
    }

    pub fn delta2(&self) -> f64 {
        self.delta2
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// The same packet with the two center detunings exchanged.
    pub fn swapped(&self) -> Self {
        PhotonPacket {
            delta1: self.delta2,
            delta2: self.delta1,
            epsilon: self.epsilon,
        }
    }

    pub fn norm(&self) -> f64 {
        packet_norm(self)
    }
}

/// Normalization constant of the symmetrized Lorentzian two-photon amplitude.
pub fn packet_norm(packet: &PhotonPacket) -> f64 {
    let eps = packet.epsilon;
    let d = packet.delta1 - packet.delta2;
    let four_eps2 = 4.0 * eps * eps;
    (eps / PI) / (1.0 + four_eps2 / (d * d + four_eps2)).sqrt()
}

/// Initial two-photon amplitude C_{m,p,q}(0) for a mirror prepared in |n0>.
pub fn initial_amplitude_c(
    m: usize,
    dp: f64,
    dq: f64,
    packet: &PhotonPacket,
    n0: usize,
) -> Complex64 {
    if m != n0 {
        return Complex64::new(0.0, 0.0);
    }
    let ie = Complex64::new(0.0, packet.epsilon);
    let f = |x: f64, d: f64| (x - d) + ie;
    let direct = 1.0 / (f(dp, packet.delta1) * f(dq, packet.delta2));
    let exchanged = 1.0 / (f(dp, packet.delta2) * f(dq, packet.delta1));
    packet_norm(packet) * (direct + exchanged)
}

/// Initial state of the mirror.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MirrorInit {
    Fock(usize),
    Pure(Vec<Complex64>),
    Thermal(f64),
}

/// A mirror state reduced to what the amplitude formulas consume: either
/// amplitudes that add coherently, or probabilities that add incoherently.
#[derive(Debug, Clone, PartialEq)]
pub enum MirrorExpansion {
    Coherent(Vec<(usize, Complex64)>),
    Incoherent(Vec<(usize, f64)>),
}

impl MirrorExpansion {
    pub fn labels(&self) -> Vec<usize> {
        match self {
            MirrorExpansion::Coherent(v) => v.iter().map(|(n, _)| *n).collect(),
            MirrorExpansion::Incoherent(v) => v.iter().map(|(n, _)| *n).collect(),
        }
    }

    pub fn max_label(&self) -> usize {
        self.labels().into_iter().max().unwrap_or(0)
    }
}

impl MirrorInit {
    pub fn validate(&self) -> Result<()> {
        match self {
            MirrorInit::Fock(_) => Ok(()),
            MirrorInit::Pure(c) => {
                if c.is_empty() {
                    return Err(Error::invalid(MODULE, "mirror.pure", "needs at least one coefficient"));
                }
                let norm: f64 = c.iter().map(|z| z.norm_sqr()).sum();
                if (norm - 1.0).abs() > 1e-12 {
                    return Err(Error::invalid(
                        MODULE,
                        "mirror.pure",
                        format!("coefficients must satisfy sum |c|^2 = 1, got {norm}"),
                    ));
                }
                Ok(())
            }
            MirrorInit::Thermal(nbar) => {
                if !nbar.is_finite() || *nbar < 0.0 {
                    return Err(Error::invalid(
                        MODULE,
                        "mirror.thermal",
                        format!("mean phonon number must be >= 0, got {nbar}"),
                    ));
                }
                Ok(())
            }
        }
    }

    /// Thermal occupation p_n = nbar^n / (1 + nbar)^(n+1).
    pub fn thermal_weight(nbar: f64, n: usize) -> f64 {
        if nbar == 0.0 {
            return if n == 0 { 1.0 } else { 0.0 };
        }
        let ratio = nbar / (1.0 + nbar);
        ratio.powi(n as i32) / (1.0 + nbar)
    }

    /// Expands the state onto Fock labels 0..=n_max.
    ///
    /// Thermal tails beyond `n_max` are dropped; if the dropped weight exceeds
    /// `tol` a truncation error reports the deficit.
    pub fn expand(&self, n_max: usize, tol: f64) -> Result<MirrorExpansion> {
        self.validate()?;
        match self {
            MirrorInit::Fock(n0) => {
                if *n0 > n_max {
                    return Err(Error::Truncation {
                        module: MODULE,
                        n_ph: n_max,
                        deficit: 1.0,
                        tol,
                    });
                }
                Ok(MirrorExpansion::Coherent(vec![(*n0, Complex64::new(1.0, 0.0))]))
            }
            MirrorInit::Pure(c) => {
                let dropped: f64 = c.iter().skip(n_max + 1).map(|z| z.norm_sqr()).sum();
                if dropped > tol {
                    return Err(Error::Truncation {
                        module: MODULE,
                        n_ph: n_max,
                        deficit: dropped,
                        tol,
                    });
                }
                Ok(MirrorExpansion::Coherent(
                    c.iter()
                        .take(n_max + 1)
                        .enumerate()
                        .filter(|(_, z)| z.norm_sqr() > 0.0)
                        .map(|(n, z)| (n, *z))
                        .collect(),
                ))
            }
            MirrorInit::Thermal(nbar) => {
                let weights: Vec<(usize, f64)> = (0..=n_max)
                    .map(|n| (n, Self::thermal_weight(*nbar, n)))
                    .filter(|(_, p)| *p > 0.0)
                    .collect();
                let deficit = 1.0 - weights.iter().map(|(_, p)| p).sum::<f64>();
                if deficit > tol {
                    return Err(Error::Truncation {
                        module: MODULE,
                        n_ph: n_max,
                        deficit,
                        tol,
                    });
                }
                Ok(MirrorExpansion::Incoherent(weights))
            }
        }
    }

    /// Smallest label cutoff whose discarded weight is below `tol`.
    pub fn required_cutoff(&self, tol: f64) -> usize {
        match self {
            MirrorInit::Fock(n0) => *n0,
            MirrorInit::Pure(c) => {
                let mut tail: f64 = c.iter().map(|z| z.norm_sqr()).sum();
                for (n, z) in c.iter().enumerate() {
                    tail -= z.norm_sqr();
                    if tail <= tol {
                        return n;
                    }
                }
                c.len().saturating_sub(1)
            }
            MirrorInit::Thermal(nbar) => {
                let mut kept = 0.0;
                let mut n = 0;
                loop {
                    kept += Self::thermal_weight(*nbar, n);
                    if 1.0 - kept <= tol || n > 10_000 {
                        return n;
                    }
                    n += 1;
                }
            }
        }
    }
}

/// Truncation policy for every infinite phonon sum and continuum integral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Truncation {
    /// Largest phonon index retained.
    pub n_ph: usize,
    #[serde(default = "Truncation::default_tol")]
    pub tol: f64,
    /// Half-width of the finite part of the continuum integration window; the
    /// tails beyond it are integrated on a mapped variable.
    #[serde(default)]
    pub k_window: Option<f64>,
    #[serde(default = "Truncation::default_quad_tol")]
    pub quad_tol: f64,
}

impl Truncation {
    pub const DEFAULT_TOL: f64 = 1e-8;
    pub const DEFAULT_QUAD_TOL: f64 = 1e-6;

    fn default_tol() -> f64 {
        Self::DEFAULT_TOL
    }

    fn default_quad_tol() -> f64 {
        Self::DEFAULT_QUAD_TOL
    }

    pub fn new(n_ph: usize) -> Self {
        Truncation {
            n_ph,
            tol: Self::DEFAULT_TOL,
            k_window: None,
            quad_tol: Self::DEFAULT_QUAD_TOL,
        }
    }

    pub fn with_quad_tol(mut self, quad_tol: f64) -> Self {
        self.quad_tol = quad_tol;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_window(mut self, w: f64) -> Self {
        self.k_window = Some(w);
        self
    }

    pub fn dim(&self) -> usize {
        self.n_ph + 1
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(Error::invalid(MODULE, "truncation.tol", "must lie in (0, 1)"));
        }
        if !(self.quad_tol > 0.0 && self.quad_tol < 1.0) {
            return Err(Error::invalid(MODULE, "truncation.quad_tol", "must lie in (0, 1)"));
        }
        if let Some(w) = self.k_window {
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::invalid(MODULE, "truncation.k_window", "must be finite and > 0"));
            }
        }
        Ok(())
    }

    /// Checks n_ph >= n0 + 1 for the largest initial Fock label in use.
    pub fn check_labels(&self, n0_max: usize) -> Result<()> {
        if self.n_ph < n0_max + 1 {
            return Err(Error::invalid(
                MODULE,
                "truncation.n_ph",
                format!("n_ph = {} must be at least n0_max + 1 = {}", self.n_ph, n0_max + 1),
            ));
        }
        Ok(())
    }

    /// Window half-width W, defaulting to 40 max(gamma_c, epsilon) + 4 (n_ph + 1).
    pub fn window(&self, params: &SystemParams, packet: &PhotonPacket) -> f64 {
        self.k_window.unwrap_or_else(|| {
            40.0 * params.gamma_c().max(packet.epsilon())
                + 4.0 * SystemParams::OMEGA_M * (self.n_ph as f64 + 1.0)
        })
    }

    /// Smallest n_ph such that the Franck-Condon weight beyond it, at the
    /// widest displacement 2 beta0 entering any overlap product, is below `tol`
    /// for every initial label up to `n0_max`.
    pub fn from_fc_tail(params: &SystemParams, n0_max: usize, tol: f64) -> Self {
        let beta = 2.0 * params.beta0();
        let mut n_ph = n0_max + 1;
        loop {
            let worst = (0..=n0_max)
                .map(|n0| {
                    let kept: f64 = (0..=n_ph).map(|n| fc_overlap(n0, n, beta).powi(2)).sum();
                    1.0 - kept
                })
                .fold(0.0_f64, f64::max);
            if worst < tol || n_ph > 400 {
                return Truncation::new(n_ph).with_tol(tol);
            }
            n_ph += 1;
        }
    }
}
