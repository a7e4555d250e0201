//! Laplace-domain amplitudes Ã_m(s) and B̃_{m,k}(s) as sums of rational terms,
//! and the persistent-pole residue of C̃_{m,p,q}(s).

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::franck_condon::{fc_overlap, overlap_combo, FcPair, OverlapKind};
use crate::params::{packet_norm, PhotonPacket, SystemParams};

use super::rational::RationalTerm;

type C64 = Complex64;

/// The pole positions shared by every amplitude for one initial label n0.
#[derive(Debug, Clone, Copy)]
pub struct Poles {
    pub gamma: f64,
    pub eps: f64,
    pub nu: f64,
    pub delta: [f64; 2],
    pub n0: usize,
}

impl Poles {
    pub fn new(params: &SystemParams, packet: &PhotonPacket, n0: usize) -> Self {
        Poles {
            gamma: params.gamma_c(),
            eps: packet.epsilon(),
            nu: params.nu(),
            delta: [packet.delta1(), packet.delta2()],
            n0,
        }
    }

    /// Two-photon packet pole −2ε − i(δ1 + δ2 + n0).
    pub fn s_a(&self) -> C64 {
        C64::new(-2.0 * self.eps, -(self.delta[0] + self.delta[1] + self.n0 as f64))
    }

    /// Two-photon cavity pole −γ − i(n − 4ν).
    pub fn s_b(&self, n: usize) -> C64 {
        C64::new(-self.gamma, -(n as f64 - 4.0 * self.nu))
    }

    /// Mixed pole −ε − γ/2 − i(δ − ν + l).
    pub fn s_c(&self, l: usize, delta: f64) -> C64 {
        C64::new(-self.eps - 0.5 * self.gamma, -(delta - self.nu + l as f64))
    }

    /// One-photon cavity pole −γ/2 − i(Δk − ν + m).
    pub fn s_k(&self, m: usize, dk: f64) -> C64 {
        C64::new(-0.5 * self.gamma, -(dk - self.nu + m as f64))
    }

    /// Free-photon pole −ε − i(Δk + δ + n).
    pub fn s_d(&self, n: usize, dk: f64, delta: f64) -> C64 {
        C64::new(-self.eps, -(dk + delta + n as f64))
    }

    /// Largest rate in the problem, the scale for pole clustering.
    pub fn scale(&self) -> f64 {
        self.gamma.max(self.eps).max(1.0)
    }
}

/// Ã_m(s) for an initial mirror label n0: one term per intermediate phonon
/// number n and packet orientation, each with three simple poles.
pub fn laplace_a(
    m: usize,
    n0: usize,
    params: &SystemParams,
    packet: &PhotonPacket,
    fc: &FcPair,
) -> Vec<RationalTerm> {
    let poles = Poles::new(params, packet, n0);
    let pref = 2.0 * 2f64.sqrt() * PI * packet_norm(packet) * params.gamma_c();
    let mut terms = Vec::with_capacity(2 * fc.dim());
    for n in 0..fc.dim() {
        let f = fc.minus.get(m, n) * fc.minus.get(n, n0);
        if f == 0.0 {
            continue;
        }
        for delta in poles.delta {
            terms.push(RationalTerm::new(
                C64::new(pref * f, 0.0),
                vec![poles.s_a(), poles.s_b(m), poles.s_c(n, delta)],
            ));
        }
    }
    terms
}

/// B̃_{m,k}(s) at continuum detuning Δk for an initial mirror label n0.
///
/// Three groups: direct filtering of one photon while the other is still
/// incoming; decay out of the two-photon state; and sequential scattering in
/// which the second photon re-enters through a free continuum state.
pub fn laplace_b(
    m: usize,
    dk: f64,
    n0: usize,
    params: &SystemParams,
    packet: &PhotonPacket,
    fc: &FcPair,
) -> Vec<RationalTerm> {
    let poles = Poles::new(params, packet, n0);
    let xi = params.xi();
    let nn = packet_norm(packet);
    let gamma = params.gamma_c();
    let eps = packet.epsilon();
    let dim = fc.dim();
    let sk = poles.s_k(m, dk);
    let sa = poles.s_a();
    let mut terms = Vec::new();

    let [d1, d2] = poles.delta;
    for (da, db) in [(d1, d2), (d2, d1)] {
        let k = -2.0 * PI * xi * nn * fc.minus.get(m, n0) / C64::new(dk - db, eps);
        terms.push(RationalTerm::new(k, vec![sk, poles.s_d(n0, dk, da)]));
    }

    let k2 = C64::new(0.0, -4.0 * PI * xi * nn * gamma);
    let k3 = C64::new(0.0, -2.0 * PI * xi * nn * gamma);
    for n in 0..dim {
        for l in 0..dim {
            let f2 = fc.plus.get(m, n) * fc.minus.get(n, l) * fc.minus.get(l, n0);
            let f3 = fc.minus.get(m, n) * fc.plus.get(n, l) * fc.minus.get(l, n0);
            for delta in poles.delta {
                if f2 != 0.0 {
                    terms.push(RationalTerm::new(
                        k2 * f2,
                        vec![sk, sa, poles.s_b(n), poles.s_c(l, delta)],
                    ));
                }
                if f3 != 0.0 {
                    terms.push(RationalTerm::new(
                        k3 * f3,
                        vec![sk, sa, poles.s_d(n, dk, delta), poles.s_c(l, delta)],
                    ));
                }
            }
        }
    }
    terms
}

/// Residue of C̃_{m,p,q}(s) at its persistent pole s = −i(Δp + Δq + m).
///
/// Written directly from the Laplace-domain solution with plain nested sums
/// and overlaps computed on the fly, independently of the contracted kernels
/// in [`crate::longtime`]. Up to the dropped phase this is C_{n0,m,p,q}(∞).
#[allow(clippy::too_many_arguments)]
pub fn persistent_residue_c(
    params: &SystemParams,
    packet: &PhotonPacket,
    n_ph: usize,
    n0: usize,
    m: usize,
    dp: f64,
    dq: f64,
) -> C64 {
    let s = C64::new(0.0, -(dp + dq + m as f64));
    let bracket = |p: f64, q: f64| residue_bracket(params, packet, n_ph, n0, m, p, q, s);
    packet_norm(packet) * (bracket(dp, dq) + bracket(dq, dp))
}

#[allow(clippy::too_many_arguments)]
fn residue_bracket(
    params: &SystemParams,
    packet: &PhotonPacket,
    n_ph: usize,
    n0: usize,
    m: usize,
    p: f64,
    q: f64,
    s: C64,
) -> C64 {
    let i = C64::i();
    let g = params.gamma_c();
    let nu = params.nu();
    let b = params.beta0();
    let eps = packet.epsilon();
    let (d1, d2) = (packet.delta1(), packet.delta2());
    let n0f = n0 as f64;

    // <a|b~(1)> = D(β)[a][b]; <a~(1)|b> = D(β)[b][a].
    let ket1 = |a: usize, bb: usize| fc_overlap(a, bb, b);
    let bra1 = |a: usize, bb: usize| fc_overlap(bb, a, b);
    let one_two = |a: usize, bb: usize| overlap_combo(OverlapKind::M1N2, a, bb, b);
    let two_one = |a: usize, bb: usize| overlap_combo(OverlapKind::M2N1, a, bb, b);

    let mut total = C64::new(0.0, 0.0);
    if m == n0 {
        total += 1.0 / ((p - d1 + i * eps) * (q - d2 + i * eps));
    }
    let two_photon = s + 2.0 * eps + i * (d1 + d2 + n0f);
    for n in 0..=n_ph {
        let nf = n as f64;
        let cav = s + 0.5 * g + i * (p - nu + nf);
        let f = ket1(m, n) * bra1(n, n0);
        let mut sym = C64::new(0.0, 0.0);
        for (da, db) in [(d1, d2), (d2, d1)] {
            sym += 1.0 / ((s + eps + i * (p + da + n0f)) * (p - db + i * eps));
        }
        total += i * g * f / cav * sym;

        for np in 0..=n_ph {
            let npf = np as f64;
            for l in 0..=n_ph {
                let lf = l as f64;
                let f3 = ket1(m, n) * bra1(n, np) * ket1(np, l) * bra1(l, n0);
                let f4 = ket1(m, n) * one_two(n, np) * two_one(np, l) * bra1(l, n0);
                let mut sym3 = C64::new(0.0, 0.0);
                let mut sym4 = C64::new(0.0, 0.0);
                for da in [d1, d2] {
                    let mixed = s + eps + 0.5 * g + i * (da - nu + lf);
                    sym3 += 1.0 / (mixed * (s + eps + i * (p + da + npf)));
                    sym4 += 1.0 / mixed;
                }
                total -= g * g * f3 / (two_photon * cav) * sym3;
                let cascade = s + g + i * (npf - 4.0 * nu);
                total -= 2.0 * g * g * f4 / (two_photon * cascade * cav) * sym4;
            }
        }
    }
    total
}
