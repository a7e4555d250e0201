//! Fast time-domain evaluation of B_{n0,m,k}(t) for many (Δk, t) pairs.
//!
//! Only two poles of B̃_{m,k}(s) move with Δk: s_k and s_d. Everything else is
//! collected into k-independent partial fractions once, and each term becomes
//! a residue times a divided difference of s ↦ e^{st} over one fixed pole and
//! the moving ones. Per (Δk, t) the only transcendental call is e^{−iΔk t}.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::franck_condon::FcPair;
use crate::params::{packet_norm, PhotonPacket, SystemParams};

use super::laplace::Poles;
use super::rational::dd1;

type C64 = Complex64;

/// Index of a k-independent pole in [`PoleRegistry`].
type PoleId = usize;

/// The k-independent poles s_a, s_b(n), s_c(l, δ) for one initial label.
#[derive(Debug, Clone)]
struct PoleRegistry {
    poles: Vec<C64>,
    /// Whether s_c(·, δ2) is stored separately from s_c(·, δ1).
    split_delta: bool,
    dim: usize,
}

impl PoleRegistry {
    fn new(p: &Poles, dim: usize) -> Self {
        let split_delta = p.delta[0] != p.delta[1];
        let mut poles = vec![p.s_a()];
        poles.extend((0..dim).map(|n| p.s_b(n)));
        poles.extend((0..dim).map(|l| p.s_c(l, p.delta[0])));
        if split_delta {
            poles.extend((0..dim).map(|l| p.s_c(l, p.delta[1])));
        }
        PoleRegistry { poles, split_delta, dim }
    }

    fn a(&self) -> PoleId {
        0
    }

    fn b(&self, n: usize) -> PoleId {
        1 + n
    }

    fn c(&self, l: usize, which: usize) -> PoleId {
        1 + self.dim + if self.split_delta { which * self.dim } else { 0 } + l
    }

    /// Smallest distance between two poles of different kinds (which would
    /// make a partial-fraction coefficient blow up).
    fn min_separation(&self) -> f64 {
        let mut d = f64::INFINITY;
        for (i, x) in self.poles.iter().enumerate() {
            for y in &self.poles[i + 1..] {
                d = d.min((x - y).norm());
            }
        }
        d
    }
}

/// Partial fractions of B̃_{n0,m,k}(s) for a fixed (n0, m).
#[derive(Debug, Clone)]
pub(crate) struct BKernel {
    m: usize,
    poles: Poles,
    reg: PoleRegistry,
    /// Group 1: (K without 1/(Δk − δb + iε), δa, δb).
    direct: [(f64, f64, f64); 2],
    /// Group 2 residues at every registry pole.
    two_photon: Vec<C64>,
    /// Group 3: for each (n, δ index), residues at (s_a, s_c(l, δ)).
    sequential: Vec<(usize, usize, Vec<(PoleId, C64)>)>,
}

/// Per-time exponentials shared by every kernel of one initial label.
#[derive(Debug, Clone)]
pub(crate) struct TimeTable {
    pub t: f64,
    /// e^{p t} for every registry pole.
    pole_exp: Vec<C64>,
    /// e^{(s_k + iΔk) t} per m.
    k_base: Vec<C64>,
    /// e^{(s_d + iΔk) t} per (n, δ index).
    d_base: Vec<[C64; 2]>,
}

impl BKernel {
    /// Returns `None` when two k-independent poles nearly coincide; the caller
    /// then falls back to the generic residue inversion.
    pub(crate) fn new(
        m: usize,
        n0: usize,
        params: &SystemParams,
        packet: &PhotonPacket,
        fc: &FcPair,
    ) -> Option<Self> {
        let poles = Poles::new(params, packet, n0);
        let dim = fc.dim();
        let reg = PoleRegistry::new(&poles, dim);
        if reg.min_separation() < 1e-6 * poles.scale() {
            return None;
        }
        let xi = params.xi();
        let nn = packet_norm(packet);
        let gamma = params.gamma_c();
        let [d1, d2] = poles.delta;
        let k1 = -2.0 * PI * xi * nn * fc.minus.get(m, n0);
        let direct = [(k1, d1, d2), (k1, d2, d1)];

        let k2 = C64::new(0.0, -4.0 * PI * xi * nn * gamma);
        let k3 = C64::new(0.0, -2.0 * PI * xi * nn * gamma);
        let sa = reg.poles[reg.a()];
        let mut two_photon = vec![C64::new(0.0, 0.0); reg.poles.len()];
        let mut sequential = Vec::with_capacity(2 * dim);
        for n in 0..dim {
            let sb = reg.poles[reg.b(n)];
            for (w, _) in poles.delta.iter().enumerate() {
                let mut seq = vec![(reg.a(), C64::new(0.0, 0.0))];
                for l in 0..dim {
                    let ic = reg.c(l, w);
                    let sc = reg.poles[ic];
                    let f2 = fc.plus.get(m, n) * fc.minus.get(n, l) * fc.minus.get(l, n0);
                    if f2 != 0.0 {
                        let k = k2 * f2;
                        two_photon[reg.a()] += k / ((sa - sb) * (sa - sc));
                        two_photon[reg.b(n)] += k / ((sb - sa) * (sb - sc));
                        two_photon[ic] += k / ((sc - sa) * (sc - sb));
                    }
                    let f3 = fc.minus.get(m, n) * fc.plus.get(n, l) * fc.minus.get(l, n0);
                    if f3 != 0.0 {
                        let k = k3 * f3;
                        seq[0].1 += k / (sa - sc);
                        seq.push((ic, k / (sc - sa)));
                    }
                }
                if seq.len() > 1 {
                    sequential.push((n, w, seq));
                }
            }
        }
        Some(BKernel {
            m,
            poles,
            reg,
            direct,
            two_photon,
            sequential,
        })
    }

    /// Builds the per-time table for the given times and all m up to `dim`.
    pub(crate) fn tables(&self, times: &[f64]) -> Vec<TimeTable> {
        let p = &self.poles;
        let dim = self.reg.dim;
        times
            .iter()
            .map(|&t| TimeTable {
                t,
                pole_exp: self.reg.poles.iter().map(|s| (s * t).exp()).collect(),
                k_base: (0..dim).map(|m| (p.s_k(m, 0.0) * t).exp()).collect(),
                d_base: (0..dim)
                    .map(|n| [0, 1].map(|w| (p.s_d(n, 0.0, p.delta[w]) * t).exp()))
                    .collect(),
            })
            .collect()
    }

    /// B_{n0,m,k}(t) at continuum detuning `dk`, given e^{−iΔk t} and the time
    /// table at t.
    pub(crate) fn eval(&self, dk: f64, phase: C64, tab: &TimeTable, scratch: &mut Vec<C64>) -> C64 {
        let p = &self.poles;
        let t = tab.t;
        let eps = p.eps;
        let sk = p.s_k(self.m, dk);
        let ek = phase * tab.k_base[self.m];

        let mut total = C64::new(0.0, 0.0);
        for (w, &(k1, da, db)) in self.direct.iter().enumerate() {
            if k1 == 0.0 {
                continue;
            }
            let sd = p.s_d(p.n0, dk, da);
            let ed = phase * tab.d_base[p.n0][w];
            total += k1 / C64::new(dk - db, eps) * dd1(sk, sd, ek, ed, t);
        }

        // f[p, s_k] for every registry pole, shared by groups 2 and 3.
        scratch.clear();
        scratch.extend(
            self.reg
                .poles
                .iter()
                .zip(&tab.pole_exp)
                .map(|(&s, &es)| dd1(s, sk, es, ek, t)),
        );
        for (r, f) in self.two_photon.iter().zip(scratch.iter()) {
            total += r * f;
        }

        for (n, w, seq) in &self.sequential {
            let sd = p.s_d(*n, dk, p.delta[*w]);
            let ed = phase * tab.d_base[*n][*w];
            let fkd = dd1(sk, sd, ek, ed, t);
            // f[p, s_k, s_d] = (f[p, s_k] − f[s_k, s_d]) / (p − s_d); p and s_d
            // are at least min(ε, γ/2) apart.
            for &(id, r) in seq {
                total += r * (scratch[id] - fkd) / (self.reg.poles[id] - sd);
            }
        }
        total
    }

    /// B = S + e^{−iΔk t} F, with S carried by the fixed poles and F by s_k
    /// and s_d. Returns (S, F). Only meaningful when Δk is far from every
    /// fixed pole, i.e. in the tails of the Δk integral.
    pub(crate) fn eval_split(&self, dk: f64, tab: &TimeTable) -> (C64, C64) {
        let p = &self.poles;
        let t = tab.t;
        let sk = p.s_k(self.m, dk);
        let ek = tab.k_base[self.m];
        let mut slow = C64::new(0.0, 0.0);
        let mut fast = C64::new(0.0, 0.0);
        for (w, &(k1, da, db)) in self.direct.iter().enumerate() {
            if k1 == 0.0 {
                continue;
            }
            let sd = p.s_d(p.n0, dk, da);
            fast += k1 / C64::new(dk - db, p.eps) * dd1(sk, sd, ek, tab.d_base[p.n0][w], t);
        }
        for ((r, &s), &es) in self.two_photon.iter().zip(&self.reg.poles).zip(&tab.pole_exp) {
            let d = s - sk;
            slow += r * es / d;
            fast -= r * ek / d;
        }
        for (n, w, seq) in &self.sequential {
            let sd = p.s_d(*n, dk, p.delta[*w]);
            let fkd = dd1(sk, sd, ek, tab.d_base[*n][*w], t);
            for &(id, r) in seq {
                let s = self.reg.poles[id];
                let (dk_, dd) = (s - sk, s - sd);
                slow += r * tab.pole_exp[id] / (dk_ * dd);
                fast -= r * (ek / dk_ + fkd) / dd;
            }
        }
        (slow, fast)
    }
}

/// e^{−iΔk t}.
#[inline]
pub(crate) fn phase(dk: f64, t: f64) -> C64 {
    let (s, c) = (dk * t).sin_cos();
    C64::new(c, -s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::franck_condon::FcOrder;
    use crate::transient::laplace::laplace_b;
    use crate::transient::rational::invert;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fast_path_matches_generic_inversion() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (g0, d1, d2, gamma, eps) in [
            (0.3, -0.09, -0.09, 0.1, 0.01),
            (0.6, -0.3, -0.4, 0.2, 0.05),
            (0.0, 0.1, -0.1, 0.3, 0.1),
        ] {
            let params = SystemParams::new(g0, gamma).unwrap();
            let packet = PhotonPacket::new(d1, d2, eps).unwrap();
            let fc = FcPair::new(g0, 5, FcOrder::Exact).unwrap();
            let times = [0.0, 0.01, 1.0, 13.0, 77.0];
            for n0 in [0, 1] {
                for m in 0..4 {
                    let kern = BKernel::new(m, n0, &params, &packet, &fc).unwrap();
                    let tabs = kern.tables(&times);
                    let mut scratch = Vec::new();
                    for _ in 0..10 {
                        let dk = rng.gen_range(-3.0..3.0);
                        let terms = laplace_b(m, dk, n0, &params, &packet, &fc);
                        for tab in &tabs {
                            let fast = kern.eval(dk, phase(dk, tab.t), tab, &mut scratch);
                            let slow = invert(&terms, tab.t, 1e-9).unwrap();
                            let scale = slow.norm().max(1e-3);
                            assert!((fast - slow).norm() < 1e-9 * scale, "t={} dk={dk}: {fast} vs {slow}", tab.t);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn split_parts_recombine_in_the_tails() {
        let params = SystemParams::new(0.5, 0.1).unwrap();
        let packet = PhotonPacket::new(-0.2, -0.3, 0.02).unwrap();
        let fc = FcPair::new(0.5, 4, FcOrder::Exact).unwrap();
        for m in 0..4 {
            let kern = BKernel::new(m, 1, &params, &packet, &fc).unwrap();
            for tab in kern.tables(&[0.3, 8.0, 60.0]) {
                for dk in [-80.0, -25.0, 31.0, 400.0] {
                    let (s, f) = kern.eval_split(dk, &tab);
                    let full = kern.eval(dk, phase(dk, tab.t), &tab, &mut Vec::new());
                    assert!((s + phase(dk, tab.t) * f - full).norm() < 1e-12 * full.norm().max(1e-6));
                }
            }
        }
    }

    #[test]
    fn coincident_fixed_poles_disable_the_fast_path() {
        // ε = γ/2 with δ = −ν puts s_a on s_c(n0, δ).
        let params = SystemParams::new(0.4, 0.1).unwrap();
        let packet = PhotonPacket::new(-0.16, -0.16, 0.05).unwrap();
        let fc = FcPair::new(0.4, 4, FcOrder::Exact).unwrap();
        assert!(BKernel::new(1, 0, &params, &packet, &fc).is_none());
        let terms = laplace_b(1, 0.3, 0, &params, &packet, &fc);
        for t in [0.0, 5.0, 40.0] {
            let v = invert(&terms, t, 1e-9).unwrap();
            assert!(v.is_finite());
        }
    }
}
