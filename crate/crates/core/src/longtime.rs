//! Long-time two-photon scattering amplitude C_{n0,m,p,q}(∞).
//!
//! The amplitude splits into a direct reflection term C_I, a one-photon
//! scattering term C_II, the sequential two-photon term C_III and the cascade
//! term C_IV. The triple phonon sums of C_III and C_IV run along the coupling
//! chain n - n' - l, so they are contracted one index at a time: first over l
//! (weighted by 1/M4), then over n' (1/M5 or 1/M6), then over n (1/M1). That is
//! O(n_ph²) per point instead of O(n_ph³).
//!
//! Stored amplitudes drop the global phase exp(-i(Δp+Δq+m)t).

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::franck_condon::{FcOrder, FcPair};
use crate::params::{packet_norm, PhotonPacket, SystemParams, Truncation};
use crate::quadrature::{integrate_real_line, AdaptiveOptions};

const MODULE: &str = "longtime";

type C64 = Complex64;

/// Which center detuning plays the role of δa in a δ-symmetrized term.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    Direct,
    Exchanged,
}

impl Orientation {
    pub const BOTH: [Orientation; 2] = [Orientation::Direct, Orientation::Exchanged];

    /// (δa, δb) for this orientation.
    pub fn detunings(self, packet: &PhotonPacket) -> (f64, f64) {
        match self {
            Orientation::Direct => (packet.delta1(), packet.delta2()),
            Orientation::Exchanged => (packet.delta2(), packet.delta1()),
        }
    }
}

/// Everything the amplitude formulas need for one (params, packet, truncation,
/// n0) combination, with the overlap products that do not depend on detuning
/// precomputed.
#[derive(Debug, Clone)]
pub struct AmplitudeContext {
    params: SystemParams,
    packet: PhotonPacket,
    trunc: Truncation,
    n0: usize,
    fc: FcPair,
    norm: f64,
    dim: usize,
    /// plus[m][n] minus[n][n0]
    f2: Vec<f64>,
    /// plus[n'][l] minus[l][n0]
    g3: Vec<f64>,
    /// minus[n'][l] minus[l][n0]
    g4: Vec<f64>,
}

impl AmplitudeContext {
    pub fn new(
        params: SystemParams,
        packet: PhotonPacket,
        trunc: Truncation,
        n0: usize,
        order: FcOrder,
    ) -> Result<Self> {
        trunc.validate()?;
        trunc.check_labels(n0)?;
        let dim = trunc.dim();
        let fc = FcPair::new(params.beta0(), dim, order)?;
        let (plus, minus) = (&fc.plus, &fc.minus);
        let mut f2 = vec![0.0; dim * dim];
        let mut g3 = vec![0.0; dim * dim];
        let mut g4 = vec![0.0; dim * dim];
        for a in 0..dim {
            for b in 0..dim {
                f2[a * dim + b] = plus.get(a, b) * minus.get(b, n0);
                g3[a * dim + b] = plus.get(a, b) * minus.get(b, n0);
                g4[a * dim + b] = minus.get(a, b) * minus.get(b, n0);
            }
        }
        Ok(AmplitudeContext {
            params,
            packet,
            trunc,
            n0,
            norm: packet_norm(&packet),
            fc,
            dim,
            f2,
            g3,
            g4,
        })
    }

    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    pub fn packet(&self) -> &PhotonPacket {
        &self.packet
    }

    pub fn truncation(&self) -> &Truncation {
        &self.trunc
    }

    pub fn n0(&self) -> usize {
        self.n0
    }

    pub fn fc(&self) -> &FcPair {
        &self.fc
    }

    /// Number of retained phonon levels, n_ph + 1.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn packet_norm(&self) -> f64 {
        self.norm
    }

    /// Contribution of the four channels with the Δp, Δq roles as written
    /// (M denominators in p, bare packet factor in q), δ-symmetrized.
    fn half(&self, m: usize, p: C64, q: C64) -> [C64; 4] {
        let dim = self.dim;
        let gamma = self.params.gamma_c();
        let nu = self.params.nu();
        let eps = self.packet.epsilon();
        let n0 = self.n0;
        let plus = &self.fc.plus;
        let minus = &self.fc.minus;
        let i = C64::i();
        let mm = m as f64;
        let dm0 = mm - n0 as f64;
        let x = p + q;

        let mut out = [C64::new(0.0, 0.0); 4];
        if m == n0 {
            let (d1, d2) = (self.packet.delta1(), self.packet.delta2());
            out[0] = 1.0 / ((p - d1 + i * eps) * (q - d2 + i * eps));
        }

        // 1/M1(n) is shared by both orientations.
        let inv_m1: Vec<C64> = (0..dim)
            .map(|n| 1.0 / (p + nu + (mm - n as f64) + i * (0.5 * gamma)))
            .collect();
        let inv_m6: Vec<C64> = (0..dim)
            .map(|np| 1.0 / (x + 4.0 * nu + (mm - np as f64) + i * gamma))
            .collect();
        let mut inv_m4 = vec![C64::new(0.0, 0.0); dim];
        let mut v3 = vec![C64::new(0.0, 0.0); dim];
        let mut v4 = vec![C64::new(0.0, 0.0); dim];

        for orient in Orientation::BOTH {
            let (da, db) = orient.detunings(&self.packet);
            let m2 = p - da + dm0 + i * eps;
            let qb = q - db + i * eps;
            let s2: C64 = (0..dim)
                .map(|n| self.f2[m * dim + n] * inv_m1[n])
                .sum();
            out[1] += -i * gamma * s2 / (m2 * qb);

            let m3 = x - da - db + dm0 + i * (2.0 * eps);
            for (l, v) in inv_m4.iter_mut().enumerate() {
                *v = 1.0 / (x - da + nu + (mm - l as f64) + i * (0.5 * gamma + eps));
            }
            for np in 0..dim {
                let row3 = &self.g3[np * dim..(np + 1) * dim];
                let row4 = &self.g4[np * dim..(np + 1) * dim];
                let mut a3 = C64::new(0.0, 0.0);
                let mut a4 = C64::new(0.0, 0.0);
                for l in 0..dim {
                    a3 += row3[l] * inv_m4[l];
                    a4 += row4[l] * inv_m4[l];
                }
                let m5 = p - da + (mm - np as f64) + i * eps;
                v3[np] = a3 / m5;
                v4[np] = a4 * inv_m6[np];
            }
            let mut s3 = C64::new(0.0, 0.0);
            let mut s4 = C64::new(0.0, 0.0);
            for n in 0..dim {
                let pmn = plus.get(m, n);
                if pmn == 0.0 {
                    continue;
                }
                let mrow = minus.row(n);
                let prow = plus.row(n);
                let mut w3 = C64::new(0.0, 0.0);
                let mut w4 = C64::new(0.0, 0.0);
                for np in 0..dim {
                    w3 += mrow[np] * v3[np];
                    w4 += prow[np] * v4[np];
                }
                s3 += pmn * inv_m1[n] * w3;
                s4 += pmn * inv_m1[n] * w4;
            }
            out[2] += -gamma * gamma * s3 / m3;
            out[3] += -2.0 * gamma * gamma * s4 / m3;
        }
        out
    }

    /// C_{n0,m,p,q}(∞) at complex detunings. Only the rational structure in q
    /// is used off the real axis (residues for the unitarity integral).
    pub(crate) fn c_inf_complex(&self, m: usize, p: C64, q: C64) -> C64 {
        let a = self.half(m, p, q);
        let b = self.half(m, q, p);
        self.norm * (a.iter().sum::<C64>() + b.iter().sum::<C64>())
    }

    /// Poles of C_{n0,m,p,q}(∞) as a function of q at fixed real p, tagged by
    /// the denominator family they come from. Coincident poles of one family
    /// never meet in a single term, so they are merged; the bool is set when
    /// poles of different families (a potential double pole) nearly coincide.
    pub(crate) fn q_poles(&self, m: usize, p: f64, floor: f64) -> (Vec<C64>, bool) {
        let dim = self.dim;
        let gamma = self.params.gamma_c();
        let nu = self.params.nu();
        let eps = self.packet.epsilon();
        let mm = m as f64;
        let dm0 = mm - self.n0 as f64;
        let (d1, d2) = (self.packet.delta1(), self.packet.delta2());
        let mut tagged: Vec<(C64, u8)> = Vec::with_capacity(6 * dim + 4);
        tagged.push((C64::new(-p + d1 + d2 - dm0, -2.0 * eps), 2));
        for da in [d1, d2] {
            tagged.push((C64::new(da, -eps), 0));
            for j in 0..dim {
                let shift = mm - j as f64;
                tagged.push((C64::new(da - shift, -eps), 0));
                tagged.push((C64::new(-p + da - nu - shift, -(0.5 * gamma + eps)), 3));
            }
        }
        for j in 0..dim {
            let shift = mm - j as f64;
            tagged.push((C64::new(-nu - shift, -0.5 * gamma), 1));
            tagged.push((C64::new(-p - 4.0 * nu - shift, -gamma), 4));
        }
        let same = 1e-12 * (1.0 + p.abs());
        let mut uniq: Vec<(C64, u8)> = Vec::with_capacity(tagged.len());
        let mut clustered = false;
        for (z, fam) in tagged {
            let mut merged = false;
            for (u, ufam) in &uniq {
                let d = (u - z).norm();
                if *ufam == fam && d < same {
                    merged = true;
                    break;
                }
                if d < floor {
                    clustered = true;
                }
            }
            if !merged {
                uniq.push((z, fam));
            }
        }
        (uniq.into_iter().map(|(z, _)| z).collect(), clustered)
    }
}

/// The six denominators at one summation index (n, n', l) and orientation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Denominators {
    pub m1: C64,
    pub m2: C64,
    pub m3: C64,
    pub m4: C64,
    pub m5: C64,
    pub m6: C64,
}

impl Denominators {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        ctx: &AmplitudeContext,
        orient: Orientation,
        m: usize,
        n: usize,
        np: usize,
        l: usize,
        dp: f64,
        dq: f64,
    ) -> Self {
        let gamma = ctx.params.gamma_c();
        let nu = ctx.params.nu();
        let eps = ctx.packet.epsilon();
        let (da, db) = orient.detunings(&ctx.packet);
        let mm = m as f64;
        let dm0 = mm - ctx.n0 as f64;
        let x = dp + dq;
        let c = C64::new;
        Denominators {
            m1: c(dp + nu + mm - n as f64, 0.5 * gamma),
            m2: c(dp - da + dm0, eps),
            m3: c(x - da - db + dm0, 2.0 * eps),
            m4: c(x - da + nu + mm - l as f64, 0.5 * gamma + eps),
            m5: c(dp - da + mm - np as f64, eps),
            m6: c(x + 4.0 * nu + mm - np as f64, gamma),
        }
    }

    pub fn min_modulus(&self) -> f64 {
        [self.m1, self.m2, self.m3, self.m4, self.m5, self.m6]
            .iter()
            .map(|z| z.norm())
            .fold(f64::INFINITY, f64::min)
    }
}

fn component(ctx: &AmplitudeContext, m: usize, dp: f64, dq: f64, k: usize) -> C64 {
    ctx.half(m, C64::new(dp, 0.0), C64::new(dq, 0.0))[k]
}

/// Direct two-photon reflection δ_{m,n0}/((Δp−δ1+iε)(Δq−δ2+iε)).
pub fn amp_c1(ctx: &AmplitudeContext, m: usize, dp: f64, dq: f64) -> C64 {
    component(ctx, m, dp, dq, 0)
}

/// One photon scattered, one reflected.
pub fn amp_c2(ctx: &AmplitudeContext, m: usize, dp: f64, dq: f64) -> C64 {
    component(ctx, m, dp, dq, 1)
}

/// Sequential two-photon scattering.
pub fn amp_c3(ctx: &AmplitudeContext, m: usize, dp: f64, dq: f64) -> C64 {
    component(ctx, m, dp, dq, 2)
}

/// Cascade two-photon scattering through the two-photon displaced states.
pub fn amp_c4(ctx: &AmplitudeContext, m: usize, dp: f64, dq: f64) -> C64 {
    component(ctx, m, dp, dq, 3)
}

/// N [(C_I + C_II + C_III + C_IV) + (Δp ↔ Δq)].
pub fn assemble_c_inf(ctx: &AmplitudeContext, m: usize, dp: f64, dq: f64) -> C64 {
    ctx.c_inf_complex(m, C64::new(dp, 0.0), C64::new(dq, 0.0))
}

/// C(∞) for every final phonon number m = 0..=n_ph, written into `out`.
pub fn assemble_all(ctx: &AmplitudeContext, dp: f64, dq: f64, out: &mut [C64]) {
    for (m, o) in out.iter_mut().enumerate().take(ctx.dim) {
        *o = assemble_c_inf(ctx, m, dp, dq);
    }
}

/// Plain triple sums over (n, n', l), used to check the contracted kernels.
pub mod naive {
    use super::*;

    fn triple(ctx: &AmplitudeContext, m: usize, dp: f64, dq: f64, cascade: bool) -> C64 {
        let dim = ctx.dim;
        let gamma = ctx.params.gamma_c();
        let plus = &ctx.fc.plus;
        let minus = &ctx.fc.minus;
        let n0 = ctx.n0;
        let mut total = C64::new(0.0, 0.0);
        for orient in Orientation::BOTH {
            for n in 0..dim {
                for np in 0..dim {
                    for l in 0..dim {
                        let d = Denominators::new(ctx, orient, m, n, np, l, dp, dq);
                        total += if cascade {
                            let f = plus.get(m, n) * plus.get(n, np) * minus.get(np, l) * minus.get(l, n0);
                            -2.0 * gamma * gamma * f / (d.m1 * d.m3 * d.m4 * d.m6)
                        } else {
                            let f = plus.get(m, n) * minus.get(n, np) * plus.get(np, l) * minus.get(l, n0);
                            -gamma * gamma * f / (d.m1 * d.m3 * d.m4 * d.m5)
                        };
                    }
                }
            }
        }
        total
    }

    pub fn amp_c2(ctx: &AmplitudeContext, m: usize, dp: f64, dq: f64) -> C64 {
        let gamma = ctx.params.gamma_c();
        let eps = ctx.packet.epsilon();
        let mut total = C64::new(0.0, 0.0);
        for orient in Orientation::BOTH {
            let (_, db) = orient.detunings(&ctx.packet);
            for n in 0..ctx.dim {
                let d = Denominators::new(ctx, orient, m, n, 0, 0, dp, dq);
                let f = ctx.fc.plus.get(m, n) * ctx.fc.minus.get(n, ctx.n0);
                total += -C64::i() * gamma * f / (d.m1 * d.m2 * C64::new(dq - db, eps));
            }
        }
        total
    }

    pub fn amp_c3(ctx: &AmplitudeContext, m: usize, dp: f64, dq: f64) -> C64 {
        triple(ctx, m, dp, dq, false)
    }

    pub fn amp_c4(ctx: &AmplitudeContext, m: usize, dp: f64, dq: f64) -> C64 {
        triple(ctx, m, dp, dq, true)
    }
}

/// Result of the unitarity integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormReport {
    /// Σ_m ∬_{q<p} |C|² dq dp.
    pub value: f64,
    pub error_estimate: f64,
    /// Per-p evaluations that fell back to numerical q integration because
    /// two distinct poles nearly coincided.
    pub fallbacks: usize,
}

/// ∫ |Σ_j r_j/(q−z_j)|² dq over the real line, for poles in the lower half
/// plane: closing in the upper half plane picks up the conjugate poles.
fn gram_integral(res: &[C64], poles: &[C64]) -> f64 {
    let two_pi_i = C64::new(0.0, 2.0 * std::f64::consts::PI);
    let mut total = C64::new(0.0, 0.0);
    for (rk, zk) in res.iter().zip(poles) {
        let zbar = zk.conj();
        let mut inner = C64::new(0.0, 0.0);
        for (rj, zj) in res.iter().zip(poles) {
            inner += rj / (zbar - zj);
        }
        total += rk.conj() * inner;
    }
    (two_pi_i * total).re
}

/// Residue of q -> C_m(p, q) at an isolated simple pole, from a four-point
/// circle average (exact up to (rho/d)^4 corrections).
fn residue(ctx: &AmplitudeContext, m: usize, p: f64, z: C64, rho: f64) -> C64 {
    let pc = C64::new(p, 0.0);
    let mut acc = C64::new(0.0, 0.0);
    for h in [C64::new(rho, 0.0), C64::new(0.0, rho), C64::new(-rho, 0.0), C64::new(0.0, -rho)] {
        acc += h * ctx.c_inf_complex(m, pc, z + h);
    }
    acc * 0.25
}

/// Σ_m ∫ |C_m(p, q)|² dq at fixed p, exactly by residues when the poles are
/// well separated and by adaptive quadrature otherwise. The bool reports a
/// fallback.
pub(crate) fn q_marginal(ctx: &AmplitudeContext, p: f64, opts: &AdaptiveOptions) -> Result<(f64, bool)> {
    let floor = 1e-3 * ctx.packet.epsilon().min(0.5 * ctx.params.gamma_c());
    let mut total = 0.0;
    let mut clustered = false;
    for m in 0..ctx.dim {
        let (poles, close) = ctx.q_poles(m, p, floor);
        if close {
            clustered = true;
            break;
        }
        let res: Vec<C64> = poles
            .iter()
            .enumerate()
            .map(|(j, z)| {
                let d = poles
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| *k != j)
                    .map(|(_, w)| (z - w).norm())
                    .fold(1.0, f64::min);
                residue(ctx, m, p, *z, 1e-3 * d)
            })
            .collect();
        total += gram_integral(&res, &poles);
    }
    if !clustered {
        return Ok((total, false));
    }
    let mut breaks = pole_abscissae(ctx, p);
    breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let lo = breaks.first().copied().unwrap_or(-1.0) - 1.0;
    let hi = breaks.last().copied().unwrap_or(1.0) + 1.0;
    let mut buf = vec![C64::new(0.0, 0.0); ctx.dim];
    let f = |q: f64, out: &mut [f64]| {
        assemble_all(ctx, p, q, &mut buf);
        out[0] = buf.iter().map(|c| c.norm_sqr()).sum();
    };
    let r = integrate_real_line(f, 1, lo, hi, &breaks, 0.25, opts, MODULE)?;
    Ok((r.values[0], true))
}

fn pole_abscissae(ctx: &AmplitudeContext, p: f64) -> Vec<f64> {
    (0..ctx.dim)
        .flat_map(|m| ctx.q_poles(m, p, 0.0).0)
        .map(|z| z.re)
        .collect()
}

/// Σ_m ∬_{q<p} |C_{n0,m,p,q}(∞)|² dq dp, which equals one for a unitary
/// scattering process up to truncation.
///
/// The q integral at fixed p is done in closed form: C is rational in q with
/// all poles below the real axis and decays like 1/q, so the integral of its
/// modulus squared is a double sum over residues. The p integral is adaptive.
pub fn long_time_norm(ctx: &AmplitudeContext, opts: &AdaptiveOptions) -> Result<NormReport> {
    let nu = ctx.params.nu();
    let (d1, d2) = (ctx.packet.delta1(), ctx.packet.delta2());
    let n = ctx.dim as i64;
    // Fixed q-poles sit at δ and −ν; moving ones at −p + {δ1+δ2, δa−ν, −4ν}.
    // The q-marginal peaks where a moving pole passes a fixed one.
    let fixed = [d1, d2, -nu];
    let moving = [d1 + d2, d1 - nu, d2 - nu, -4.0 * nu];
    let mut anchors: Vec<f64> = fixed.to_vec();
    for a in moving {
        for b in fixed {
            anchors.push(a - b);
        }
    }
    let mut breaks = Vec::new();
    for j in -n..=n {
        breaks.extend(anchors.iter().map(|a| a + j as f64));
    }
    let lo = breaks.iter().copied().fold(f64::INFINITY, f64::min) - 1.0;
    let hi = breaks.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 1.0;
    let inner_opts = AdaptiveOptions {
        rel_tol: opts.rel_tol * 0.1,
        ..*opts
    };
    let mut fallbacks = 0;
    let mut err: Option<Error> = None;
    let f = |p: f64, out: &mut [f64]| {
        if err.is_some() {
            out[0] = 0.0;
            return;
        }
        match q_marginal(ctx, p, &inner_opts) {
            Ok((v, fb)) => {
                out[0] = 0.5 * v;
                fallbacks += fb as usize;
            }
            Err(e) => {
                err = Some(e);
                out[0] = 0.0;
            }
        }
    };
    let r = integrate_real_line(f, 1, lo, hi, &breaks, 0.5, opts, MODULE)?;
    if let Some(e) = err {
        return Err(e);
    }
    Ok(NormReport {
        value: r.values[0],
        error_estimate: r.errors[0],
        fallbacks,
    })
}
