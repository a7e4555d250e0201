//! Cavity photon-number probabilities P₁(t), P₂(t) and the equal-time
//! correlation g²(t) = 2P₂/(2P₂ + P₁)².

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::franck_condon::{FcOrder, FcPair};
use crate::params::{MirrorExpansion, MirrorInit, PhotonPacket, SystemParams, Truncation};
use crate::quadrature::{integrate_real_line, AdaptiveOptions};

use super::kernel::{phase, BKernel, TimeTable};
use super::laplace::{laplace_a, laplace_b, Poles};
use super::rational::{cluster_tolerance, invert, invert_parts, RationalTerm};

const MODULE: &str = "transient";

type C64 = Complex64;

/// g² is only reported where 2P₂ + P₁ exceeds this.
pub const G2_FLOOR: f64 = 1e-10;

/// P₁, P₂ and g² sampled at increasing times.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransientTrace {
    pub times: Vec<f64>,
    pub p1: Vec<f64>,
    pub p2: Vec<f64>,
    /// `None` where 2P₂ + P₁ ≤ [`G2_FLOOR`].
    pub g2: Vec<Option<f64>>,
}

impl TransientTrace {
    fn from_probs(times: Vec<f64>, p1: Vec<f64>, p2: Vec<f64>) -> Self {
        let g2 = p1
            .iter()
            .zip(&p2)
            .map(|(&a, &b)| if 2.0 * b + a > G2_FLOOR { g2_of_probs(a, b) } else { None })
            .collect();
        TransientTrace { times, p1, p2, g2 }
    }
}

/// 2p₂/(2p₂ + p₁)², or `None` when both probabilities are numerically zero
/// and the ratio is undefined.
pub fn g2_of_probs(p1: f64, p2: f64) -> Option<f64> {
    let d = 2.0 * p2 + p1;
    if d < 1e-300 {
        None
    } else {
        Some(2.0 * p2 / (d * d))
    }
}

/// Coupling strengths g0 = √(n/2), n = 0..=n_max, at which the n-th phonon
/// sideband of the two-photon state becomes resonant with the single-photon
/// drive δ = −ν.
pub fn sideband_resonances(n_max: usize) -> Vec<f64> {
    (0..=n_max).map(|n| (n as f64 / 2.0).sqrt()).collect()
}

fn check_times(times: &[f64]) -> Result<()> {
    for w in times.windows(2) {
        if w[1] < w[0] {
            return Err(Error::invalid(MODULE, "times", "must be non-decreasing"));
        }
    }
    if times.iter().any(|t| !t.is_finite() || *t < 0.0) {
        return Err(Error::invalid(MODULE, "times", "must be finite and >= 0"));
    }
    Ok(())
}

/// Continuum detunings around which B_{m,k}(t) varies on the scale of ε or
/// γ_c: wherever a moving pole passes a fixed one.
fn k_breakpoints(params: &SystemParams, packet: &PhotonPacket, reach: usize) -> Vec<f64> {
    let nu = params.nu();
    let (d1, d2) = (packet.delta1(), packet.delta2());
    let anchors = [d1, d2, d1 + d2 + nu, -3.0 * nu, -nu, -4.0 * nu - d1, -4.0 * nu - d2];
    let r = reach as i64;
    let mut out = Vec::with_capacity(anchors.len() * (2 * reach + 1));
    for j in -r..=r {
        out.extend(anchors.iter().map(|a| a + j as f64));
    }
    out
}

/// Everything needed to evaluate the cavity amplitudes of one run.
struct Setup {
    params: SystemParams,
    packet: PhotonPacket,
    trunc: Truncation,
    fc: FcPair,
    expansion: MirrorExpansion,
}

impl Setup {
    fn new(mirror: &MirrorInit, params: &SystemParams, packet: &PhotonPacket, trunc: &Truncation, order: FcOrder) -> Result<Self> {
        trunc.validate()?;
        if trunc.n_ph == 0 {
            return Err(Error::invalid(MODULE, "truncation.n_ph", "must be at least 1"));
        }
        let expansion = mirror.expand(trunc.n_ph - 1, trunc.tol)?;
        trunc.check_labels(expansion.max_label())?;
        Ok(Setup {
            params: *params,
            packet: *packet,
            trunc: *trunc,
            fc: FcPair::new(params.beta0(), trunc.dim(), order)?,
            expansion,
        })
    }

    fn components(&self) -> Vec<(usize, C64, f64)> {
        match &self.expansion {
            MirrorExpansion::Coherent(v) => v.iter().map(|(n, c)| (*n, *c, 1.0)).collect(),
            MirrorExpansion::Incoherent(v) => v.iter().map(|(n, p)| (*n, C64::new(1.0, 0.0), *p)).collect(),
        }
    }

    fn coherent(&self) -> bool {
        matches!(self.expansion, MirrorExpansion::Coherent(_))
    }

    fn p2(&self, times: &[f64]) -> Result<Vec<f64>> {
        let dim = self.trunc.dim();
        let comps = self.components();
        let tol = cluster_tolerance(Poles::new(&self.params, &self.packet, 0).scale());
        let mut out = vec![0.0; times.len()];
        for m in 0..dim {
            let terms: Vec<_> = comps
                .iter()
                .map(|(n0, c, w)| (laplace_a(m, *n0, &self.params, &self.packet, &self.fc), *c, *w))
                .collect();
            for (ti, &t) in times.iter().enumerate() {
                if self.coherent() {
                    let mut amp = C64::new(0.0, 0.0);
                    for (tm, c, _) in &terms {
                        amp += c * invert(tm, t, tol)?;
                    }
                    out[ti] += amp.norm_sqr();
                } else {
                    for (tm, _, w) in &terms {
                        out[ti] += w * invert(tm, t, tol)?.norm_sqr();
                    }
                }
            }
        }
        Ok(out)
    }

    /// Largest distance of a fixed pole frequency, or of the offset between
    /// a moving pole and Δk, from zero.
    fn pole_reach(&self) -> f64 {
        let nu = self.params.nu();
        let (d1, d2) = (self.packet.delta1(), self.packet.delta2());
        (d1.abs() + d2.abs()).max(d1.abs().max(d2.abs()) + nu)
            + 4.0 * nu
            + (self.trunc.dim() + self.expansion.max_label()) as f64
            + 1.0
    }

    fn p1(&self, times: &[f64], order: usize) -> Result<Vec<f64>> {
        let dim = self.trunc.dim();
        let comps = self.components();
        let nt = times.len();
        let kernels: Option<Vec<Vec<BKernel>>> = comps
            .iter()
            .map(|(n0, _, _)| {
                (0..dim)
                    .map(|m| BKernel::new(m, *n0, &self.params, &self.packet, &self.fc))
                    .collect::<Option<Vec<_>>>()
            })
            .collect();
        let source = match kernels {
            Some(kernels) => {
                let tables = kernels.iter().map(|ks| ks[0].tables(times)).collect();
                Source::Fast { kernels, tables }
            }
            None => Source::Generic {
                tol: cluster_tolerance(Poles::new(&self.params, &self.packet, 0).scale()),
            },
        };

        // Beyond ±x_split the amplitude is split into its fixed-pole and
        // moving-pole parts; the cross term between them oscillates as
        // e^{iΔk t} and is integrated by parts from ±x_osc(t) outwards.
        let x_split = self.trunc.window(&self.params, &self.packet).max(2.0 * self.pole_reach());
        let x_osc: Vec<f64> = times
            .iter()
            .map(|&t| if t > 0.0 { x_split.max(40.0 / t) } else { f64::INFINITY })
            .collect();
        let mut breaks = k_breakpoints(&self.params, &self.packet, dim + self.expansion.max_label() + 1);
        for &x in x_osc.iter().filter(|x| x.is_finite()) {
            breaks.extend([x, -x]);
        }
        let opts = AdaptiveOptions {
            rel_tol: self.trunc.quad_tol,
            abs_tol: 1e-12,
            max_panels: 400_000,
            order,
        };

        let mut eval = Evaluator::new(self, &source, &comps, times);
        let mut failure: Option<Error> = None;
        let f = |dk: f64, out: &mut [f64]| {
            if failure.is_some() {
                out.iter_mut().for_each(|o| *o = 0.0);
                return;
            }
            let split = dk.abs() > x_split;
            for (ti, o) in out.iter_mut().enumerate() {
                let smooth_only = split && dk.abs() >= x_osc[ti];
                match eval.density(dk, ti, split, smooth_only) {
                    Ok((v, _)) => *o = v,
                    Err(e) => {
                        failure = Some(e);
                        *o = 0.0;
                    }
                }
            }
        };
        let r = integrate_real_line(f, nt, -x_split, x_split, &breaks, 0.25, &opts, MODULE);
        if let Some(e) = failure {
            return Err(e);
        }
        let mut values = r?.values;

        // ∫_X^∞ h e^{iΔk t} dΔk = −e^{iXt} Σ_j (−1)^j h^{(j)}(X)/(it)^{j+1}, and
        // mirrored below; three terms with derivatives by central differences.
        for (ti, &t) in times.iter().enumerate() {
            let x = x_osc[ti];
            if !x.is_finite() {
                continue;
            }
            let eta = 1e-2 * x;
            let it = C64::new(0.0, t);
            let mut total = C64::new(0.0, 0.0);
            for sign in [1.0, -1.0] {
                let mut h = [C64::new(0.0, 0.0); 3];
                for (j, dx) in [-eta, 0.0, eta].into_iter().enumerate() {
                    h[j] = eval.density(sign * (x + dx), ti, true, true)?.1;
                }
                // Derivatives with respect to Δk (the grid runs outwards).
                let d1 = sign * (h[2] - h[0]) / (2.0 * eta);
                let d2 = (h[2] - 2.0 * h[1] + h[0]) / (eta * eta);
                let e = C64::from_polar(1.0, sign * x * t);
                let series = h[1] / it - d1 / (it * it) + d2 / (it * it * it);
                total += -sign * e * series;
            }
            values[ti] += 2.0 * total.re;
        }
        Ok(values)
    }
}

/// Where the B amplitudes come from.
enum Source {
    Fast {
        kernels: Vec<Vec<BKernel>>,
        tables: Vec<Vec<TimeTable>>,
    },
    Generic {
        tol: f64,
    },
}

/// Evaluates Σ_m |B_m(Δk, t)|² (summed coherently or incoherently over the
/// mirror components), with scratch buffers reused across calls.
struct Evaluator<'a> {
    setup: &'a Setup,
    source: &'a Source,
    comps: &'a [(usize, C64, f64)],
    times: &'a [f64],
    coherent: bool,
    scratch: Vec<C64>,
    /// (S, F) per (component, m) at the current point.
    parts: Vec<(C64, C64)>,
    generic_dk: f64,
    generic_terms: Vec<Vec<RationalTerm>>,
}

impl<'a> Evaluator<'a> {
    fn new(setup: &'a Setup, source: &'a Source, comps: &'a [(usize, C64, f64)], times: &'a [f64]) -> Self {
        Evaluator {
            setup,
            source,
            comps,
            times,
            coherent: setup.coherent(),
            scratch: Vec::new(),
            parts: Vec::new(),
            generic_dk: f64::NAN,
            generic_terms: Vec::new(),
        }
    }

    /// Returns the density and, when `split`, the cross factor h with
    /// |B|² = |S|² + |F|² + 2 Re(h e^{iΔk t}). With `smooth_only` the cross
    /// term is left out of the density.
    fn density(&mut self, dk: f64, ti: usize, split: bool, smooth_only: bool) -> Result<(f64, C64)> {
        let dim = self.setup.trunc.dim();
        let t = self.times[ti];
        let ph = phase(dk, t);
        self.parts.clear();
        match self.source {
            Source::Fast { kernels, tables } => {
                for (ci, ks) in kernels.iter().enumerate() {
                    let tab = &tables[ci][ti];
                    for k in ks {
                        self.parts.push(if split {
                            k.eval_split(dk, tab)
                        } else {
                            (k.eval(dk, ph, tab, &mut self.scratch), C64::new(0.0, 0.0))
                        });
                    }
                }
            }
            Source::Generic { tol } => {
                if self.generic_dk != dk {
                    let s = self.setup;
                    self.generic_terms = self
                        .comps
                        .iter()
                        .flat_map(|(n0, _, _)| {
                            (0..dim).map(move |m| laplace_b(m, dk, *n0, &s.params, &s.packet, &s.fc))
                        })
                        .collect();
                    self.generic_dk = dk;
                }
                for terms in &self.generic_terms {
                    self.parts.push(if split {
                        let moving = |p: C64| (p.im + dk).abs() < 0.5 * dk.abs();
                        let (a, b) = invert_parts(terms, t, *tol, moving)?;
                        (a, b * ph.conj())
                    } else {
                        (invert(terms, t, *tol)?, C64::new(0.0, 0.0))
                    });
                }
            }
        }

        let mut value = 0.0;
        let mut h = C64::new(0.0, 0.0);
        let mut add = |w: f64, s: C64, f: C64| {
            if split {
                value += w * (s.norm_sqr() + f.norm_sqr());
                h += w * s * f.conj();
            } else {
                value += w * s.norm_sqr();
            }
        };
        if self.coherent {
            for m in 0..dim {
                let (mut s, mut f) = (C64::new(0.0, 0.0), C64::new(0.0, 0.0));
                for (ci, (_, c, _)) in self.comps.iter().enumerate() {
                    let (a, b) = self.parts[ci * dim + m];
                    s += c * a;
                    f += c * b;
                }
                add(1.0, s, f);
            }
        } else {
            for (ci, (_, _, w)) in self.comps.iter().enumerate() {
                for m in 0..dim {
                    let (a, b) = self.parts[ci * dim + m];
                    add(*w, a, b);
                }
            }
        }
        if split && !smooth_only {
            value += 2.0 * (h * ph.conj()).re;
        }
        Ok((value, h))
    }
}

/// P₁(t), P₂(t) and g²(t) for a mirror prepared in `mirror`.
///
/// P₂ = Σ_m |Σ_{n0} c_{n0} A_{n0,m}(t)|² for a pure mirror state and
/// Σ_{n0} p_{n0} Σ_m |A_{n0,m}(t)|² for a mixed one; P₁ is the same with
/// B_{n0,m,k}(t), integrated over the continuum detuning Δk.
pub fn probabilities(
    mirror: &MirrorInit,
    params: &SystemParams,
    packet: &PhotonPacket,
    trunc: &Truncation,
    times: &[f64],
) -> Result<TransientTrace> {
    probabilities_with_order(mirror, params, packet, trunc, times, FcOrder::Exact)
}

/// [`probabilities`] with a chosen Franck-Condon expansion order.
pub fn probabilities_with_order(
    mirror: &MirrorInit,
    params: &SystemParams,
    packet: &PhotonPacket,
    trunc: &Truncation,
    times: &[f64],
    order: FcOrder,
) -> Result<TransientTrace> {
    traced(mirror, params, packet, trunc, times, order, 8)
}

fn traced(
    mirror: &MirrorInit,
    params: &SystemParams,
    packet: &PhotonPacket,
    trunc: &Truncation,
    times: &[f64],
    order: FcOrder,
    rule: usize,
) -> Result<TransientTrace> {
    check_times(times)?;
    let setup = Setup::new(mirror, params, packet, trunc, order)?;
    let p2 = setup.p2(times)?;
    let p1 = setup.p1(times, rule)?;
    Ok(TransientTrace::from_probs(times.to_vec(), p1, p2))
}

/// One point of a g0 scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScanPoint {
    pub g0: f64,
    pub p1: f64,
    pub p2: f64,
    pub g2: Option<f64>,
}

/// g²(t_probe) as a function of g0, with both photons tuned to the
/// single-photon resonance δ1 = δ2 = −ν(g0). Points are computed in parallel
/// and returned in input order.
pub fn g2_scan(
    g0_values: &[f64],
    t_probe: f64,
    mirror: &MirrorInit,
    gamma_c: f64,
    epsilon: f64,
    trunc: &Truncation,
) -> Result<Vec<ScanPoint>> {
    if !(t_probe.is_finite() && t_probe > 0.0) {
        return Err(Error::invalid(MODULE, "t_probe", "must be finite and > 0"));
    }
    g0_values
        .par_iter()
        .map(|&g0| {
            let params = SystemParams::new(g0, gamma_c)?;
            let packet = PhotonPacket::single_photon_resonant(&params, epsilon)?;
            let tr = probabilities(mirror, &params, &packet, trunc, &[t_probe])?;
            Ok(ScanPoint {
                g0,
                p1: tr.p1[0],
                p2: tr.p2[0],
                g2: tr.g2[0],
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Single-photon occupation of a linear cavity driven by a Lorentzian
    /// packet of half-width ε detuned by δ.
    fn single_photon(gamma: f64, eps: f64, delta: f64, t: f64) -> f64 {
        let a = C64::new(-eps, -delta) * t;
        let num = (a.exp() - C64::new(-0.5 * gamma * t, 0.0).exp()).norm_sqr();
        2.0 * gamma * eps * num / C64::new(0.5 * gamma - eps, -delta).norm_sqr()
    }

    #[test]
    fn g2_arithmetic() {
        assert!((g2_of_probs(0.2, 0.01).unwrap() - 0.02 / 0.0484).abs() < 1e-15);
        assert_eq!(g2_of_probs(0.3, 0.0), Some(0.0));
        assert!((g2_of_probs(0.0, 0.25).unwrap() - 2.0).abs() < 1e-15);
        assert_eq!(g2_of_probs(0.0, 0.0), None);
    }

    #[test]
    fn sideband_positions() {
        let r = sideband_resonances(3);
        assert_eq!(r[0], 0.0);
        assert!((r[1] - 0.5f64.sqrt()).abs() < 1e-15);
        assert!((r[2] - 1.0).abs() < 1e-15);
        assert!((r[3] - 1.224744871391589).abs() < 1e-12);
    }

    #[test]
    fn linear_cavity_gives_independent_photons() {
        let (gamma, eps, delta) = (0.3, 0.1, 0.05);
        let params = SystemParams::new(0.0, gamma).unwrap();
        let packet = PhotonPacket::new(delta, delta, eps).unwrap();
        let trunc = Truncation::new(1).with_quad_tol(1e-8);
        let times: Vec<f64> = (0..=20).map(|i| i as f64 * 2.5).collect();
        let tr = probabilities(&MirrorInit::Fock(0), &params, &packet, &trunc, &times).unwrap();
        for (i, &t) in times.iter().enumerate() {
            let p = single_photon(gamma, eps, delta, t);
            assert!((tr.p2[i] - p * p).abs() < 1e-10, "t={t}");
            assert!((tr.p1[i] - 2.0 * p * (1.0 - p)).abs() < 1e-6, "t={t}: {} vs {}", tr.p1[i], 2.0 * p * (1.0 - p));
            if let Some(g) = tr.g2[i] {
                assert!((g - 0.5).abs() < 1e-5);
            }
        }
        assert_eq!(tr.g2[0], None);
    }

    #[test]
    fn one_element_pure_state_equals_fock() {
        let params = SystemParams::new(0.4, 0.1).unwrap();
        let packet = PhotonPacket::single_photon_resonant(&params, 0.02).unwrap();
        let trunc = Truncation::new(4).with_quad_tol(1e-5);
        let times = [5.0, 30.0];
        let a = probabilities(&MirrorInit::Fock(0), &params, &packet, &trunc, &times).unwrap();
        let b = probabilities(&MirrorInit::Pure(vec![C64::new(1.0, 0.0)]), &params, &packet, &trunc, &times).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn doubling_the_rule_changes_p1_below_tolerance() {
        let params = SystemParams::new(0.5, 0.1).unwrap();
        let packet = PhotonPacket::single_photon_resonant(&params, 0.01).unwrap();
        let trunc = Truncation::new(4).with_quad_tol(1e-6);
        let times = [3.0, 20.0, 60.0, 100.0];
        let mirror = MirrorInit::Fock(0);
        let a = traced(&mirror, &params, &packet, &trunc, &times, FcOrder::Exact, 8).unwrap();
        let b = traced(&mirror, &params, &packet, &trunc, &times, FcOrder::Exact, 16).unwrap();
        for (x, y) in a.p1.iter().zip(&b.p1) {
            assert!((x - y).abs() < 1e-6 * y.abs().max(1e-6), "{x} vs {y}");
        }
        assert_eq!(a.p2, b.p2);
    }

    #[test]
    fn mixed_mirror_is_the_weighted_sum_of_fock_runs() {
        let params = SystemParams::new(0.3, 0.1).unwrap();
        let packet = PhotonPacket::single_photon_resonant(&params, 0.01).unwrap();
        let trunc = Truncation::new(4).with_quad_tol(1e-9);
        let times = [10.0, 50.0];
        let weights = [0.6, 0.4];
        let fock: Vec<_> = (0..2)
            .map(|n| probabilities(&MirrorInit::Fock(n), &params, &packet, &trunc, &times).unwrap())
            .collect();
        let setup = Setup::new(&MirrorInit::Fock(0), &params, &packet, &trunc, FcOrder::Exact).unwrap();
        let setup = Setup {
            expansion: MirrorExpansion::Incoherent(vec![(0, weights[0]), (1, weights[1])]),
            ..setup
        };
        let p1 = setup.p1(&times, 8).unwrap();
        let p2 = setup.p2(&times).unwrap();
        for i in 0..times.len() {
            let w1 = weights[0] * fock[0].p1[i] + weights[1] * fock[1].p1[i];
            let w2 = weights[0] * fock[0].p2[i] + weights[1] * fock[1].p2[i];
            assert!((p1[i] - w1).abs() < 1e-7, "{} vs {w1}", p1[i]);
            assert!((p2[i] - w2).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_negative_times() {
        let params = SystemParams::new(0.4, 0.1).unwrap();
        let packet = PhotonPacket::single_photon_resonant(&params, 0.02).unwrap();
        let r = probabilities(&MirrorInit::Fock(0), &params, &packet, &Truncation::new(3), &[-1.0]);
        assert!(matches!(r, Err(Error::InvalidParameter { .. })));
    }
}
