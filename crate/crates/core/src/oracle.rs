//! Brute-force reference: the equations of motion for A, B, C with the photon
//! continuum replaced by a uniform comb of n_k modes on [−W, W].
//!
//! Amplitudes are stored rescaled so the state vector has unit Euclidean
//! norm: a_m = A_m, b_{m,i} = √dk B_{m,i}, c_{m,ij} = dk C_{m,ij} for i > j
//! and c_{m,ii} = dk C_{m,ii}/√2. The two-photon sector keeps the diagonal
//! i = j (two photons in one comb mode); dropping it would leave the
//! discretized dynamics non-unitary.
//!
//! Integration runs in the interaction picture with respect to the free
//! energies, with an adaptive Dormand-Prince 5(4) pair whose error is
//! measured in the state norm.

use std::f64::consts::SQRT_2;
use std::fmt::Write as _;

use num_complex::Complex64;
use serde::Serialize;

use crate::cli::fmt_num;
use crate::error::{Error, Result};
use crate::franck_condon::{FcOrder, FcPair};
use crate::params::{initial_amplitude_c, PhotonPacket, SystemParams};

const MODULE: &str = "oracle";

type C64 = Complex64;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Comb resolution of the continuum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Discretization {
    pub n_k: usize,
    /// Half-window W in Δk.
    pub w: f64,
    pub n_ph: usize,
}

impl Discretization {
    pub fn new(n_k: usize, w: f64, n_ph: usize) -> Result<Self> {
        if n_k < 3 {
            return Err(Error::invalid(MODULE, "n_k", "need at least 3 modes"));
        }
        if !(w.is_finite() && w > 0.0) {
            return Err(Error::invalid(MODULE, "w", "must be finite and > 0"));
        }
        Ok(Discretization { n_k, w, n_ph })
    }

    /// Desk-scale profile: 801 modes on [−4, 4] (dk = 0.01), three phonons.
    pub fn desk() -> Self {
        Discretization {
            n_k: 801,
            w: 4.0,
            n_ph: 3,
        }
    }

    pub fn dk(&self) -> f64 {
        2.0 * self.w / (self.n_k - 1) as f64
    }

    pub fn modes(&self) -> Vec<f64> {
        let dk = self.dk();
        (0..self.n_k).map(|i| -self.w + dk * i as f64).collect()
    }
}

/// A discretized state together with the couplings that evolve it.
#[derive(Debug, Clone)]
pub struct DiscretizedSystem {
    pub disc: Discretization,
    pub params: SystemParams,
    /// ξ_d = √(γ_c dk / 2π).
    pub xi_d: f64,
    modes: Vec<f64>,
    fc: FcPair,
    /// a, then b (m-major), then packed pairs i ≥ j (m-major).
    pub state: Vec<C64>,
    /// 1 − ‖state‖² of the sampled packet before renormalization.
    pub norm_deficit: f64,
}

fn pair_index(i: usize, j: usize) -> usize {
    debug_assert!(i >= j);
    i * (i + 1) / 2 + j
}

impl DiscretizedSystem {
    fn dim(&self) -> usize {
        self.disc.n_ph + 1
    }

    fn n_pairs(&self) -> usize {
        self.disc.n_k * (self.disc.n_k + 1) / 2
    }

    fn offsets(&self) -> (usize, usize) {
        let d = self.dim();
        (d, d + d * self.disc.n_k)
    }

    /// Switches the light-matter coupling off.
    pub fn decoupled(mut self) -> Self {
        self.xi_d = 0.0;
        self
    }

    pub fn norm_sqr(&self) -> f64 {
        self.state.iter().map(|z| z.norm_sqr()).sum()
    }

    /// (P₁, P₂) of the current state.
    pub fn probabilities(&self) -> (f64, f64) {
        let (ob, oc) = self.offsets();
        let p2 = self.state[..ob].iter().map(|z| z.norm_sqr()).sum();
        let p1 = self.state[ob..oc].iter().map(|z| z.norm_sqr()).sum();
        (p1, p2)
    }

    /// C_{m,p,q} at comb modes i > j (unscaled).
    pub fn c_amplitude(&self, m: usize, i: usize, j: usize) -> C64 {
        let (_, oc) = self.offsets();
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        let v = self.state[oc + m * self.n_pairs() + pair_index(i, j)];
        let dk = self.disc.dk();
        if i == j {
            v * SQRT_2 / dk
        } else {
            v / dk
        }
    }
}

/// Samples the two-photon packet on the comb with the mirror in |n0⟩,
/// renormalizes, and records the deficit.
pub fn build_initial(
    params: &SystemParams,
    packet: &PhotonPacket,
    n0: usize,
    disc: &Discretization,
) -> Result<DiscretizedSystem> {
    let needed = packet.delta1().abs().max(packet.delta2().abs()) + 10.0 * packet.epsilon();
    if needed >= disc.w {
        return Err(Error::Coverage { window: disc.w, needed });
    }
    if n0 > disc.n_ph {
        return Err(Error::Truncation {
            module: MODULE,
            n_ph: disc.n_ph,
            deficit: 1.0,
            tol: 0.0,
        });
    }
    let dim = disc.n_ph + 1;
    let n_k = disc.n_k;
    let dk = disc.dk();
    let modes = disc.modes();
    let n_pairs = n_k * (n_k + 1) / 2;
    let mut state = vec![ZERO; dim + dim * n_k + dim * n_pairs];
    let oc = dim + dim * n_k + n0 * n_pairs;
    for i in 0..n_k {
        for j in 0..=i {
            let c = initial_amplitude_c(n0, modes[i], modes[j], packet, n0) * dk;
            state[oc + pair_index(i, j)] = if i == j { c / SQRT_2 } else { c };
        }
    }
    let norm: f64 = state.iter().map(|z| z.norm_sqr()).sum();
    let scale = 1.0 / norm.sqrt();
    state.iter_mut().for_each(|z| *z *= scale);
    Ok(DiscretizedSystem {
        disc: *disc,
        params: *params,
        xi_d: (params.gamma_c() * dk / (2.0 * std::f64::consts::PI)).sqrt(),
        modes,
        fc: FcPair::new(params.beta0(), dim, FcOrder::Exact)?,
        state,
        norm_deficit: 1.0 - norm,
    })
}

/// Right-hand side in the interaction picture, with reusable buffers.
struct Rhs<'a> {
    sys: &'a DiscretizedSystem,
    e: Vec<C64>,
    s: Vec<C64>,
    t_buf: Vec<C64>,
    g: Vec<C64>,
}

impl<'a> Rhs<'a> {
    fn new(sys: &'a DiscretizedSystem) -> Self {
        let d = sys.dim();
        let n_k = sys.disc.n_k;
        Rhs {
            sys,
            e: vec![ZERO; n_k],
            s: vec![ZERO; d],
            t_buf: vec![ZERO; d * n_k],
            g: vec![ZERO; d * n_k],
        }
    }

    /// e^{i(m − n + shift) t} · table[m][n].
    fn phased(&self, table: &crate::franck_condon::FcTable, shift: f64, t: f64) -> Vec<C64> {
        let d = self.sys.dim();
        let mut out = vec![ZERO; d * d];
        for m in 0..d {
            for n in 0..d {
                let f = table.get(m, n);
                if f != 0.0 {
                    out[m * d + n] = C64::from_polar(f, (m as f64 - n as f64 + shift) * t);
                }
            }
        }
        out
    }

    fn eval(&mut self, t: f64, y: &[C64], dy: &mut [C64]) {
        let sys = self.sys;
        let d = sys.dim();
        let n_k = sys.disc.n_k;
        let n_pairs = sys.n_pairs();
        let (ob, oc) = sys.offsets();
        let xi = sys.xi_d;
        let nu = sys.params.nu();
        let mi = C64::new(0.0, -1.0);
        if xi == 0.0 {
            dy.iter_mut().for_each(|z| *z = ZERO);
            return;
        }

        for (e, &p) in self.e.iter_mut().zip(&sys.modes) {
            *e = C64::from_polar(1.0, -p * t);
        }
        let (a, rest) = y.split_at(ob);
        let (b, c) = rest.split_at(oc - ob);
        let (da, drest) = dy.split_at_mut(ob);
        let (db, dc) = drest.split_at_mut(oc - ob);

        // Two-photon cavity state.
        for n in 0..d {
            self.s[n] = b[n * n_k..(n + 1) * n_k].iter().zip(&self.e).map(|(x, e)| x * e).sum();
        }
        let ma = self.phased(&sys.fc.minus, -3.0 * nu, t);
        for m in 0..d {
            let acc: C64 = (0..d).map(|n| ma[m * d + n] * self.s[n]).sum();
            da[m] = mi * SQRT_2 * xi * acc;
        }

        // T_{n,k} = Σ_{p≠k} E_p c_{n,pk} + √2 E_k c_{n,kk}.
        self.t_buf.iter_mut().for_each(|z| *z = ZERO);
        for n in 0..d {
            let cn = &c[n * n_pairs..(n + 1) * n_pairs];
            let tn = &mut self.t_buf[n * n_k..(n + 1) * n_k];
            for i in 0..n_k {
                let row = &cn[pair_index(i, 0)..=pair_index(i, i)];
                let ei = self.e[i];
                let mut ti = ZERO;
                for (j, &cij) in row[..i].iter().enumerate() {
                    ti += self.e[j] * cij;
                    tn[j] += ei * cij;
                }
                tn[i] += ti + SQRT_2 * ei * row[i];
            }
        }
        let pb = self.phased(&sys.fc.plus, 3.0 * nu, t);
        let mb = self.phased(&sys.fc.minus, -nu, t);
        for m in 0..d {
            let from_a: C64 = (0..d).map(|n| pb[m * d + n] * a[n]).sum();
            for k in 0..n_k {
                let mut acc = SQRT_2 * from_a * self.e[k].conj();
                for n in 0..d {
                    acc += mb[m * d + n] * self.t_buf[n * n_k + k];
                }
                db[m * n_k + k] = mi * xi * acc;
            }
        }

        // G_{m,i} = Σ_n plus[m][n] e^{i(m−n+ν)t} b_{n,i}.
        let pc = self.phased(&sys.fc.plus, nu, t);
        for m in 0..d {
            for k in 0..n_k {
                self.g[m * n_k + k] = (0..d).map(|n| pc[m * d + n] * b[n * n_k + k]).sum();
            }
        }
        for m in 0..d {
            let gm = &self.g[m * n_k..(m + 1) * n_k];
            let dcm = &mut dc[m * n_pairs..(m + 1) * n_pairs];
            for i in 0..n_k {
                let ei = self.e[i].conj();
                let gi = gm[i];
                let base = pair_index(i, 0);
                for j in 0..i {
                    dcm[base + j] = mi * xi * (self.e[j].conj() * gi + ei * gm[j]);
                }
                dcm[base + i] = mi * SQRT_2 * xi * ei * gi;
            }
        }
    }
}

/// Integrator controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OdeOptions {
    /// Local error per step, in the state norm.
    pub tol: f64,
    pub h_init: f64,
    pub h_min: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            tol: 1e-9,
            h_init: 0.05,
            h_min: 1e-10,
            max_steps: 2_000_000,
        }
    }
}

/// One sample of an oracle run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleSample {
    pub t: f64,
    pub p1: f64,
    pub p2: f64,
    pub norm: f64,
}

// Dormand-Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// Difference between the fifth- and fourth-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn combine(out: &mut [C64], y: &[C64], h: f64, ks: &[(&[C64], f64)]) {
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = ZERO;
        for (k, c) in ks {
            acc += k[i] * *c;
        }
        *o = y[i] + acc * h;
    }
}

/// Evolves the system to `t_end`, recording (P₁, P₂, norm) every `dt_out`
/// (and at t = 0 and t_end). The system is left in the final state.
pub fn integrate(
    sys: &mut DiscretizedSystem,
    t_end: f64,
    dt_out: f64,
    opts: &OdeOptions,
) -> Result<Vec<OracleSample>> {
    if !(t_end.is_finite() && t_end >= 0.0) {
        return Err(Error::invalid(MODULE, "t_end", "must be finite and >= 0"));
    }
    if !(dt_out.is_finite() && dt_out > 0.0) {
        return Err(Error::invalid(MODULE, "dt_out", "must be finite and > 0"));
    }
    let mut outputs: Vec<f64> = Vec::new();
    let mut k = 0usize;
    loop {
        let t = k as f64 * dt_out;
        if t >= t_end - 1e-12 * dt_out {
            break;
        }
        outputs.push(t);
        k += 1;
    }
    outputs.push(t_end);

    let n = sys.state.len();
    let snapshot = sys.clone();
    let mut rhs = Rhs::new(&snapshot);
    let mut y = std::mem::take(&mut sys.state);
    let mut k1 = vec![ZERO; n];
    let mut k2 = vec![ZERO; n];
    let mut k3 = vec![ZERO; n];
    let mut k4 = vec![ZERO; n];
    let mut k5 = vec![ZERO; n];
    let mut k6 = vec![ZERO; n];
    let mut k7 = vec![ZERO; n];
    let mut tmp = vec![ZERO; n];

    let sample = |t: f64, y: &[C64]| {
        let (ob, oc) = snapshot.offsets();
        let p2: f64 = y[..ob].iter().map(|z| z.norm_sqr()).sum();
        let p1: f64 = y[ob..oc].iter().map(|z| z.norm_sqr()).sum();
        let norm = y.iter().map(|z| z.norm_sqr()).sum::<f64>();
        OracleSample { t, p1, p2, norm }
    };

    let mut trajectory = Vec::with_capacity(outputs.len());
    let mut t = 0.0;
    let mut h = opts.h_init;
    let mut steps = 0usize;
    rhs.eval(t, &y, &mut k1);
    for &target in &outputs {
        while t < target - 1e-13 * target.max(1.0) {
            let hs = h.min(target - t);
            combine(&mut tmp, &y, hs, &[(&k1, A21)]);
            rhs.eval(t + C2 * hs, &tmp, &mut k2);
            combine(&mut tmp, &y, hs, &[(&k1, A31), (&k2, A32)]);
            rhs.eval(t + C3 * hs, &tmp, &mut k3);
            combine(&mut tmp, &y, hs, &[(&k1, A41), (&k2, A42), (&k3, A43)]);
            rhs.eval(t + C4 * hs, &tmp, &mut k4);
            combine(&mut tmp, &y, hs, &[(&k1, A51), (&k2, A52), (&k3, A53), (&k4, A54)]);
            rhs.eval(t + C5 * hs, &tmp, &mut k5);
            combine(&mut tmp, &y, hs, &[(&k1, A61), (&k2, A62), (&k3, A63), (&k4, A64), (&k5, A65)]);
            rhs.eval(t + hs, &tmp, &mut k6);
            combine(&mut tmp, &y, hs, &[(&k1, B1), (&k3, B3), (&k4, B4), (&k5, B5), (&k6, B6)]);
            rhs.eval(t + hs, &tmp, &mut k7);
            let mut err = 0.0;
            for i in 0..n {
                let e = (k1[i] * E1 + k3[i] * E3 + k4[i] * E4 + k5[i] * E5 + k6[i] * E6 + k7[i] * E7) * hs;
                err += e.norm_sqr();
            }
            let err = err.sqrt();
            steps += 1;
            if steps > opts.max_steps {
                return Err(Error::Stiffness { t, h: hs });
            }
            let factor = if err == 0.0 { 5.0 } else { (0.9 * (opts.tol / err).powf(0.2)).clamp(0.2, 5.0) };
            if err <= opts.tol {
                t += hs;
                std::mem::swap(&mut y, &mut tmp);
                std::mem::swap(&mut k1, &mut k7);
                // Do not let a short step forced by an output time shrink h.
                if hs == h {
                    h *= factor;
                }
            } else {
                h = hs * factor;
                if h < opts.h_min {
                    return Err(Error::Stiffness { t, h });
                }
            }
        }
        trajectory.push(sample(target, &y));
    }
    sys.state = y;
    Ok(trajectory)
}

/// One run of a convergence sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRun {
    pub factor: f64,
    pub disc: Discretization,
    pub trajectory: Vec<OracleSample>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub runs: Vec<SweepRun>,
    /// max_t |P₁| and |P₂| differences between consecutive runs.
    pub cauchy_p1: Vec<f64>,
    pub cauchy_p2: Vec<f64>,
    /// Pairs of consecutive differences where the later one is not smaller.
    pub warnings: Vec<String>,
}

impl SweepReport {
    /// The last run, the best-resolved one.
    pub fn finest(&self) -> &SweepRun {
        self.runs.last().expect("sweep has at least two runs")
    }

    /// Largest Cauchy difference between the last two runs.
    pub fn final_difference(&self) -> f64 {
        let i = self.cauchy_p1.len() - 1;
        self.cauchy_p1[i].max(self.cauchy_p2[i])
    }

    pub fn to_key_value(&self) -> String {
        let mut s = String::new();
        for (i, r) in self.runs.iter().enumerate() {
            let _ = writeln!(
                s,
                "run_{i}=factor:{},n_k:{},w:{},n_ph:{}",
                fmt_num(r.factor),
                r.disc.n_k,
                fmt_num(r.disc.w),
                r.disc.n_ph
            );
        }
        for (i, (a, b)) in self.cauchy_p1.iter().zip(&self.cauchy_p2).enumerate() {
            let _ = writeln!(s, "cauchy_{i}_{}_p1={}", i + 1, fmt_num(*a));
            let _ = writeln!(s, "cauchy_{i}_{}_p2={}", i + 1, fmt_num(*b));
        }
        let _ = writeln!(s, "monotone={}", self.warnings.is_empty());
        for w in &self.warnings {
            let _ = writeln!(s, "warning={w}");
        }
        s
    }
}

/// How a sweep factor f changes the discretization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SweepAxis {
    /// n_k − 1 → f (n_k − 1) at fixed W: finer spacing.
    Spacing,
    /// W → f W and n_k − 1 → f (n_k − 1): wider window at fixed spacing.
    Window,
}

/// Reruns the oracle with the discretization scaled by each factor and
/// reports how much the P₁, P₂ traces move between consecutive runs.
#[allow(clippy::too_many_arguments)]
pub fn convergence_sweep(
    params: &SystemParams,
    packet: &PhotonPacket,
    n0: usize,
    base: &Discretization,
    axis: SweepAxis,
    factors: &[f64],
    t_end: f64,
    dt_out: f64,
    opts: &OdeOptions,
) -> Result<SweepReport> {
    if factors.len() < 2 {
        return Err(Error::invalid(MODULE, "factors", "need at least two values"));
    }
    let mut runs = Vec::with_capacity(factors.len());
    for &f in factors {
        if !(f.is_finite() && f > 0.0) {
            return Err(Error::invalid(MODULE, "factors", "must be finite and > 0"));
        }
        let intervals = ((base.n_k - 1) as f64 * f).round() as usize;
        let w = match axis {
            SweepAxis::Spacing => base.w,
            SweepAxis::Window => base.w * f,
        };
        let disc = Discretization::new(intervals + 1, w, base.n_ph)?;
        let mut sys = build_initial(params, packet, n0, &disc)?;
        let trajectory = integrate(&mut sys, t_end, dt_out, opts)?;
        runs.push(SweepRun { factor: f, disc, trajectory });
    }
    let mut cauchy_p1 = Vec::new();
    let mut cauchy_p2 = Vec::new();
    for pair in runs.windows(2) {
        let (a, b) = (&pair[0].trajectory, &pair[1].trajectory);
        let d1 = a.iter().zip(b).map(|(x, y)| (x.p1 - y.p1).abs()).fold(0.0, f64::max);
        let d2 = a.iter().zip(b).map(|(x, y)| (x.p2 - y.p2).abs()).fold(0.0, f64::max);
        cauchy_p1.push(d1);
        cauchy_p2.push(d2);
    }
    let mut warnings = Vec::new();
    for i in 1..cauchy_p1.len() {
        let prev = cauchy_p1[i - 1].max(cauchy_p2[i - 1]);
        let next = cauchy_p1[i].max(cauchy_p2[i]);
        if next >= prev {
            warnings.push(format!(
                "non-monotone between factors {} -> {} ({}) and {} -> {} ({})",
                factors[i - 1],
                factors[i],
                fmt_num(prev),
                factors[i],
                factors[i + 1],
                fmt_num(next)
            ));
        }
    }
    Ok(SweepReport {
        runs,
        cauchy_p1,
        cauchy_p2,
        warnings,
    })
}
