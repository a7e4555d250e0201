//! Two-photon joint spectrum S(Δp, Δq) on a grid, and its summary statistics.
//!
//! Cost per grid point is O(K·dim³) with K the number of mirror labels and
//! dim = n_ph + 1. When both axes coincide only the upper triangle is
//! evaluated and mirrored, since S is symmetric by construction.

use std::fmt::Write as _;
use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::cli::fmt_num;
use crate::error::{Error, Result};
use crate::franck_condon::FcOrder;
use crate::longtime::{assemble_all, AmplitudeContext};
use crate::params::{MirrorExpansion, MirrorInit, PhotonPacket, SystemParams, Truncation};

const MODULE: &str = "spectrum";

/// A rectangular grid of detunings, inclusive of both ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub p_range: (f64, f64),
    pub q_range: (f64, f64),
    pub n_p: usize,
    pub n_q: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec::square(-2.5, 1.5, 241)
    }
}

impl GridSpec {
    /// Same axis for Δp and Δq.
    pub fn square(lo: f64, hi: f64, n: usize) -> Self {
        GridSpec {
            p_range: (lo, hi),
            q_range: (lo, hi),
            n_p: n,
            n_q: n,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi), n) in [("p_range", self.p_range, self.n_p), ("q_range", self.q_range, self.n_q)] {
            if !(lo.is_finite() && hi.is_finite()) {
                return Err(Error::invalid(MODULE, name, "bounds must be finite"));
            }
            if n == 0 || (n > 1 && hi <= lo) {
                return Err(Error::invalid(MODULE, name, "need n >= 1 points and hi > lo"));
            }
        }
        Ok(())
    }

    fn axis((lo, hi): (f64, f64), n: usize) -> Vec<f64> {
        if n == 1 {
            return vec![lo];
        }
        let h = (hi - lo) / (n - 1) as f64;
        (0..n).map(|i| if i + 1 == n { hi } else { lo + h * i as f64 }).collect()
    }

    pub fn p_axis(&self) -> Vec<f64> {
        Self::axis(self.p_range, self.n_p)
    }

    pub fn q_axis(&self) -> Vec<f64> {
        Self::axis(self.q_range, self.n_q)
    }
}

/// Inputs a spectrum was computed from.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumMeta {
    pub params: SystemParams,
    pub packet: PhotonPacket,
    pub mirror: MirrorInit,
    pub truncation: Truncation,
    pub order: FcOrder,
}

/// S on a grid, stored row-major in p: `values[i * q_axis.len() + j]` is
/// S(p_axis[i], q_axis[j]).
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumGrid {
    pub p_axis: Vec<f64>,
    pub q_axis: Vec<f64>,
    pub values: Vec<f64>,
    pub meta: SpectrumMeta,
}

impl SpectrumGrid {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.q_axis.len() + j]
    }

    /// CSV with header `dp,dq,S`, one line per point, row-major in p.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "dp,dq,S")?;
        for (i, p) in self.p_axis.iter().enumerate() {
            for (j, q) in self.q_axis.iter().enumerate() {
                writeln!(w, "{},{},{}", fmt_num(*p), fmt_num(*q), fmt_num(self.get(i, j)))?;
            }
        }
        Ok(())
    }
}

/// S(Δp, Δq) = Σ_m |Σ_{n0} c_{n0} C_{n0,m}|² for a pure mirror state and
/// Σ_m Σ_{n0} p_{n0} |C_{n0,m}|² for a mixed one. Rows are computed in
/// parallel.
pub fn joint_spectrum(
    params: &SystemParams,
    packet: &PhotonPacket,
    trunc: &Truncation,
    order: FcOrder,
    mirror: &MirrorInit,
    grid: &GridSpec,
) -> Result<SpectrumGrid> {
    grid.validate()?;
    trunc.validate()?;
    if trunc.n_ph == 0 {
        return Err(Error::invalid(MODULE, "truncation.n_ph", "must be at least 1"));
    }
    let expansion = mirror.expand(trunc.n_ph - 1, trunc.tol)?;
    let (coherent, comps): (bool, Vec<(usize, Complex64, f64)>) = match &expansion {
        MirrorExpansion::Coherent(v) => (true, v.iter().map(|(n, c)| (*n, *c, 1.0)).collect()),
        MirrorExpansion::Incoherent(v) => (false, v.iter().map(|(n, p)| (*n, Complex64::new(1.0, 0.0), *p)).collect()),
    };
    let ctxs = comps
        .iter()
        .map(|(n0, _, _)| AmplitudeContext::new(*params, *packet, *trunc, *n0, order))
        .collect::<Result<Vec<_>>>()?;
    let dim = trunc.dim();

    let p_axis = grid.p_axis();
    let q_axis = grid.q_axis();
    let symmetric = p_axis == q_axis;
    let nq = q_axis.len();

    let point = |p: f64, q: f64, buf: &mut Vec<Complex64>, acc: &mut Vec<Complex64>| -> f64 {
        acc.iter_mut().for_each(|a| *a = Complex64::new(0.0, 0.0));
        let mut s = 0.0;
        for (ctx, (_, c, w)) in ctxs.iter().zip(&comps) {
            assemble_all(ctx, p, q, buf);
            if coherent {
                for (a, b) in acc.iter_mut().zip(buf.iter()) {
                    *a += c * b;
                }
            } else {
                s += w * buf.iter().map(|b| b.norm_sqr()).sum::<f64>();
            }
        }
        if coherent {
            s = acc.iter().map(|a| a.norm_sqr()).sum();
        }
        s
    };

    let rows: Vec<Vec<f64>> = p_axis
        .par_iter()
        .enumerate()
        .map(|(i, &p)| {
            let mut buf = vec![Complex64::new(0.0, 0.0); dim];
            let mut acc = buf.clone();
            let start = if symmetric { i } else { 0 };
            let mut row = vec![0.0; nq];
            for j in start..nq {
                row[j] = point(p, q_axis[j], &mut buf, &mut acc);
            }
            row
        })
        .collect();

    let mut values = vec![0.0; p_axis.len() * nq];
    for (i, row) in rows.iter().enumerate() {
        values[i * nq..(i + 1) * nq].copy_from_slice(row);
    }
    if symmetric {
        for i in 0..nq {
            for j in 0..i {
                values[i * nq + j] = values[j * nq + i];
            }
        }
    }

    Ok(SpectrumGrid {
        p_axis,
        q_axis,
        values,
        meta: SpectrumMeta {
            params: *params,
            packet: *packet,
            mirror: mirror.clone(),
            truncation: *trunc,
            order,
        },
    })
}

/// A local maximum of S.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub dp: f64,
    pub dq: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumStats {
    /// Sorted by decreasing value.
    pub peaks: Vec<Peak>,
    /// Correlation of (Δp, Δq) with S/ΣS as the joint weight.
    pub pearson_corr: f64,
    pub mean_p: f64,
    pub mean_q: f64,
    /// Standard deviations of the two marginals.
    pub width_p: f64,
    pub width_q: f64,
}

impl SpectrumStats {
    /// Flat `key=value` lines.
    pub fn to_key_value(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "peak_count={}", self.peaks.len());
        for (k, p) in self.peaks.iter().enumerate() {
            let _ = writeln!(s, "peak_{k}={},{},{}", fmt_num(p.dp), fmt_num(p.dq), fmt_num(p.value));
        }
        let _ = writeln!(s, "pearson_corr={}", fmt_num(self.pearson_corr));
        let _ = writeln!(s, "mean_p={}", fmt_num(self.mean_p));
        let _ = writeln!(s, "mean_q={}", fmt_num(self.mean_q));
        let _ = writeln!(s, "width_p={}", fmt_num(self.width_p));
        let _ = writeln!(s, "width_q={}", fmt_num(self.width_q));
        s
    }
}

/// Peaks (strict dominance over all existing 8 neighbours, at least 1% of
/// the global maximum), correlation and marginal widths.
pub fn spectrum_stats(grid: &SpectrumGrid) -> Result<SpectrumStats> {
    let (np, nq) = (grid.p_axis.len(), grid.q_axis.len());
    let total: f64 = grid.values.iter().sum();
    let max = grid.values.iter().copied().fold(0.0, f64::max);
    if np == 0 || nq == 0 || !(total > 0.0) || !total.is_finite() {
        return Err(Error::DegenerateGrid("spectrum is zero or non-finite".into()));
    }

    let mut peaks = Vec::new();
    for i in 0..np {
        for j in 0..nq {
            let v = grid.get(i, j);
            if v < 0.01 * max {
                continue;
            }
            let mut dominant = true;
            'nb: for di in -1i64..=1 {
                for dj in -1i64..=1 {
                    if di == 0 && dj == 0 {
                        continue;
                    }
                    let (a, b) = (i as i64 + di, j as i64 + dj);
                    if a < 0 || b < 0 || a >= np as i64 || b >= nq as i64 {
                        continue;
                    }
                    if grid.get(a as usize, b as usize) >= v {
                        dominant = false;
                        break 'nb;
                    }
                }
            }
            if dominant {
                peaks.push(Peak {
                    dp: grid.p_axis[i],
                    dq: grid.q_axis[j],
                    value: v,
                });
            }
        }
    }
    peaks.sort_by(|a, b| b.value.total_cmp(&a.value));

    let (mut mp, mut mq) = (0.0, 0.0);
    for i in 0..np {
        for j in 0..nq {
            let w = grid.get(i, j) / total;
            mp += w * grid.p_axis[i];
            mq += w * grid.q_axis[j];
        }
    }
    let (mut vpp, mut vqq, mut vpq) = (0.0, 0.0, 0.0);
    for i in 0..np {
        for j in 0..nq {
            let w = grid.get(i, j) / total;
            let (x, y) = (grid.p_axis[i] - mp, grid.q_axis[j] - mq);
            vpp += w * x * x;
            vqq += w * y * y;
            vpq += w * x * y;
        }
    }
    let pearson_corr = if vpp > 0.0 && vqq > 0.0 { vpq / (vpp * vqq).sqrt() } else { f64::NAN };
    Ok(SpectrumStats {
        peaks,
        pearson_corr,
        mean_p: mp,
        mean_q: mq,
        width_p: vpp.sqrt(),
        width_q: vqq.sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(g0: f64) -> (SystemParams, PhotonPacket) {
        let params = SystemParams::new(g0, 0.1).unwrap();
        let packet = PhotonPacket::single_photon_resonant(&params, 0.01).unwrap();
        (params, packet)
    }

    #[test]
    fn spectrum_is_symmetric_and_non_negative() {
        let (params, packet) = setup(0.5);
        let grid = GridSpec::square(-1.5, 0.5, 21);
        let s = joint_spectrum(&params, &packet, &Truncation::new(5), FcOrder::Exact, &MirrorInit::Fock(0), &grid).unwrap();
        for i in 0..21 {
            for j in 0..21 {
                assert!(s.get(i, j) >= 0.0);
                assert!((s.get(i, j) - s.get(j, i)).abs() <= 1e-12 * s.get(i, j).max(1.0));
            }
        }
        // The mirrored fill agrees with a direct evaluation below the diagonal.
        for (i, j) in [(5, 2), (20, 0), (13, 7)] {
            let one = GridSpec {
                p_range: (s.p_axis[i], s.p_axis[i]),
                q_range: (s.q_axis[j], s.q_axis[j]),
                n_p: 1,
                n_q: 1,
            };
            let d = joint_spectrum(&params, &packet, &Truncation::new(5), FcOrder::Exact, &MirrorInit::Fock(0), &one).unwrap();
            assert!((d.values[0] - s.get(i, j)).abs() <= 1e-12 * s.get(i, j));
        }
    }

    #[test]
    fn mixed_and_pure_agree_for_a_single_label() {
        let (params, packet) = setup(0.4);
        let grid = GridSpec::square(-1.0, 0.5, 9);
        let trunc = Truncation::new(4);
        let fock = joint_spectrum(&params, &packet, &trunc, FcOrder::Exact, &MirrorInit::Fock(0), &grid).unwrap();
        let thermal = joint_spectrum(&params, &packet, &trunc, FcOrder::Exact, &MirrorInit::Thermal(0.0), &grid).unwrap();
        assert_eq!(fock.values, thermal.values);
        let pure = MirrorInit::Pure(vec![Complex64::new(0.0, 0.0), Complex64::new(0.0, 1.0)]);
        let a = joint_spectrum(&params, &packet, &trunc, FcOrder::Exact, &pure, &grid).unwrap();
        let b = joint_spectrum(&params, &packet, &trunc, FcOrder::Exact, &MirrorInit::Fock(1), &grid).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() <= 1e-14 * y.max(1e-300));
        }
    }

    #[test]
    fn thermal_truncation_deficit_is_reported() {
        let (params, packet) = setup(0.4);
        let r = joint_spectrum(
            &params,
            &packet,
            &Truncation::new(3).with_tol(1e-6),
            FcOrder::Exact,
            &MirrorInit::Thermal(2.0),
            &GridSpec::square(0.0, 1.0, 3),
        );
        match r {
            Err(Error::Truncation { deficit, .. }) => assert!(deficit > 0.1),
            other => panic!("expected truncation error, got {other:?}"),
        }
    }

    fn synthetic(f: impl Fn(f64, f64) -> f64, n: usize) -> SpectrumGrid {
        let (params, packet) = setup(0.3);
        let g = GridSpec::square(-1.0, 1.0, n);
        let (pa, qa) = (g.p_axis(), g.q_axis());
        let values = pa.iter().flat_map(|p| qa.iter().map(move |q| (*p, *q))).map(|(p, q)| f(p, q)).collect();
        SpectrumGrid {
            p_axis: pa,
            q_axis: qa,
            values,
            meta: SpectrumMeta {
                params,
                packet,
                mirror: MirrorInit::Fock(0),
                truncation: Truncation::new(1),
                order: FcOrder::Exact,
            },
        }
    }

    #[test]
    fn stats_of_a_correlated_gaussian() {
        let rho: f64 = -0.6;
        let g = synthetic(
            |x, y| (-(x * x - 2.0 * rho * x * y + y * y) / (2.0 * 0.0225 * (1.0 - rho * rho))).exp(),
            201,
        );
        let st = spectrum_stats(&g).unwrap();
        assert!((st.pearson_corr - rho).abs() < 1e-6, "{}", st.pearson_corr);
        assert!((st.width_p - 0.15).abs() < 1e-6);
        assert_eq!(st.peaks.len(), 1);
        assert!(st.peaks[0].dp.abs() < 1e-12 && st.peaks[0].dq.abs() < 1e-12);
        let kv = st.to_key_value();
        assert!(kv.contains("peak_count=1\n"));
        assert!(kv.lines().any(|l| l.starts_with("pearson_corr=")));
    }

    #[test]
    fn small_bumps_below_one_percent_are_not_peaks() {
        let g = synthetic(
            |x, y| {
                (-((x - 0.5).powi(2) + y * y) / 0.01).exp() + 0.005 * (-((x + 0.5).powi(2) + y * y) / 0.01).exp()
            },
            41,
        );
        assert_eq!(spectrum_stats(&g).unwrap().peaks.len(), 1);
    }

    #[test]
    fn correlation_is_invariant_under_axis_swap() {
        let f = |x: f64, y: f64| (-(x + 0.3 * y).powi(2) * 4.0 - y * y).exp();
        let a = spectrum_stats(&synthetic(f, 31)).unwrap();
        let b = spectrum_stats(&synthetic(|x, y| f(y, x), 31)).unwrap();
        assert!((a.pearson_corr - b.pearson_corr).abs() < 1e-12);
        assert!((a.width_p - b.width_q).abs() < 1e-12);
    }

    #[test]
    fn zero_grid_is_degenerate() {
        let g = synthetic(|_, _| 0.0, 5);
        assert!(matches!(spectrum_stats(&g), Err(Error::DegenerateGrid(_))));
    }

    #[test]
    fn csv_layout() {
        let g = synthetic(|x, y| x * x + y, 3);
        let mut out = Vec::new();
        g.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "dp,dq,S");
        assert_eq!(lines.len(), 10);
        assert!(lines[2].starts_with("-1.0000000000000000e0,0.0000000000000000e0,"));
    }
}
