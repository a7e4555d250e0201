//! Overlaps between displaced number states of the mirror.
//!
//! `fc_overlap(m, n, beta)` is the matrix element <m| exp(beta (b^dag - b)) |n>.
//! It is evaluated in log space with a rescaled degree recurrence for the
//! associated Laguerre polynomial, which keeps it finite for indices in the
//! hundreds where the raw factorials overflow.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MODULE: &str = "franck_condon";
const RESCALE: f64 = 1e100;

/// Associated Laguerre polynomial L_n^alpha(x) as `(mantissa, log_scale)` with
/// value `mantissa * exp(log_scale)`.
fn laguerre_scaled(n: usize, alpha: f64, x: f64) -> (f64, f64) {
    let mut prev = 1.0;
    if n == 0 {
        return (prev, 0.0);
    }
    let mut cur = 1.0 + alpha - x;
    let mut log_scale = 0.0;
    for k in 1..n {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0 + alpha - x) * cur - (kf + alpha) * prev) / (kf + 1.0);
        prev = cur;
        cur = next;
        if cur.abs() > RESCALE {
            cur /= RESCALE;
            prev /= RESCALE;
            log_scale += RESCALE.ln();
        }
    }
    (cur, log_scale)
}

/// Associated Laguerre polynomial L_n^alpha(x) by the degree recurrence.
pub fn laguerre(n: usize, alpha: f64, x: f64) -> f64 {
    let (m, s) = laguerre_scaled(n, alpha, x);
    m * s.exp()
}

/// <m| exp(beta (b^dag - b)) |n> for real `beta`.
pub fn fc_overlap(m: usize, n: usize, beta: f64) -> f64 {
    if beta == 0.0 {
        return if m == n { 1.0 } else { 0.0 };
    }
    // n >= m: sqrt(m!/n!) e^{-b^2/2} (-b)^{n-m} L_m^{n-m}(b^2); mirror branch otherwise.
    let (lo, hi, base) = if n >= m { (m, n, -beta) } else { (n, m, beta) };
    let k = hi - lo;
    let x = beta * beta;
    let (mant, log_scale) = laguerre_scaled(lo, k as f64, x);
    if mant == 0.0 {
        return 0.0;
    }
    let log_fact_ratio: f64 = -0.5 * (lo + 1..=hi).map(|i| (i as f64).ln()).sum::<f64>();
    let log_mag =
        log_fact_ratio - 0.5 * x + k as f64 * beta.abs().ln() + log_scale + mant.abs().ln();
    let negative = (base < 0.0 && k % 2 == 1) ^ (mant < 0.0);
    let v = log_mag.exp();
    if negative {
        -v
    } else {
        v
    }
}

/// The four overlap combinations entering the equations of motion.
///
/// Displacements along the same axis compose without a phase, so each one is a
/// single [`fc_overlap`] at displacement +beta0 or -beta0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OverlapKind {
    /// <m~(2)|n~(1)>
    M2N1,
    /// <m~(1)|n~(2)>
    M1N2,
    /// <m~(1)|n>
    M1N,
    /// <m|n~(1)>
    MN1,
}

impl OverlapKind {
    /// Sign of the net displacement, in units of beta0.
    pub fn displacement_sign(self) -> f64 {
        match self {
            OverlapKind::M2N1 | OverlapKind::M1N => -1.0,
            OverlapKind::M1N2 | OverlapKind::MN1 => 1.0,
        }
    }
}

impl FromStr for OverlapKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "m2_n1" => Ok(OverlapKind::M2N1),
            "m1_n2" => Ok(OverlapKind::M1N2),
            "m1_n" => Ok(OverlapKind::M1N),
            "m_n1" => Ok(OverlapKind::MN1),
            other => Err(Error::invalid(
                MODULE,
                "kind",
                format!("unknown overlap kind `{other}` (expected m2_n1, m1_n2, m1_n or m_n1)"),
            )),
        }
    }
}

impl fmt::Display for OverlapKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            OverlapKind::M2N1 => "m2_n1",
            OverlapKind::M1N2 => "m1_n2",
            OverlapKind::M1N => "m1_n",
            OverlapKind::MN1 => "m_n1",
        };
        f.write_str(s)
    }
}

pub fn overlap_combo(kind: OverlapKind, m: usize, n: usize, beta0: f64) -> f64 {
    fc_overlap(m, n, kind.displacement_sign() * beta0)
}

/// How the overlap matrix is built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FcOrder {
    #[default]
    Exact,
    /// Identity: all sidebands removed, the Kerr-cavity limit.
    Zeroth,
    /// delta_{m,n} + beta (sqrt(n+1) delta_{m,n+1} - sqrt(n) delta_{m,n-1}).
    First,
}

impl FromStr for FcOrder {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(FcOrder::Exact),
            "zeroth" => Ok(FcOrder::Zeroth),
            "first" => Ok(FcOrder::First),
            other => Err(Error::invalid(MODULE, "order", format!("unknown order `{other}`"))),
        }
    }
}

/// Dense `dim x dim` table of D[m][n] = <m| exp(beta (b^dag - b)) |n>.
#[derive(Debug, Clone, PartialEq)]
pub struct FcTable {
    beta: f64,
    dim: usize,
    order: FcOrder,
    values: Vec<f64>,
}

impl FcTable {
    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> FcOrder {
        self.order
    }

    #[inline]
    pub fn get(&self, m: usize, n: usize) -> f64 {
        self.values[m * self.dim + n]
    }

    pub fn row(&self, m: usize) -> &[f64] {
        &self.values[m * self.dim..(m + 1) * self.dim]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for m in 0..self.dim {
            let row: Vec<String> = self.row(m).iter().map(|v| crate::cli::fmt_num(*v)).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

pub fn fc_table(beta: f64, dim: usize, order: FcOrder) -> Result<FcTable> {
    if dim == 0 {
        return Err(Error::invalid(MODULE, "dim", "must be at least 1"));
    }
    if !beta.is_finite() {
        return Err(Error::invalid(MODULE, "beta", "must be finite"));
    }
    let mut values = vec![0.0; dim * dim];
    for m in 0..dim {
        for n in 0..dim {
            values[m * dim + n] = match order {
                FcOrder::Exact => fc_overlap(m, n, beta),
                FcOrder::Zeroth => f64::from(u8::from(m == n)),
                FcOrder::First => {
                    let mut v = f64::from(u8::from(m == n));
                    if m == n + 1 {
                        v += beta * ((n + 1) as f64).sqrt();
                    }
                    if n >= 1 && m == n - 1 {
                        v -= beta * (n as f64).sqrt();
                    }
                    v
                }
            };
        }
    }
    Ok(FcTable {
        beta,
        dim,
        order,
        values,
    })
}

/// Overlap tables at +beta0 and -beta0, from which every product of
/// Franck-Condon factors in the amplitude formulas is read.
///
/// With `plus = D(beta0)` and `minus = D(-beta0)`:
/// `<m|n~(1)> = <m~(1)|n~(2)> = plus[m][n]` and
/// `<m~(1)|n> = <m~(2)|n~(1)> = minus[m][n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FcPair {
    pub plus: FcTable,
    pub minus: FcTable,
}

impl FcPair {
    pub fn new(beta0: f64, dim: usize, order: FcOrder) -> Result<Self> {
        Ok(FcPair {
            plus: fc_table(beta0, dim, order)?,
            minus: fc_table(-beta0, dim, order)?,
        })
    }

    pub fn dim(&self) -> usize {
        self.plus.dim()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// exp(beta (b^dag - b)) on a truncated space by scaling and squaring.
    pub(crate) fn expm_displacement(beta: f64, dim: usize) -> Vec<Vec<f64>> {
        let mut g = vec![vec![0.0; dim]; dim];
        for n in 0..dim - 1 {
            let s = ((n + 1) as f64).sqrt();
            g[n + 1][n] += beta * s;
            g[n][n + 1] -= beta * s;
        }
        let norm: f64 = g.iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
        let squarings = (norm.max(1.0).log2().ceil() as i32 + 4).max(0);
        let scale = 2f64.powi(-squarings);
        let a: Vec<Vec<f64>> = g.iter().map(|r| r.iter().map(|v| v * scale).collect()).collect();
        let matmul = |x: &Vec<Vec<f64>>, y: &Vec<Vec<f64>>| {
            let mut z = vec![vec![0.0; dim]; dim];
            for i in 0..dim {
                for k in 0..dim {
                    let xik = x[i][k];
                    if xik != 0.0 {
                        for j in 0..dim {
                            z[i][j] += xik * y[k][j];
                        }
                    }
                }
            }
            z
        };
        let mut result = vec![vec![0.0; dim]; dim];
        let mut term = vec![vec![0.0; dim]; dim];
        for i in 0..dim {
            result[i][i] = 1.0;
            term[i][i] = 1.0;
        }
        for k in 1..30 {
            term = matmul(&term, &a);
            for row in term.iter_mut() {
                for v in row.iter_mut() {
                    *v /= k as f64;
                }
            }
            for i in 0..dim {
                for j in 0..dim {
                    result[i][j] += term[i][j];
                }
            }
        }
        for _ in 0..squarings {
            result = matmul(&result, &result);
        }
        result
    }

    #[test]
    fn closed_forms() {
        assert!((fc_overlap(0, 0, 0.6) - (-0.18f64).exp()).abs() < 1e-15);
        assert!((fc_overlap(0, 0, 0.6) - 0.835270).abs() < 1e-6);
        assert!((fc_overlap(1, 0, 0.6) - 0.6 * (-0.18f64).exp()).abs() < 1e-15);
        assert!((fc_overlap(1, 0, 0.6) - 0.501162).abs() < 1e-6);
        for m in 0..5 {
            for n in 0..5 {
                assert_eq!(fc_overlap(m, n, 0.0), f64::from(u8::from(m == n)));
            }
        }
    }

    #[test]
    fn laguerre_small_degrees() {
        let x = 0.7;
        let a = 2.0;
        assert!((laguerre(0, a, x) - 1.0).abs() < 1e-15);
        assert!((laguerre(1, a, x) - (1.0 + a - x)).abs() < 1e-15);
        let l2 = x * x / 2.0 - (a + 2.0) * x + (a + 2.0) * (a + 1.0) / 2.0;
        assert!((laguerre(2, a, x) - l2).abs() < 1e-14);
    }

    #[test]
    fn matches_matrix_exponential() {
        let dim = 60;
        let d = expm_displacement(0.6, dim);
        for m in 0..20 {
            for n in 0..20 {
                assert!(
                    (fc_overlap(m, n, 0.6) - d[m][n]).abs() < 1e-12,
                    "({m},{n}): {} vs {}",
                    fc_overlap(m, n, 0.6),
                    d[m][n]
                );
            }
        }
    }

    #[test]
    fn row_orthonormality() {
        let s: f64 = (0..40).map(|k| fc_overlap(3, k, 0.6) * fc_overlap(5, k, 0.6)).sum();
        assert!(s.abs() < 1e-10);
        let table = fc_table(0.6, 30, FcOrder::Exact).unwrap();
        for m in 0..10 {
            for n in 0..10 {
                let dot: f64 = (0..30).map(|k| table.get(m, k) * table.get(n, k)).sum();
                let want = f64::from(u8::from(m == n));
                assert!((dot - want).abs() < 1e-10, "({m},{n}) {dot}");
            }
        }
    }

    #[test]
    fn adjoint_and_parity_symmetry() {
        for &b in &[0.3, 0.6, 1.7] {
            for m in 0..12 {
                for n in 0..12 {
                    assert_eq!(fc_overlap(m, n, -b), fc_overlap(n, m, b));
                    let sign = if (m + n) % 2 == 0 { 1.0 } else { -1.0 };
                    assert_eq!(fc_overlap(m, n, b), sign * fc_overlap(n, m, b));
                }
            }
        }
    }

    #[test]
    fn large_indices_stay_finite_and_unitary() {
        let v = fc_overlap(500, 480, 1.3);
        assert!(v.is_finite());
        let s: f64 = (0..=700).map(|k| fc_overlap(450, k, 1.3).powi(2)).sum();
        assert!((s - 1.0).abs() < 1e-9, "norm {s}");
        let c: f64 = (0..=700).map(|k| fc_overlap(450, k, 1.3) * fc_overlap(451, k, 1.3)).sum();
        assert!(c.abs() < 1e-9);
    }

    #[test]
    fn derivative_at_zero_matches_first_order() {
        let h = 1e-6;
        let first = fc_table(1.0, 8, FcOrder::First).unwrap();
        for m in 0..6 {
            for n in 0..6 {
                let fd = (fc_overlap(m, n, h) - fc_overlap(m, n, -h)) / (2.0 * h);
                let slope = first.get(m, n) - f64::from(u8::from(m == n));
                assert!((fd - slope).abs() < 1e-6, "({m},{n}) {fd} vs {slope}");
            }
        }
    }

    #[test]
    fn overlap_combinations() {
        let e = (-0.18f64).exp();
        assert!((overlap_combo(OverlapKind::M2N1, 0, 0, 0.6) - e).abs() < 1e-15);
        assert!((overlap_combo(OverlapKind::M1N2, 0, 1, 0.6) + 0.501162).abs() < 1e-6);
        for kind in [OverlapKind::M2N1, OverlapKind::M1N2, OverlapKind::M1N, OverlapKind::MN1] {
            for m in 0..4 {
                for n in 0..4 {
                    assert_eq!(overlap_combo(kind, m, n, 0.0), f64::from(u8::from(m == n)));
                }
            }
        }
        assert!("m3_n1".parse::<OverlapKind>().is_err());
        assert_eq!("m_n1".parse::<OverlapKind>().unwrap(), OverlapKind::MN1);
    }

    #[test]
    fn composition_matches_product_of_displacements() {
        // <m~(2)|n~(1)> = sum_k D(-2b)[m][k] D(b)[k][n] over a converged basis.
        let b = 0.6;
        let dim = 60;
        for m in 0..5 {
            for n in 0..5 {
                let via_product: f64 =
                    (0..dim).map(|k| fc_overlap(m, k, -2.0 * b) * fc_overlap(k, n, b)).sum();
                assert!((via_product - overlap_combo(OverlapKind::M2N1, m, n, b)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn approximate_tables() {
        let z = fc_table(0.9, 6, FcOrder::Zeroth).unwrap();
        for m in 0..6 {
            for n in 0..6 {
                assert_eq!(z.get(m, n), f64::from(u8::from(m == n)));
            }
        }
        let f = fc_table(0.4, 6, FcOrder::First).unwrap();
        assert!((f.get(1, 0) - 0.4).abs() < 1e-15);
        assert!((f.get(0, 1) + 0.4).abs() < 1e-15);
        assert!((f.get(3, 2) - 0.4 * 3f64.sqrt()).abs() < 1e-15);
        assert_eq!(f.get(3, 0), 0.0);
    }

    #[test]
    fn column_completeness_improves_with_dim() {
        let b = 1.1;
        let col = |dim: usize| -> f64 { (0..dim).map(|m| fc_overlap(m, 2, b).powi(2)).sum() };
        let mut last = 0.0;
        for dim in [3, 5, 8, 12, 20] {
            let s = col(dim);
            assert!(s >= last - 1e-15);
            last = s;
        }
        assert!((last - 1.0).abs() < 1e-10);
    }
}
