//! Laplace-domain terms K / Π_j (s − s_j) and their inverse transforms.

use num_complex::Complex64;

use crate::error::{Error, Result};

type C64 = Complex64;

/// One Laplace-domain term: `prefactor / Π_j (s − poles[j])`.
#[derive(Debug, Clone, PartialEq)]
pub struct RationalTerm {
    pub prefactor: C64,
    pub poles: Vec<C64>,
}

impl RationalTerm {
    pub fn new(prefactor: C64, poles: Vec<C64>) -> Self {
        RationalTerm { prefactor, poles }
    }

    /// Value of the term at a point s of the Laplace variable.
    pub fn eval(&self, s: C64) -> C64 {
        self.poles.iter().fold(self.prefactor, |acc, p| acc / (s - p))
    }

    /// Groups coincident poles. Poles closer than `tol` are merged into one
    /// entry of multiplicity two (at their midpoint); three or more merged
    /// poles are rejected.
    pub fn clustered(&self, tol: f64) -> Result<Vec<(C64, u8)>> {
        let mut groups: Vec<(Vec<C64>, C64)> = Vec::with_capacity(self.poles.len());
        for &p in &self.poles {
            match groups.iter_mut().find(|(members, _)| members.iter().any(|q| (q - p).norm() < tol)) {
                Some((members, _)) => members.push(p),
                None => groups.push((vec![p], p)),
            }
        }
        groups
            .into_iter()
            .map(|(members, _)| {
                if members.len() > 2 {
                    return Err(Error::Confluence { poles: members });
                }
                let centre = members.iter().sum::<C64>() / members.len() as f64;
                Ok((centre, members.len() as u8))
            })
            .collect()
    }

    /// Largest real part among the poles.
    pub fn leading_rate(&self) -> f64 {
        self.poles.iter().map(|p| p.re).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Clustering tolerance for a problem whose largest natural rate is `scale`.
pub fn cluster_tolerance(scale: f64) -> f64 {
    1e-9 * scale.max(1.0)
}

/// Inverse Laplace transform of a sum of terms by residues.
///
/// A simple pole s_j contributes K e^{s_j t} / Π_{j'≠j} (s_j − s_j')^{k_j'}; a
/// double pole contributes the derivative of the same expression, which adds
/// the factor t − Σ k_j'/(s_j − s_j'). Exponentials are evaluated relative to
/// the slowest-decaying pole of each term and rescaled at the end, so no
/// intermediate overflows for any t ≥ 0 as long as Re s_j ≤ 0.
pub fn invert(terms: &[RationalTerm], t: f64, cluster_tol: f64) -> Result<C64> {
    let (a, b) = invert_parts(terms, t, cluster_tol, |_| false)?;
    Ok(a + b)
}

/// [`invert`] with the residue sum split in two: contributions of poles for
/// which `second` holds go to the second value.
pub(crate) fn invert_parts<P: Fn(C64) -> bool>(
    terms: &[RationalTerm],
    t: f64,
    cluster_tol: f64,
    second: P,
) -> Result<(C64, C64)> {
    let mut total = [C64::new(0.0, 0.0); 2];
    for term in terms {
        if term.poles.is_empty() {
            continue;
        }
        let groups = term.clustered(cluster_tol)?;
        let lead = term.leading_rate();
        let scale = term.prefactor * (lead * t).exp();
        for (j, &(sj, kj)) in groups.iter().enumerate() {
            let mut denom = C64::new(1.0, 0.0);
            let mut log_deriv = C64::new(0.0, 0.0);
            for (i, &(si, ki)) in groups.iter().enumerate() {
                if i == j {
                    continue;
                }
                let d = sj - si;
                denom *= if ki == 2 { d * d } else { d };
                log_deriv += ki as f64 / d;
            }
            let e = ((sj - lead) * t).exp();
            let base = e / denom;
            let r = if kj == 2 { base * (t - log_deriv) } else { base };
            total[second(sj) as usize] += scale * r;
        }
    }
    Ok((total[0], total[1]))
}

/// lim_{s→∞} s·f̃(s), the initial value of the inverse transform.
pub fn initial_value(terms: &[RationalTerm]) -> C64 {
    terms
        .iter()
        .filter(|t| t.poles.len() == 1)
        .map(|t| t.prefactor)
        .sum()
}

/// (e^x − 1)/x, accurate for all x including |x| → 0.
#[inline]
pub(crate) fn phi1(x: C64) -> C64 {
    if x.norm() < 1e-3 {
        C64::new(1.0, 0.0) + x * (0.5 + x * (1.0 / 6.0 + x * (1.0 / 24.0 + x / 120.0)))
    } else {
        (x.exp() - 1.0) / x
    }
}

/// Divided difference of s ↦ e^{st} at nodes a, b, given ea = e^{at} and
/// eb = e^{bt}. This is the inverse transform of 1/((s−a)(s−b)).
#[inline]
pub(crate) fn dd1(a: C64, b: C64, ea: C64, eb: C64, t: f64) -> C64 {
    let d = a - b;
    if (d * t).norm() < 1e-3 {
        eb * t * phi1(d * t)
    } else {
        (ea - eb) / d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn single_pole_pair() {
        let k = c(0.3, -1.2);
        let s0 = c(-0.2, 0.7);
        let term = RationalTerm::new(k, vec![s0]);
        for t in [0.0, 0.5, 3.0, 40.0] {
            let v = invert(std::slice::from_ref(&term), t, 1e-9).unwrap();
            assert!((v - k * (s0 * t).exp()).norm() < 1e-14);
        }
    }

    #[test]
    fn double_pole_pair() {
        let k = c(2.0, 0.5);
        let s0 = c(-0.05, -0.3);
        let term = RationalTerm::new(k, vec![s0, s0]);
        for t in [0.0, 1.0, 25.0] {
            let v = invert(std::slice::from_ref(&term), t, 1e-9).unwrap();
            assert!((v - k * t * (s0 * t).exp()).norm() < 1e-13);
        }
    }

    #[test]
    fn near_coincident_poles_approach_double_pole() {
        let s0 = c(-0.1, 0.4);
        let eta = 1e-5;
        let near = RationalTerm::new(c(1.0, 0.0), vec![s0, s0 + eta]);
        let exact = RationalTerm::new(c(1.0, 0.0), vec![s0, s0]);
        let t = 0.1;
        let a = invert(&[near], t, 1e-12).unwrap();
        let b = invert(&[exact], t, 1e-12).unwrap();
        assert!((a - b).norm() / b.norm() < 1e-6);
    }

    #[test]
    fn triple_confluence_is_rejected() {
        let s0 = c(-0.1, 0.0);
        let term = RationalTerm::new(c(1.0, 0.0), vec![s0, s0, s0 + 1e-12]);
        match invert(&[term], 1.0, 1e-9) {
            Err(Error::Confluence { poles }) => assert_eq!(poles.len(), 3),
            other => panic!("expected confluence error, got {other:?}"),
        }
    }

    #[test]
    fn initial_value_theorem() {
        let terms = vec![
            RationalTerm::new(c(0.7, 0.1), vec![c(-1.0, 2.0)]),
            RationalTerm::new(c(1.3, -0.4), vec![c(-0.5, 0.0), c(-0.2, 1.0), c(-0.1, -3.0)]),
            RationalTerm::new(c(-0.2, 0.0), vec![c(-0.3, 0.3), c(-0.3, 0.3)]),
        ];
        let f0 = invert(&terms, 0.0, 1e-9).unwrap();
        assert!((f0 - initial_value(&terms)).norm() < 1e-10);
    }

    #[test]
    fn long_times_do_not_overflow() {
        let term = RationalTerm::new(c(1.0, 0.0), vec![c(-1e-3, 5.0), c(-0.5, 1.0), c(-0.05, -2.0)]);
        let v = invert(&[term], 1e4, 1e-9).unwrap();
        assert!(v.is_finite());
        assert!(v.norm() < 1e-3);
    }

    #[test]
    fn divided_difference_matches_residue_sum() {
        let nodes = [c(-0.05, 0.3), c(-0.1, -1.1)];
        for t in [0.0, 1e-4, 0.3, 7.0, 60.0] {
            let e = nodes.map(|x| (x * t).exp());
            let want1 = invert(&[RationalTerm::new(c(1.0, 0.0), nodes.to_vec())], t, 1e-12).unwrap();
            assert!((dd1(nodes[0], nodes[1], e[0], e[1], t) - want1).norm() < 1e-13);
        }
        // Nearly equal nodes: t e^{at} in the limit.
        let a = c(-0.05, 0.3);
        let b = a + c(1e-9, 0.0);
        let t = 4.0;
        let v = dd1(a, b, (a * t).exp(), (b * t).exp(), t);
        assert!((v - t * (a * t).exp()).norm() < 1e-8);
    }

    #[test]
    fn split_inversion_adds_up() {
        let terms = vec![
            RationalTerm::new(c(0.7, 0.1), vec![c(-1.0, 2.0), c(-0.3, -0.2)]),
            RationalTerm::new(c(1.3, -0.4), vec![c(-0.5, 0.0), c(-0.2, 1.0), c(-0.2, 1.0)]),
        ];
        let (a, b) = invert_parts(&terms, 2.0, 1e-9, |p| p.im > 0.5).unwrap();
        assert!((a + b - invert(&terms, 2.0, 1e-9).unwrap()).norm() < 1e-15);
        assert!(a.norm() > 0.0 && b.norm() > 0.0);
    }


}
