//! Composite Gauss-Legendre quadrature with adaptive bisection.
//!
//! The integrand is vector valued so that one panel mesh serves many outputs
//! at once (all sample times of a trace, say). A panel's error is the
//! difference between the rule on the whole panel and the sum of the rule on
//! its two halves; panels are bisected until every component meets
//! `max(rel_tol * |I|, abs_tol)`. Semi-infinite tails are integrated on the
//! variable u in (0, 1] with x = a + L (1 - u) / u.

use crate::error::{Error, Result};

/// Gauss-Legendre nodes and weights on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let kf = k as f64;
                    let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                    p0 = p1;
                    p1 = p2;
                }
                let pn = if n == 1 { x } else { p1 };
                let pm1 = if n == 1 { 1.0 } else { p0 };
                dp = nf * (x * pn - pm1) / (x * x - 1.0);
                let dx = pn / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        GaussLegendre { nodes, weights }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Plain rule on [a, b] for a scalar integrand.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, a: f64, b: f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(mid + half * x))
            .sum::<f64>()
            * half
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AdaptiveOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_panels: usize,
    pub order: usize,
}

impl Default for AdaptiveOptions {
    fn default() -> Self {
        AdaptiveOptions {
            rel_tol: 1e-6,
            abs_tol: 1e-14,
            max_panels: 200_000,
            order: 8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct QuadResult {
    pub values: Vec<f64>,
    pub errors: Vec<f64>,
    pub panels: usize,
}

#[derive(Debug, Clone, Copy)]
enum Map {
    Linear,
    /// x = a + L (1 - u) / u, u in (0, 1].
    Upper { a: f64, scale: f64 },
    /// x = b - L (1 - u) / u, u in (0, 1].
    Lower { b: f64, scale: f64 },
}

impl Map {
    #[inline]
    fn apply(self, u: f64) -> (f64, f64) {
        match self {
            Map::Linear => (u, 1.0),
            Map::Upper { a, scale } => (a + scale * (1.0 - u) / u, scale / (u * u)),
            Map::Lower { b, scale } => (b - scale * (1.0 - u) / u, scale / (u * u)),
        }
    }

    fn span(self, lo: f64, hi: f64) -> (f64, f64) {
        let (x0, _) = self.apply(lo);
        let (x1, _) = self.apply(hi);
        (x0.min(x1), x0.max(x1))
    }
}

struct Panel {
    map: Map,
    lo: f64,
    hi: f64,
    left: Vec<f64>,
    right: Vec<f64>,
    err: Vec<f64>,
}

struct Integrator<'a, F> {
    f: F,
    dim: usize,
    rule: &'a GaussLegendre,
    scratch: Vec<f64>,
}

impl<F: FnMut(f64, &mut [f64])> Integrator<'_, F> {
    fn rule_on(&mut self, map: Map, lo: f64, hi: f64) -> Vec<f64> {
        let mut acc = vec![0.0; self.dim];
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        for (x, w) in self.rule.nodes.iter().zip(&self.rule.weights) {
            let u = mid + half * x;
            let (xv, jac) = map.apply(u);
            (self.f)(xv, &mut self.scratch);
            let wj = w * half * jac;
            for (a, v) in acc.iter_mut().zip(&self.scratch) {
                *a += wj * v;
            }
        }
        acc
    }

    fn panel(&mut self, map: Map, lo: f64, hi: f64, whole: Option<Vec<f64>>) -> Panel {
        let whole = whole.unwrap_or_else(|| self.rule_on(map, lo, hi));
        let mid = 0.5 * (lo + hi);
        let left = self.rule_on(map, lo, mid);
        let right = self.rule_on(map, mid, hi);
        let err = whole
            .iter()
            .zip(left.iter().zip(&right))
            .map(|(w, (l, r))| (w - l - r).abs())
            .collect();
        Panel {
            map,
            lo,
            hi,
            left,
            right,
            err,
        }
    }
}

/// Splits [lo, hi] at the given interior breakpoints and caps every piece at
/// `max_width`.
pub fn partition(lo: f64, hi: f64, breakpoints: &[f64], max_width: f64) -> Vec<(f64, f64)> {
    let mut pts: Vec<f64> = breakpoints
        .iter()
        .copied()
        .filter(|x| x.is_finite() && *x > lo && *x < hi)
        .collect();
    pts.push(lo);
    pts.push(hi);
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let min_gap = 1e-9 * (hi - lo).max(1.0);
    pts.dedup_by(|a, b| (*a - *b).abs() < min_gap);
    let mut out = Vec::new();
    for w in pts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let pieces = ((b - a) / max_width).ceil().max(1.0) as usize;
        let h = (b - a) / pieces as f64;
        for i in 0..pieces {
            let x0 = a + h * i as f64;
            let x1 = if i + 1 == pieces { b } else { x0 + h };
            out.push((x0, x1));
        }
    }
    out
}

fn run<F: FnMut(f64, &mut [f64])>(
    f: F,
    dim: usize,
    segments: Vec<(Map, f64, f64)>,
    opts: &AdaptiveOptions,
    module: &'static str,
) -> Result<QuadResult> {
    let rule = GaussLegendre::new(opts.order);
    let mut integ = Integrator {
        f,
        dim,
        rule: &rule,
        scratch: vec![0.0; dim],
    };
    let mut panels: Vec<Panel> = segments
        .into_iter()
        .map(|(map, lo, hi)| integ.panel(map, lo, hi, None))
        .collect();

    loop {
        let mut total = vec![0.0; dim];
        let mut err = vec![0.0; dim];
        for p in &panels {
            for i in 0..dim {
                total[i] += p.left[i] + p.right[i];
                err[i] += p.err[i];
            }
        }
        let tol: Vec<f64> = total
            .iter()
            .map(|t| (opts.rel_tol * t.abs()).max(opts.abs_tol))
            .collect();
        let scaled = |p: &Panel| -> f64 {
            p.err
                .iter()
                .zip(&tol)
                .map(|(e, t)| e / t)
                .fold(0.0, f64::max)
        };
        let converged = err.iter().zip(&tol).all(|(e, t)| e <= t);
        if converged {
            return Ok(QuadResult {
                values: total,
                errors: err,
                panels: panels.len(),
            });
        }
        let worst = panels.iter().map(scaled).fold(0.0, f64::max);
        if panels.len() >= opts.max_panels {
            let wp = panels
                .iter()
                .max_by(|a, b| scaled(a).partial_cmp(&scaled(b)).unwrap())
                .unwrap();
            let (lo, hi) = wp.map.span(wp.lo, wp.hi);
            let worst_comp = err
                .iter()
                .zip(&tol)
                .map(|(e, t)| e / t)
                .enumerate()
                .fold((0, 0.0), |acc, (i, r)| if r > acc.1 { (i, r) } else { acc })
                .0;
            return Err(Error::Quadrature {
                module,
                lo,
                hi,
                err: err[worst_comp],
                tol: tol[worst_comp],
            });
        }
        let threshold = 0.25 * worst;
        let mut next = Vec::with_capacity(panels.len() * 2);
        for p in panels {
            if scaled(&p) >= threshold && next.len() < opts.max_panels {
                let mid = 0.5 * (p.lo + p.hi);
                next.push(integ.panel(p.map, p.lo, mid, Some(p.left)));
                next.push(integ.panel(p.map, mid, p.hi, Some(p.right)));
            } else {
                next.push(p);
            }
        }
        panels = next;
    }
}

/// Integrates a vector-valued `f` over the finite interval [lo, hi].
#[allow(clippy::too_many_arguments)]
pub fn integrate_interval<F: FnMut(f64, &mut [f64])>(
    f: F,
    dim: usize,
    lo: f64,
    hi: f64,
    breakpoints: &[f64],
    max_width: f64,
    opts: &AdaptiveOptions,
    module: &'static str,
) -> Result<QuadResult> {
    let segments = partition(lo, hi, breakpoints, max_width)
        .into_iter()
        .map(|(a, b)| (Map::Linear, a, b))
        .collect();
    run(f, dim, segments, opts, module)
}

/// Integrates a vector-valued `f` over the whole real line: [lo, hi] is split
/// at the breakpoints, the two tails are mapped onto (0, 1]. Breakpoints
/// outside [lo, hi] split the tails. `f` must decay at least like 1/x^2.
#[allow(clippy::too_many_arguments)]
pub fn integrate_real_line<F: FnMut(f64, &mut [f64])>(
    f: F,
    dim: usize,
    lo: f64,
    hi: f64,
    breakpoints: &[f64],
    max_width: f64,
    opts: &AdaptiveOptions,
    module: &'static str,
) -> Result<QuadResult> {
    let mut segments: Vec<(Map, f64, f64)> = partition(lo, hi, breakpoints, max_width)
        .into_iter()
        .map(|(a, b)| (Map::Linear, a, b))
        .collect();
    let scale = lo.abs().max(hi.abs()).max(1.0);
    let upper: Vec<f64> = breakpoints
        .iter()
        .filter(|x| x.is_finite() && **x > hi)
        .map(|x| scale / (x - hi + scale))
        .chain([0.25, 0.5])
        .collect();
    let lower: Vec<f64> = breakpoints
        .iter()
        .filter(|x| x.is_finite() && **x < lo)
        .map(|x| scale / (lo - x + scale))
        .chain([0.25, 0.5])
        .collect();
    for (u0, u1) in partition(0.0, 1.0, &upper, 1.0) {
        segments.push((Map::Upper { a: hi, scale }, u0, u1));
    }
    for (u0, u1) in partition(0.0, 1.0, &lower, 1.0) {
        segments.push((Map::Lower { b: lo, scale }, u0, u1));
    }
    run(f, dim, segments, opts, module)
}
