//! Quadrature rules: Gauss–Legendre panels and adaptive Simpson.

use crate::error::{Error, Result};

/// A fixed set of nodes and weights on some interval.
#[derive(Debug, Clone)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    /// `n`-point Gauss–Legendre rule on `[-1, 1]`.
    pub fn gauss_legendre(n: usize) -> Rule {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                // Legendre recurrence for P_n(x) and its derivative
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let kf = k as f64;
                    let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                    p0 = p1;
                    p1 = p2;
                }
                let pn = if n == 1 { x } else { p1 };
                let pn1 = if n == 1 { 1.0 } else { p0 };
                dp = n as f64 * (x * pn - pn1) / (x * x - 1.0);
                let dx = pn / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            weights[i] = w;
            nodes[n - 1 - i] = x;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Rule { nodes, weights }
    }

    /// Composite Gauss–Legendre on `[a, b]` with equal panels.
    pub fn composite(a: f64, b: f64, panels: usize, order: usize) -> Rule {
        let base = Rule::gauss_legendre(order);
        let h = (b - a) / panels as f64;
        let mut nodes = Vec::with_capacity(panels * order);
        let mut weights = Vec::with_capacity(panels * order);
        for p in 0..panels {
            let lo = a + p as f64 * h;
            for (x, w) in base.nodes.iter().zip(&base.weights) {
                nodes.push(lo + 0.5 * h * (x + 1.0));
                weights.push(0.5 * h * w);
            }
        }
        Rule { nodes, weights }
    }

    /// Composite rule on `[a, b]` after the substitution `x = a + (b - a) t²`.
    ///
    /// Integrands built from `(x - a)^β` with half-integer `β` become
    /// polynomial in `t`, so the rule converges spectrally where a plain
    /// composite rule would stall at the square-root endpoint.
    pub fn sqrt_graded(a: f64, b: f64, panels: usize, order: usize) -> Rule {
        let t = Rule::composite(0.0, 1.0, panels, order);
        let len = b - a;
        let nodes = t.nodes.iter().map(|t| a + len * t * t).collect();
        let weights = t
            .nodes
            .iter()
            .zip(&t.weights)
            .map(|(t, w)| 2.0 * len * t * w)
            .collect();
        Rule { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(*x))
            .sum()
    }
}

/// Adaptive Simpson quadrature of `f` over `[a, b]`.
///
/// Intervals are bisected until the two-level Simpson estimates differ by
/// less than `15·tol` (scaled to the interval); the Richardson-corrected
/// value is returned.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    // seed with a few panels so narrow features are not missed entirely
    const SEED_PANELS: usize = 8;
    let h = (b - a) / SEED_PANELS as f64;
    let mut total = 0.0;
    for k in 0..SEED_PANELS {
        let lo = a + k as f64 * h;
        let hi = if k + 1 == SEED_PANELS { b } else { lo + h };
        let mid = 0.5 * (lo + hi);
        let (fa, fm, fb) = (f(lo), f(mid), f(hi));
        let whole = (hi - lo) / 6.0 * (fa + 4.0 * fm + fb);
        total += simpson_rec(f, lo, hi, fa, fm, fb, whole, tol / SEED_PANELS as f64, 48)?;
    }
    Ok(total)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if !delta.is_finite() {
        return Err(Error::Quadrature(format!(
            "non-finite integrand on [{a}, {b}]"
        )));
    }
    if depth == 0 {
        return Err(Error::Quadrature(format!(
            "recursion limit on [{a}, {b}], residual {delta:e}"
        )));
    }
    if delta.abs() <= 15.0 * tol || (b - a).abs() < 1e-13 * (1.0 + a.abs()) {
        return Ok(left + right + delta / 15.0);
    }
    Ok(simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?
        + simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?)
}
