//! Maximum-entropy densities under fractional-moment constraints.
//!
//! One-dimensional densities use the features `x^{β_t}` on a bounded support
//! around the sample; copula densities on `[0,1]²` use `u^{α_r} v^{α_s}` for
//! every pair of exponents. Both are solved through the convex dual (see
//! [`solver`]) and have the form `c·e^{−⟨Λ, φ⟩}` on their support.

mod solver;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::quadrature::Rule;
use solver::{solve_dual, Design};

pub const DEFAULT_EXPONENTS: [f64; 3] = [0.5, 1.0, 1.5];
/// Fraction of the sample range added on each side of a 1-D support.
pub const SUPPORT_MARGIN: f64 = 0.05;
/// Offset, relative to the range, that keeps a shifted sample positive.
pub const SHIFT_EPSILON: f64 = 1e-6;
/// Upper bound on the dual gradient norm of any returned solution.
pub const GRADIENT_BOUND: f64 = 1e-6;
/// Tolerance on normalization and moments when checking against a finer grid.
const GRID_TOL: f64 = 1e-7;

const PANELS_1D: usize = 64;
const PANELS_2D: usize = 16;
const ORDER: usize = 8;
const REFINEMENTS: usize = 2;

/// `x^e`, with integer exponents taken exactly so negative `x` is allowed.
pub fn power(x: f64, e: f64) -> f64 {
    if e.fract() == 0.0 && e.abs() <= 64.0 {
        x.powi(e as i32)
    } else {
        x.powf(e)
    }
}

fn has_fractional(exponents: &[f64]) -> bool {
    exponents.iter().any(|e| e.fract() != 0.0)
}

fn check_exponents(exponents: &[f64], field: &str) -> Result<()> {
    if exponents.is_empty() {
        return Err(invalid(field, "at least one exponent is required"));
    }
    if exponents.iter().any(|e| !e.is_finite() || *e <= 0.0) {
        return Err(invalid(field, "exponents must be finite and > 0"));
    }
    if exponents.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid(field, "exponents must be strictly increasing"));
    }
    Ok(())
}

/// Exponents of the 1-D and copula problems.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaxEntSettings {
    pub density_exponents: Vec<f64>,
    pub copula_exponents: Vec<f64>,
}

impl Default for MaxEntSettings {
    fn default() -> Self {
        Self {
            density_exponents: DEFAULT_EXPONENTS.to_vec(),
            copula_exponents: DEFAULT_EXPONENTS.to_vec(),
        }
    }
}

impl MaxEntSettings {
    pub fn validate(&self) -> Result<()> {
        check_exponents(&self.density_exponents, "maxent.density_exponents")?;
        check_exponents(&self.copula_exponents, "maxent.copula_exponents")
    }
}

/// Moment constraints of a 1-D problem.
///
/// Features are evaluated in shifted coordinates `z = x + shift`, which are
/// nonnegative on the support whenever an exponent is fractional.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentConstraints {
    pub exponents: Vec<f64>,
    pub targets: Vec<f64>,
    /// Support in original coordinates.
    pub support: (f64, f64),
    pub shift: f64,
}

impl MomentConstraints {
    /// Constraints with explicit targets and support and no shift.
    pub fn new(exponents: Vec<f64>, targets: Vec<f64>, support: (f64, f64)) -> Result<Self> {
        check_exponents(&exponents, "exponents")?;
        if targets.len() != exponents.len() {
            return Err(invalid("targets", "one target per exponent"));
        }
        if !(support.0.is_finite() && support.1.is_finite() && support.0 < support.1) {
            return Err(invalid("support", "must be a finite nonempty interval"));
        }
        if has_fractional(&exponents) && support.0 < 0.0 {
            return Err(invalid("support", "fractional exponents need a nonnegative support"));
        }
        Ok(Self {
            exponents,
            targets,
            support,
            shift: 0.0,
        })
    }
}

/// Empirical fractional moments of a 1-D sample.
///
/// The support is the sample range widened by [`SUPPORT_MARGIN`] on each
/// side. With fractional exponents and a sample that reaches zero or below,
/// coordinates are shifted by `−min + ε` (ε = [`SHIFT_EPSILON`]·range); in
/// either case the lower end of the support is clipped at the shifted
/// origin so every feature is defined.
pub fn estimate_fractional_moments_1d(sample: &[f64], exponents: &[f64]) -> Result<MomentConstraints> {
    check_exponents(exponents, "maxent.density_exponents")?;
    if sample.is_empty() {
        return Err(Error::DegenerateSample("empty sample".into()));
    }
    if sample.iter().any(|x| !x.is_finite()) {
        return Err(Error::DegenerateSample("non-finite sample value".into()));
    }
    let min = sample.iter().copied().fold(f64::INFINITY, f64::min);
    let max = sample.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    let fractional = has_fractional(exponents);
    let shift = if fractional && min <= 0.0 {
        -min + SHIFT_EPSILON * range.max(f64::MIN_POSITIVE)
    } else {
        0.0
    };
    let targets = exponents
        .iter()
        .map(|&e| sample.iter().map(|x| power(x + shift, e)).sum::<f64>() / sample.len() as f64)
        .collect();
    let mut lo = min - SUPPORT_MARGIN * range;
    if fractional {
        lo = lo.max(-shift);
    }
    Ok(MomentConstraints {
        exponents: exponents.to_vec(),
        targets,
        support: (lo, max + SUPPORT_MARGIN * range),
        shift,
    })
}

/// Moment constraints of a copula problem; targets are row-major in `(r, s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CopulaConstraints {
    pub exponents: Vec<f64>,
    pub targets: Vec<f64>,
}

impl CopulaConstraints {
    pub fn new(exponents: Vec<f64>, targets: Vec<f64>) -> Result<Self> {
        check_exponents(&exponents, "exponents")?;
        if targets.len() != exponents.len() * exponents.len() {
            return Err(invalid("targets", "one target per exponent pair"));
        }
        Ok(Self { exponents, targets })
    }

    /// Targets of the independence copula, `1/((1+α_r)(1+α_s))`.
    pub fn independence(exponents: Vec<f64>) -> Result<Self> {
        let targets = exponents
            .iter()
            .flat_map(|a| exponents.iter().map(move |b| 1.0 / ((1.0 + a) * (1.0 + b))))
            .collect();
        Self::new(exponents, targets)
    }
}

/// Normalized ranks `rank/N`, ties receiving their average rank.
pub fn pseudo_observations(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // ranks i+1..=j share their mean
        let avg = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            out[k] = avg / n as f64;
        }
        i = j;
    }
    out
}

/// Empirical copula moments of the pairs `(x[k], y[k])`.
pub fn estimate_fractional_moments_copula(
    x: &[f64],
    y: &[f64],
    exponents: &[f64],
) -> Result<CopulaConstraints> {
    check_exponents(exponents, "maxent.copula_exponents")?;
    if x.len() != y.len() {
        return Err(invalid("sample", "coordinates differ in length"));
    }
    if x.len() < 2 {
        return Err(Error::DegenerateSample("copula needs at least 2 points".into()));
    }
    for (name, v) in [("first", x), ("second", y)] {
        if v.iter().any(|t| !t.is_finite()) {
            return Err(Error::DegenerateSample(format!("non-finite {name} coordinate")));
        }
        if v.iter().all(|t| *t == v[0]) {
            return Err(Error::DegenerateSample(format!("{name} coordinate is constant")));
        }
    }
    let u = pseudo_observations(x);
    let v = pseudo_observations(y);
    let n = x.len() as f64;
    let mut targets = Vec::with_capacity(exponents.len() * exponents.len());
    for &a in exponents {
        let ua: Vec<f64> = u.iter().map(|t| power(*t, a)).collect();
        for &b in exponents {
            let m = ua.iter().zip(&v).map(|(p, t)| p * power(*t, b)).sum::<f64>() / n;
            targets.push(m);
        }
    }
    CopulaConstraints::new(exponents.to_vec(), targets)
}

/// `c·e^{−⟨Λ, φ(x + shift)⟩}` on `support`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxEntDensity {
    pub exponents: Vec<f64>,
    pub multipliers: Vec<f64>,
    pub log_normalizer: f64,
    pub support: (f64, f64),
    pub shift: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
}

/// `c·e^{−Σ Λ_{rs} u^{α_r} v^{α_s}}` on `[0,1]²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxEntCopula {
    pub exponents: Vec<f64>,
    /// Row-major in `(r, s)`.
    pub multipliers: Vec<f64>,
    pub log_normalizer: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    /// Largest deviation of either marginal density from 1 on the grid.
    pub marginal_deviation: f64,
}

impl MaxEntDensity {
    pub fn features(&self, x: f64) -> Vec<f64> {
        let z = x + self.shift;
        self.exponents.iter().map(|&e| power(z, e)).collect()
    }

    pub fn ln_density(&self, x: f64) -> f64 {
        if !(x >= self.support.0 && x <= self.support.1) {
            return f64::NEG_INFINITY;
        }
        let z = x + self.shift;
        self.log_normalizer
            - self
                .exponents
                .iter()
                .zip(&self.multipliers)
                .map(|(&e, l)| l * power(z, e))
                .sum::<f64>()
    }

    pub fn density(&self, x: f64) -> f64 {
        self.ln_density(x).exp()
    }

    /// Quadrature on the support, graded toward the shifted origin when the
    /// support starts there.
    pub fn rule(&self, panels: usize) -> Rule {
        rule_1d(self.support, self.shift, panels)
    }

    pub fn to_record(&self) -> String {
        format!(
            "maxent_density exponents={} multipliers={} log_c={:?} support={:?},{:?} shift={:?}",
            join(&self.exponents),
            join(&self.multipliers),
            self.log_normalizer,
            self.support.0,
            self.support.1,
            self.shift
        )
    }
}

impl MaxEntCopula {
    /// Density ≡ 1.
    pub fn independence(exponents: Vec<f64>) -> Self {
        let n = exponents.len();
        Self {
            exponents,
            multipliers: vec![0.0; n * n],
            log_normalizer: 0.0,
            gradient_norm: 0.0,
            iterations: 0,
            marginal_deviation: 0.0,
        }
    }

    pub fn features(&self, u: f64, v: f64) -> Vec<f64> {
        copula_features(&self.exponents, u, v)
    }

    pub fn ln_density(&self, u: f64, v: f64) -> f64 {
        if !((0.0..=1.0).contains(&u) && (0.0..=1.0).contains(&v)) {
            return f64::NEG_INFINITY;
        }
        let f = self.features(u, v);
        self.log_normalizer - f.iter().zip(&self.multipliers).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn density(&self, u: f64, v: f64) -> f64 {
        self.ln_density(u, v).exp()
    }

    pub fn to_record(&self) -> String {
        format!(
            "maxent_copula exponents={} multipliers={} log_c={:?}",
            join(&self.exponents),
            join(&self.multipliers),
            self.log_normalizer
        )
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",")
}

fn record_fields(s: &str, kind: &str) -> Result<std::collections::HashMap<String, String>> {
    let mut it = s.split_whitespace();
    if it.next() != Some(kind) {
        return Err(Error::Config(format!("expected a `{kind}` record")));
    }
    it.map(|kv| {
        kv.split_once('=')
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .ok_or_else(|| Error::Config(format!("malformed field `{kv}`")))
    })
    .collect()
}

fn parse_list(fields: &std::collections::HashMap<String, String>, key: &str) -> Result<Vec<f64>> {
    let raw = fields
        .get(key)
        .ok_or_else(|| Error::Config(format!("record lacks `{key}`")))?;
    raw.split(',')
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| Error::Config(format!("bad number `{t}` in `{key}`")))
        })
        .collect()
}

impl FromStr for MaxEntDensity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let f = record_fields(s, "maxent_density")?;
        let support = parse_list(&f, "support")?;
        if support.len() != 2 {
            return Err(Error::Config("support needs two bounds".into()));
        }
        Ok(Self {
            exponents: parse_list(&f, "exponents")?,
            multipliers: parse_list(&f, "multipliers")?,
            log_normalizer: parse_list(&f, "log_c")?[0],
            support: (support[0], support[1]),
            shift: parse_list(&f, "shift")?[0],
            gradient_norm: 0.0,
            iterations: 0,
        })
    }
}

impl FromStr for MaxEntCopula {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let f = record_fields(s, "maxent_copula")?;
        Ok(Self {
            exponents: parse_list(&f, "exponents")?,
            multipliers: parse_list(&f, "multipliers")?,
            log_normalizer: parse_list(&f, "log_c")?[0],
            gradient_norm: 0.0,
            iterations: 0,
            marginal_deviation: 0.0,
        })
    }
}

impl fmt::Display for MaxEntDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_record())
    }
}

impl fmt::Display for MaxEntCopula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_record())
    }
}

fn copula_features(exponents: &[f64], u: f64, v: f64) -> Vec<f64> {
    let pu: Vec<f64> = exponents.iter().map(|&a| power(u, a)).collect();
    let pv: Vec<f64> = exponents.iter().map(|&b| power(v, b)).collect();
    pu.iter().flat_map(|a| pv.iter().map(move |b| a * b)).collect()
}

fn rule_1d(support: (f64, f64), shift: f64, panels: usize) -> Rule {
    if support.0 + shift == 0.0 {
        Rule::sqrt_graded(support.0, support.1, panels, ORDER)
    } else {
        Rule::composite(support.0, support.1, panels, ORDER)
    }
}

fn design_1d(c: &MomentConstraints, panels: usize) -> Design {
    let rule = rule_1d(c.support, c.shift, panels);
    let n = c.exponents.len();
    let mut features = Vec::with_capacity(rule.len() * n);
    for x in &rule.nodes {
        features.extend(c.exponents.iter().map(|&e| power(x + c.shift, e)));
    }
    Design {
        n,
        features,
        weights: rule.weights,
    }
}

fn unit_rule(panels: usize) -> Rule {
    // fractional powers of u are polynomial in t under u = t²
    Rule::sqrt_graded(0.0, 1.0, panels, ORDER)
}

fn design_2d(exponents: &[f64], panels: usize) -> Design {
    let rule = unit_rule(panels);
    let n = exponents.len() * exponents.len();
    let k = rule.len();
    let mut features = Vec::with_capacity(k * k * n);
    let mut weights = Vec::with_capacity(k * k);
    for (u, wu) in rule.nodes.iter().zip(&rule.weights) {
        for (v, wv) in rule.nodes.iter().zip(&rule.weights) {
            features.extend(copula_features(exponents, *u, *v));
            weights.push(wu * wv);
        }
    }
    Design {
        n,
        features,
        weights,
    }
}

/// Largest deviation of `∫f = 1` and `∫φ_j f = μ_j` on `design`.
fn residual(design: &Design, lambda: &[f64], log_c: f64, targets: &[f64]) -> f64 {
    let (logz, mean, _) = design.moments(lambda);
    let norm_err = (logz + log_c).exp() - 1.0;
    mean.iter()
        .zip(targets)
        .map(|(m, t)| (m - t).abs())
        .fold(norm_err.abs(), f64::max)
}

fn solve_on(
    targets: &[f64],
    build: impl Fn(usize) -> Design,
    base_panels: usize,
) -> Result<(solver::DualSolution, usize)> {
    let mut panels = base_panels;
    let mut last_err = 0.0;
    let mut start: Option<Vec<f64>> = None;
    for _ in 0..=REFINEMENTS {
        let design = build(panels);
        let sol = solve_dual(&design, targets, start.as_deref())?;
        let check = build(2 * panels);
        last_err = residual(&check, &sol.multipliers, sol.log_normalizer, targets);
        if last_err <= GRID_TOL && sol.gradient_norm <= GRADIENT_BOUND {
            return Ok((sol, panels));
        }
        log::debug!("maxent grid with {panels} panels off by {last_err:e}; refining");
        start = Some(sol.multipliers);
        panels *= 2;
    }
    Err(Error::Quadrature(format!(
        "max-entropy integrals unresolved after {REFINEMENTS} refinements (residual {last_err:e})"
    )))
}

/// Solves the 1-D dual problem.
pub fn solve_density(c: &MomentConstraints) -> Result<MaxEntDensity> {
    if !(c.support.1 > c.support.0) {
        return Err(Error::DegenerateSample("support has zero width".into()));
    }
    let (sol, _) = solve_on(&c.targets, |p| design_1d(c, p), PANELS_1D)?;
    Ok(MaxEntDensity {
        exponents: c.exponents.clone(),
        multipliers: sol.multipliers,
        log_normalizer: sol.log_normalizer,
        support: c.support,
        shift: c.shift,
        gradient_norm: sol.gradient_norm,
        iterations: sol.iterations,
    })
}

/// Solves the copula dual problem on the unit square.
pub fn solve_copula(c: &CopulaConstraints) -> Result<MaxEntCopula> {
    let (sol, panels) = solve_on(&c.targets, |p| design_2d(&c.exponents, p), PANELS_2D)?;
    let mut copula = MaxEntCopula {
        exponents: c.exponents.clone(),
        multipliers: sol.multipliers,
        log_normalizer: sol.log_normalizer,
        gradient_norm: sol.gradient_norm,
        iterations: sol.iterations,
        marginal_deviation: 0.0,
    };
    copula.marginal_deviation = marginal_deviation(&copula, panels);
    Ok(copula)
}

fn marginal_deviation(c: &MaxEntCopula, panels: usize) -> f64 {
    let rule = unit_rule(panels);
    let mut worst: f64 = 0.0;
    for &a in &rule.nodes {
        let mu = rule.integrate(|b| c.density(a, b));
        let mv = rule.integrate(|b| c.density(b, a));
        worst = worst.max((mu - 1.0).abs()).max((mv - 1.0).abs());
    }
    worst
}

/// Maximum-entropy density fitted to `sample`.
pub fn fit_density(sample: &[f64], exponents: &[f64]) -> Result<MaxEntDensity> {
    solve_density(&estimate_fractional_moments_1d(sample, exponents)?)
}

/// Maximum-entropy copula fitted to the pairs `(x[k], y[k])`.
pub fn fit_copula(x: &[f64], y: &[f64], exponents: &[f64]) -> Result<MaxEntCopula> {
    solve_copula(&estimate_fractional_moments_copula(x, y, exponents)?)
}

/// Dual objective of a 1-D problem at `lambda`, on the default grid.
pub fn dual_objective_1d(c: &MomentConstraints, lambda: &[f64]) -> f64 {
    solver::dual_objective(&design_1d(c, PANELS_1D), &c.targets, lambda)
}

/// Dual objective of a copula problem at `lambda`, on the default grid.
pub fn dual_objective_copula(c: &CopulaConstraints, lambda: &[f64]) -> f64 {
    solver::dual_objective(&design_2d(&c.exponents, PANELS_2D), &c.targets, lambda)
}
