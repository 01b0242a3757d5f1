//! Reference values computed independently of the sampling pipeline.
//!
//! For `toy1` and `additive_chi2` the conditional and unconditional laws of
//! `Y` are available in closed form up to one-dimensional integrals, so the
//! indices reduce to nested quadratures. Rejection sampling gives exact
//! draws from `X | Y > S` when the event is not too rare.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    std_normal_cdf, std_normal_pdf, std_normal_sf, BlackBox, FailureEvent, InputModel,
};
use crate::quadrature::{adaptive_simpson, Rule};
use crate::rng::{StreamFactory, StreamId};

pub const DEFAULT_TOLERANCE: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceMethod {
    Quadrature,
    ClosedForm,
    Rejection,
}

impl fmt::Display for ReferenceMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReferenceMethod::Quadrature => "quadrature",
            ReferenceMethod::ClosedForm => "closed_form",
            ReferenceMethod::Rejection => "rejection",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceValue {
    pub quantity: String,
    pub value: f64,
    pub method: ReferenceMethod,
    pub tolerance: f64,
}

impl ReferenceValue {
    fn new(quantity: &str, value: f64, method: ReferenceMethod, tolerance: f64) -> Self {
        Self {
            quantity: quantity.to_string(),
            value,
            method,
            tolerance,
        }
    }
}

/// Looks up `quantity` in `refs`.
pub fn reference(refs: &[ReferenceValue], quantity: &str) -> Option<f64> {
    refs.iter().find(|r| r.quantity == quantity).map(|r| r.value)
}

/// Whitespace-separated fixture: `quantity value method tolerance` per line.
pub fn to_fixture(refs: &[ReferenceValue]) -> String {
    refs.iter()
        .map(|r| format!("{} {:?} {} {:e}\n", r.quantity, r.value, r.method, r.tolerance))
        .collect()
}

pub fn from_fixture(text: &str) -> Result<Vec<ReferenceValue>> {
    text.lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|l| {
            let f: Vec<&str> = l.split_whitespace().collect();
            let bad = || Error::Config(format!("malformed fixture line {l:?}"));
            if f.len() != 4 {
                return Err(bad());
            }
            let method = match f[2] {
                "quadrature" => ReferenceMethod::Quadrature,
                "closed_form" => ReferenceMethod::ClosedForm,
                "rejection" => ReferenceMethod::Rejection,
                _ => return Err(bad()),
            };
            Ok(ReferenceValue {
                quantity: f[0].to_string(),
                value: f[1].parse().map_err(|_| bad())?,
                method,
                tolerance: f[3].parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

/// References for a builtin model name.
pub fn references(name: &str) -> Result<Vec<ReferenceValue>> {
    match name {
        "toy1" => toy1_references(DEFAULT_TOLERANCE),
        "additive_chi2" => chi2_references(DEFAULT_TOLERANCE),
        other => Err(Error::NoReferences(other.to_string())),
    }
}

fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    adaptive_simpson(&f, a, b, tol)
}

// ---- toy1: Y = X1 + 1{X1>3}|X2|, X1 ~ N(0,1), X2 ~ N(0,5), S = 3 ----

const TOY_S: f64 = 3.0;
const TOY_VAR2: f64 = 5.0;

/// Density of `X̃₁`, the standard normal truncated to `(3, ∞)`.
fn toy_g1(x: f64) -> f64 {
    if x > TOY_S {
        std_normal_pdf(x) / std_normal_sf(TOY_S)
    } else {
        0.0
    }
}

/// Density of `|X₂|`.
fn toy_h(z: f64) -> f64 {
    let s = TOY_VAR2.sqrt();
    if z >= 0.0 {
        2.0 / s * std_normal_pdf(z / s)
    } else {
        0.0
    }
}

/// Density of `Ỹ = X̃₁ + |X₂|`.
fn toy_f_y(y: f64) -> f64 {
    if y <= TOY_S {
        return 0.0;
    }
    // X1 | X1 + X2 = y is N(y/6, 5/6)
    let v = 1.0 + TOY_VAR2;
    let s = (TOY_VAR2 / v).sqrt();
    let phi_v = std_normal_pdf(y / v.sqrt()) / v.sqrt();
    let mass = std_normal_cdf((y - y / v) / s) - std_normal_cdf((TOY_S - y / v) / s);
    2.0 / std_normal_sf(TOY_S) * phi_v * mass.max(0.0)
}

/// Truncation lengths beyond which every density involved is below 1e-20.
const TOY_X1_SPAN: f64 = 10.0;
const TOY_Y_SPAN: f64 = 50.0;

pub fn toy1_references(tol: f64) -> Result<Vec<ReferenceValue>> {
    let delta_1 = integrate(
        |x1| {
            let below = integrate(toy_f_y, TOY_S, x1, tol).unwrap_or(f64::NAN);
            let above = integrate(
                |y| (toy_h(y - x1) - toy_f_y(y)).abs(),
                x1,
                x1 + TOY_Y_SPAN,
                tol,
            )
            .unwrap_or(f64::NAN);
            toy_g1(x1) * 0.5 * (below + above)
        },
        TOY_S,
        TOY_S + TOY_X1_SPAN,
        tol,
    )?;
    let delta_2 = integrate(
        |z| {
            let below = integrate(toy_f_y, TOY_S, TOY_S + z, tol).unwrap_or(f64::NAN);
            let above = integrate(
                |y| (toy_g1(y - z) - toy_f_y(y)).abs(),
                TOY_S + z,
                TOY_S + z + TOY_Y_SPAN,
                tol,
            )
            .unwrap_or(f64::NAN);
            toy_h(z) * 0.5 * (below + above)
        },
        0.0,
        TOY_Y_SPAN,
        tol,
    )?;
    if !(delta_1.is_finite() && delta_2.is_finite()) {
        return Err(Error::Quadrature("toy1 inner integral failed".into()));
    }
    let p = std_normal_sf(TOY_S);
    use ReferenceMethod::*;
    Ok(vec![
        ReferenceValue::new("P_f", p, ClosedForm, 1e-15),
        ReferenceValue::new("delta_f_1", delta_1, Quadrature, 1e3 * tol),
        ReferenceValue::new("delta_f_2", delta_2, Quadrature, 1e3 * tol),
        ReferenceValue::new("eta_bar_1", std_normal_cdf(TOY_S), ClosedForm, 1e-15),
        ReferenceValue::new("eta_bar_2", 0.0, ClosedForm, 1e-15),
        // X̃₁ has support (3,∞), so f̃₁/f₁ = 1{x>3}/P and the variance is (1−P)/P
        ReferenceValue::new("sobol_1", 1.0, ClosedForm, 1e-15),
        ReferenceValue::new("sobol_2", 0.0, ClosedForm, 1e-15),
    ])
}

// ---- additive_chi2: Y = X1 + X2², i.i.d. N(0,1), S = 15 ----

const CHI_S: f64 = 15.0;
/// Standard normal densities below φ(9) ≈ 1e-18 are dropped.
const CUT: f64 = 9.0;

fn gl(a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    thread_local! {
        static RULE: Rule = Rule::gauss_legendre(16);
    }
    // 8 panels of 16-point Gauss–Legendre; integrands are entire functions
    RULE.with(|r| {
        let panels = 8;
        let h = (b - a) / panels as f64;
        let mut s = 0.0;
        for p in 0..panels {
            let lo = a + p as f64 * h;
            for (x, w) in r.nodes.iter().zip(&r.weights) {
                s += 0.5 * h * w * f(lo + 0.5 * h * (x + 1.0));
            }
        }
        s
    })
}

/// `f_Y(y) = ∫ φ(u) φ(y − u²) du`.
fn chi_f_y(y: f64) -> f64 {
    let a = (y - CUT).max(0.0).sqrt();
    let b = (y + CUT).max(0.0).sqrt().min(CUT);
    if a >= b {
        return 0.0;
    }
    2.0 * gl(a, b, |u| std_normal_pdf(u) * std_normal_pdf(y - u * u))
}

/// `F_Y(x) = ∫ φ(u) Φ(x − u²) du`.
fn chi_cdf_y(x: f64) -> f64 {
    let t = (x + CUT).max(0.0).sqrt().min(CUT);
    if t == 0.0 {
        return 0.0;
    }
    2.0 * gl(0.0, t, |u| std_normal_pdf(u) * std_normal_cdf(x - u * u))
}

/// `P(X₂² > S − x₁)`.
fn chi_q1(x1: f64) -> f64 {
    if x1 >= CHI_S {
        1.0
    } else {
        2.0 * std_normal_sf((CHI_S - x1).sqrt())
    }
}

/// `P(X₁ > S − x₂²)`.
fn chi_q2(x2: f64) -> f64 {
    std_normal_sf(CHI_S - x2 * x2)
}

/// `∫ φ(x)·g(x) dx` over `[−CUT, CUT]`, split at the origin.
fn against_normal(g: impl Fn(f64) -> f64 + Sync, tol: f64) -> Result<f64> {
    let f = |x: f64| std_normal_pdf(x) * g(x);
    Ok(integrate(f, -CUT, 0.0, tol)? + integrate(f, 0.0, CUT, tol)?)
}

pub fn chi2_references(tol: f64) -> Result<Vec<ReferenceValue>> {
    let p = against_normal(chi_q2, 1e-3 * tol)?;
    let p1 = against_normal(chi_q1, 1e-3 * tol)?;
    debug_assert!((p - p1).abs() < 1e-9);

    let eta_bar = |q: fn(f64) -> f64| against_normal(|x| 0.5 * (1.0 - q(x) / p).abs(), tol);
    let sobol = |q: fn(f64) -> f64| -> Result<f64> {
        let m2 = against_normal(|x| q(x) * q(x), 1e-3 * tol)?;
        Ok((m2 - p * p) / (p * (1.0 - p)))
    };

    // the tail of Y beyond 15 + 60 carries mass below 1e-14
    let y_hi = CHI_S + 60.0;
    let inner_tol = tol;
    let jobs: Vec<Box<dyn Fn() -> Result<f64> + Sync>> = vec![
        // δ₁ with y = x₁ + u² so the χ²₁ density becomes 2φ(u)
        Box::new(|| {
            against_normal(
                |x1| {
                    let above = integrate(
                        |u| (2.0 * std_normal_pdf(u) - 2.0 * u * chi_f_y(x1 + u * u)).abs(),
                        0.0,
                        CUT,
                        inner_tol,
                    )
                    .unwrap_or(f64::NAN);
                    0.5 * (chi_cdf_y(x1) + above)
                },
                tol,
            )
        }),
        Box::new(|| {
            against_normal(
                |x2| {
                    let m = x2 * x2;
                    let f = |y: f64| (std_normal_pdf(y - m) - chi_f_y(y)).abs();
                    let lo = -CUT;
                    let hi = m.max(CHI_S) + 4.0 * CUT;
                    0.5 * integrate(f, lo, hi, inner_tol).unwrap_or(f64::NAN)
                },
                tol,
            )
        }),
        // δᶠ₁: conditional density of Ỹ given X̃₁ = x₁ is χ²₁(y − x₁)/q₁ on y > 15
        Box::new(|| {
            against_normal(
                |x1| {
                    let q = chi_q1(x1);
                    let u0 = (CHI_S - x1).max(0.0).sqrt();
                    let inner = integrate(
                        |u| (2.0 * std_normal_pdf(u) - 2.0 * u * q * chi_f_y(x1 + u * u) / p).abs(),
                        u0,
                        u0 + CUT,
                        inner_tol * p,
                    )
                    .unwrap_or(f64::NAN);
                    0.5 / p * inner
                },
                tol,
            )
        }),
        Box::new(|| {
            against_normal(
                |x2| {
                    let m = x2 * x2;
                    let q = chi_q2(x2);
                    let f = |y: f64| (std_normal_pdf(y - m) - q * chi_f_y(y) / p).abs();
                    0.5 / p * integrate(f, CHI_S, y_hi.max(m + CUT), inner_tol * p).unwrap_or(f64::NAN)
                },
                tol,
            )
        }),
    ];
    let vals: Vec<f64> = jobs.par_iter().map(|j| j()).collect::<Result<_>>()?;
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(Error::Quadrature("additive_chi2 inner integral failed".into()));
    }
    use ReferenceMethod::*;
    let t = 1e3 * tol;
    Ok(vec![
        ReferenceValue::new("P_f", p, Quadrature, 1e-3 * t),
        ReferenceValue::new("delta_1", vals[0], Quadrature, t),
        ReferenceValue::new("delta_2", vals[1], Quadrature, t),
        ReferenceValue::new("delta_f_1", vals[2], Quadrature, t),
        ReferenceValue::new("delta_f_2", vals[3], Quadrature, t),
        ReferenceValue::new("eta_bar_1", eta_bar(chi_q1)?, Quadrature, t),
        ReferenceValue::new("eta_bar_2", eta_bar(chi_q2)?, Quadrature, t),
        ReferenceValue::new("sobol_1", sobol(chi_q1)?, Quadrature, t),
        ReferenceValue::new("sobol_2", sobol(chi_q2)?, Quadrature, t),
    ])
}

/// Exact draws from `X | M(X) > S`.
#[derive(Debug, Clone, PartialEq)]
pub struct RejectionSample {
    pub sample: Vec<Vec<f64>>,
    pub outputs: Vec<f64>,
    /// Unconditional draws consumed.
    pub draws: u64,
}

const REJECTION_CHUNK: usize = 10_000;

/// Draws from the input law in fixed chunks until `n_target` points satisfy
/// the event, or fails once `budget` draws are spent.
pub fn rejection_conditioned_sample(
    model: &BlackBox,
    input: &InputModel,
    event: &FailureEvent,
    n_target: usize,
    budget: u64,
    seed: u64,
) -> Result<RejectionSample> {
    let streams = StreamFactory::new(seed);
    let mut out = RejectionSample {
        sample: Vec::with_capacity(n_target),
        outputs: Vec::with_capacity(n_target),
        draws: 0,
    };
    let mut chunk = 0u32;
    while out.sample.len() < n_target {
        if out.draws >= budget {
            log::warn!(
                "rejection sampling accepted {} of {n_target} within {budget} draws",
                out.sample.len()
            );
            return Err(Error::BudgetExhausted {
                accepted: out.sample.len(),
                target: n_target,
                budget,
            });
        }
        let len = REJECTION_CHUNK.min((budget - out.draws) as usize);
        let mut rng = streams.stream(StreamId::Auxiliary(chunk));
        let xs: Vec<Vec<f64>> = (0..len).map(|_| input.sample_one(&mut rng)).collect();
        let ys: Vec<f64> = if model.is_thread_safe() {
            xs.par_iter().map(|x| model.evaluate(x)).collect::<Result<_, _>>()?
        } else {
            xs.iter().map(|x| model.evaluate(x)).collect::<Result<_, _>>()?
        };
        for (x, y) in xs.into_iter().zip(ys) {
            out.draws += 1;
            if event.is_failure(y) {
                out.sample.push(x);
                out.outputs.push(y);
                if out.sample.len() == n_target {
                    break;
                }
            }
        }
        chunk += 1;
    }
    Ok(out)
}
