//! Csiszár-divergence and weighted generalizations of the indices.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::maxent::{fit_copula, fit_density, MaxEntCopula, MaxEntDensity, MaxEntSettings};
use crate::model::{InputModel, Marginal};
use crate::rng::{StreamFactory, StreamId};

use super::{column, purpose};

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Convex `φ` with `φ(1) = 0`.
#[derive(Clone)]
pub enum DivergenceSpec {
    /// `½|1 − x|`
    TotalVariation,
    /// `−ln x`, giving `KL(Q‖P)` for `Q` the reference law; infinite at 0.
    KullbackLeibler,
    /// `x ln x`, giving `KL(P‖Q)`; for a copula this is the mutual information.
    KullbackLeiblerJoint,
    Custom { name: String, phi: ScalarFn },
}

/// Names accepted in configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DivergenceName {
    TotalVariation,
    KullbackLeibler,
    KullbackLeiblerJoint,
}

impl From<DivergenceName> for DivergenceSpec {
    fn from(n: DivergenceName) -> Self {
        match n {
            DivergenceName::TotalVariation => DivergenceSpec::TotalVariation,
            DivergenceName::KullbackLeibler => DivergenceSpec::KullbackLeibler,
            DivergenceName::KullbackLeiblerJoint => DivergenceSpec::KullbackLeiblerJoint,
        }
    }
}

impl fmt::Debug for DivergenceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl DivergenceSpec {
    pub fn custom(name: impl Into<String>, phi: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        DivergenceSpec::Custom {
            name: name.into(),
            phi: Arc::new(phi),
        }
    }

    pub fn name(&self) -> &str {
        match self {
            DivergenceSpec::TotalVariation => "total_variation",
            DivergenceSpec::KullbackLeibler => "kullback_leibler",
            DivergenceSpec::KullbackLeiblerJoint => "kullback_leibler_joint",
            DivergenceSpec::Custom { name, .. } => name,
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            DivergenceSpec::TotalVariation => 0.5 * (1.0 - x).abs(),
            DivergenceSpec::KullbackLeibler => {
                if x == 0.0 {
                    f64::INFINITY
                } else {
                    -x.ln()
                }
            }
            DivergenceSpec::KullbackLeiblerJoint => {
                if x == 0.0 {
                    0.0
                } else {
                    x * x.ln()
                }
            }
            DivergenceSpec::Custom { phi, .. } => phi(x),
        }
    }

    /// Checks `φ(1) = 0` and midpoint convexity at 100 random pairs in `(0, 10)`.
    pub fn validate(&self) -> Result<()> {
        let at_one = self.eval(1.0);
        if at_one.abs() > 1e-12 {
            return Err(invalid("indices.divergence", format!("φ(1) = {at_one}, expected 0")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0x0c5a);
        for _ in 0..100 {
            let a = 10.0 * rng.random::<f64>();
            let b = 10.0 * rng.random::<f64>();
            let (fa, fb, fm) = (self.eval(a), self.eval(b), self.eval(0.5 * (a + b)));
            if fm > 0.5 * (fa + fb) + 1e-12 * (1.0 + fa.abs() + fb.abs()) {
                return Err(invalid(
                    "indices.divergence",
                    format!("φ is not convex between {a} and {b}"),
                ));
            }
        }
        Ok(())
    }
}

/// Nonnegative weight `w(y)` defining the tilted law.
#[derive(Clone)]
pub enum WeightFunction {
    /// `1{y > S}`
    IndicatorAbove(f64),
    Custom { name: String, w: ScalarFn },
}

impl fmt::Debug for WeightFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightFunction::IndicatorAbove(s) => write!(f, "indicator_above({s})"),
            WeightFunction::Custom { name, .. } => f.write_str(name),
        }
    }
}

impl WeightFunction {
    pub fn custom(name: impl Into<String>, w: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        WeightFunction::Custom {
            name: name.into(),
            w: Arc::new(w),
        }
    }

    pub fn eval(&self, y: f64) -> f64 {
        match self {
            WeightFunction::IndicatorAbove(s) => {
                if y > *s {
                    1.0
                } else {
                    0.0
                }
            }
            WeightFunction::Custom { w, .. } => w(y),
        }
    }

    /// `w ≥ 0` on the outputs and positive on at least one of them.
    pub fn validate(&self, outputs: &[f64]) -> Result<()> {
        let mut positive = false;
        for &y in outputs {
            let w = self.eval(y);
            if !(w >= 0.0) || !w.is_finite() {
                return Err(invalid("weight", format!("w({y}) = {w} is not a finite nonnegative value")));
            }
            positive |= w > 0.0;
        }
        if !positive {
            return Err(invalid("weight", "w vanishes on every output"));
        }
        Ok(())
    }
}

/// `(1/N′) Σ φ(ĉ(U^k))` over uniform points on the unit square.
pub fn csiszar_copula<R: Rng + ?Sized>(
    phi: &DivergenceSpec,
    copula: &MaxEntCopula,
    n_prime: usize,
    rng: &mut R,
) -> f64 {
    let mut sum = 0.0;
    for _ in 0..n_prime {
        let u: f64 = rng.random();
        let v: f64 = rng.random();
        sum += phi.eval(copula.density(u, v));
    }
    sum / n_prime as f64
}

/// `(1/N′) Σ φ(f̂(X^k)/f(X^k))` with `X^k` drawn from `marginal`.
pub fn csiszar_marginal<R: Rng + ?Sized>(
    phi: &DivergenceSpec,
    density: &MaxEntDensity,
    marginal: &Marginal,
    n_prime: usize,
    rng: &mut R,
) -> Result<f64> {
    let mut sum = 0.0;
    for _ in 0..n_prime {
        let x = marginal.sample(rng);
        let fx = marginal.pdf(x);
        if !(fx > 0.0) {
            return Err(Error::DensityUnderflow(format!("input density is 0 at {x}")));
        }
        sum += phi.eval(density.density(x) / fx);
    }
    Ok(sum / n_prime as f64)
}

/// Generalized indices of one input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneralizedIndex {
    pub eta_bar: f64,
    pub delta: f64,
}

/// Plug-in `η̄^{φ,w}_i` and `δ^{φ,w}_i` for every input, from a sample of
/// the `w`-tilted law and its outputs.
///
/// Random streams coincide with those of the dedicated estimators, so with
/// total variation and the indicator weight the results match them exactly.
pub fn estimate_generalized(
    phi: &DivergenceSpec,
    w: &WeightFunction,
    tilted_sample: &[Vec<f64>],
    outputs: &[f64],
    input: &InputModel,
    settings: &MaxEntSettings,
    n_prime: usize,
    seed: u64,
) -> Result<Vec<GeneralizedIndex>> {
    phi.validate()?;
    w.validate(outputs)?;
    if tilted_sample.len() != outputs.len() {
        return Err(invalid("sample", "one output per sample row"));
    }
    let streams = StreamFactory::new(seed);
    (0..input.dim())
        .map(|i| {
            let xi = column(tilted_sample, i);
            let density = fit_density(&xi, &settings.density_exponents)?;
            let copula = fit_copula(&xi, outputs, &settings.copula_exponents)?;
            let mut rng = streams.stream(StreamId::PlugIn {
                input: i as u32,
                purpose: purpose::COPULA,
            });
            let delta = csiszar_copula(phi, &copula, n_prime, &mut rng);
            let mut rng = streams.stream(StreamId::PlugIn {
                input: i as u32,
                purpose: purpose::MARGINAL,
            });
            let eta_bar = csiszar_marginal(phi, &density, input.marginal(i), n_prime, &mut rng)?;
            if eta_bar.is_infinite() || delta.is_infinite() {
                log::warn!(
                    "{} divergence is infinite for input {i} (estimated density vanishes)",
                    phi.name()
                );
            }
            Ok(GeneralizedIndex { eta_bar, delta })
        })
        .collect()
}
