//! Sensitivity indices from a failure-conditioned sample.
//!
//! For each input `i`:
//! - `δᶠ_i`: ½∫|ĉ_i − 1| for the copula of `(X̃_i, Ỹ)` under failure;
//! - `η̄_i`: total variation between `X_i` and `X_i | Y > S`;
//! - `η_i = 2·P_f·η̄_i`;
//! - Sobol index of the failure indicator, `P/(1−P)·Var[f̃_i(X_i)/f_i(X_i)]`;
//! - optionally the unconditional `δ_i` from a crude Monte Carlo sample.

mod generalized;

pub use generalized::{
    csiszar_copula, csiszar_marginal, estimate_generalized, DivergenceName, DivergenceSpec,
    GeneralizedIndex, WeightFunction,
};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::maxent::{fit_copula, fit_density, MaxEntCopula, MaxEntDensity, MaxEntSettings};
use crate::model::{FailureEvent, InputModel, Marginal};
use crate::rng::{StreamFactory, StreamId};

pub const DEFAULT_PLUGIN_SAMPLES: usize = 100_000;
/// Sample variances in `[−NEGATIVE_VARIANCE_CLAMP, 0)` are set to zero.
pub const NEGATIVE_VARIANCE_CLAMP: f64 = 1e-12;
const ETA_BAR_PANELS: usize = 512;

/// Stream purposes of the plug-in integrals.
pub(crate) mod purpose {
    pub const COPULA: u32 = 0;
    pub const MARGINAL: u32 = 1;
    pub const SOBOL: u32 = 2;
    pub const UNCONDITIONAL: u32 = 3;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EtaBarMethod {
    /// ½∫|f − f̂| by quadrature.
    #[default]
    Quadrature,
    /// `(1/N′) Σ ½|f̂(X^k)/f(X^k) − 1|`, `X^k ~ f`.
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IndexSettings {
    /// `N′`
    pub plugin_samples: usize,
    pub eta_bar_method: EtaBarMethod,
    /// Crude Monte Carlo draws for the unconditional `δ`; 0 skips it.
    pub unconditional_delta_samples: usize,
    /// Extra generalized indices with the indicator weight.
    pub divergence: Option<DivergenceName>,
}

impl Default for IndexSettings {
    fn default() -> Self {
        Self {
            plugin_samples: DEFAULT_PLUGIN_SAMPLES,
            eta_bar_method: EtaBarMethod::Quadrature,
            unconditional_delta_samples: 0,
            divergence: None,
        }
    }
}

impl IndexSettings {
    pub fn validate(&self) -> Result<()> {
        if self.plugin_samples < 1 {
            return Err(invalid("indices.plugin_samples", "must be at least 1"));
        }
        if self.unconditional_delta_samples == 1 {
            return Err(invalid("indices.unconditional_delta_samples", "must be 0 or at least 2"));
        }
        Ok(())
    }
}

pub(crate) fn column(sample: &[Vec<f64>], i: usize) -> Vec<f64> {
    sample.iter().map(|x| x[i]).collect()
}

/// `(1/N′) Σ ½|ĉ(U^k) − 1|` over uniform points on the unit square.
pub fn estimate_delta_f<R: Rng + ?Sized>(copula: &MaxEntCopula, n_prime: usize, rng: &mut R) -> f64 {
    let mut sum = 0.0;
    for _ in 0..n_prime {
        let u: f64 = rng.random();
        let v: f64 = rng.random();
        sum += 0.5 * (copula.density(u, v) - 1.0).abs();
    }
    sum / n_prime as f64
}

/// ½‖f − f̂‖₁ by quadrature on the support of `f̂` plus the mass of `f`
/// outside it.
pub fn eta_bar_quadrature(density: &MaxEntDensity, marginal: &Marginal) -> f64 {
    let (lo, hi) = density.support;
    let inside = density
        .rule(ETA_BAR_PANELS)
        .integrate(|x| (marginal.pdf(x) - density.density(x)).abs());
    let outside = 1.0 - (marginal.cdf(hi) - marginal.cdf(lo));
    0.5 * (inside + outside.max(0.0))
}

fn ratios<R: Rng + ?Sized>(
    density: &MaxEntDensity,
    marginal: &Marginal,
    n_prime: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    (0..n_prime)
        .map(|_| {
            let x = marginal.sample(rng);
            let fx = marginal.pdf(x);
            if !(fx > 0.0) {
                return Err(Error::DensityUnderflow(format!("input density is 0 at {x}")));
            }
            Ok(density.density(x) / fx)
        })
        .collect()
}

/// `(1/N′) Σ ½|f̂(X^k)/f(X^k) − 1|`, `X^k ~ marginal`.
pub fn eta_bar_monte_carlo<R: Rng + ?Sized>(
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
        sum += 0.5 * (density.density(x) / fx - 1.0).abs();
    }
    Ok(sum / n_prime as f64)
}

pub fn estimate_eta(eta_bar: f64, p_f_hat: f64) -> f64 {
    2.0 * p_f_hat * eta_bar
}

/// `P̂/(1−P̂)` times the sample variance of `f̂(X^k)/f(X^k)`, `X^k ~ marginal`.
pub fn estimate_sobol_indicator<R: Rng + ?Sized>(
    density: &MaxEntDensity,
    marginal: &Marginal,
    p_f_hat: f64,
    n_prime: usize,
    rng: &mut R,
) -> Result<f64> {
    if !(0.0..1.0).contains(&p_f_hat) {
        return Err(invalid("p_f_hat", format!("{p_f_hat} outside [0, 1)")));
    }
    let r = ratios(density, marginal, n_prime, rng)?;
    let n = r.len() as f64;
    let mean = r.iter().sum::<f64>() / n;
    let mut var = r.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    if var < 0.0 {
        if var >= -NEGATIVE_VARIANCE_CLAMP {
            var = 0.0;
        } else {
            return Err(Error::NegativeVariance(var));
        }
    }
    Ok(p_f_hat / (1.0 - p_f_hat) * var)
}

/// Competition ranking: rank 1 is the largest value and ties share the
/// smaller rank.
pub fn rank_indices(values: &[f64]) -> Vec<usize> {
    values
        .iter()
        .map(|v| 1 + values.iter().filter(|w| *w > v).count())
        .collect()
}

/// Families reported per input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexFamily {
    DeltaF,
    EtaBar,
    Eta,
    SobolIndicator,
    Delta,
    GeneralizedEtaBar,
    GeneralizedDelta,
}

impl IndexFamily {
    pub fn name(self) -> &'static str {
        match self {
            IndexFamily::DeltaF => "delta_f",
            IndexFamily::EtaBar => "eta_bar",
            IndexFamily::Eta => "eta",
            IndexFamily::SobolIndicator => "sobol_indicator",
            IndexFamily::Delta => "delta",
            IndexFamily::GeneralizedEtaBar => "generalized_eta_bar",
            IndexFamily::GeneralizedDelta => "generalized_delta",
        }
    }
}

/// Index estimates of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEstimates {
    pub p_f_hat: f64,
    pub plugin_samples: usize,
    pub delta_f: Vec<f64>,
    pub eta_bar: Vec<f64>,
    pub eta: Vec<f64>,
    pub sobol_indicator: Vec<f64>,
    pub delta: Option<Vec<f64>>,
    pub generalized: Option<Vec<GeneralizedIndex>>,
    /// Estimates clipped into `[0, 1]`.
    pub flags: Vec<String>,
    pub densities: Vec<String>,
    pub copulas: Vec<String>,
}

impl IndexEstimates {
    /// Present families in report order with their values.
    pub fn families(&self) -> Vec<(IndexFamily, Vec<f64>)> {
        let mut out = vec![
            (IndexFamily::DeltaF, self.delta_f.clone()),
            (IndexFamily::EtaBar, self.eta_bar.clone()),
            (IndexFamily::Eta, self.eta.clone()),
            (IndexFamily::SobolIndicator, self.sobol_indicator.clone()),
        ];
        if let Some(d) = &self.delta {
            out.push((IndexFamily::Delta, d.clone()));
        }
        if let Some(g) = &self.generalized {
            out.push((IndexFamily::GeneralizedEtaBar, g.iter().map(|x| x.eta_bar).collect()));
            out.push((IndexFamily::GeneralizedDelta, g.iter().map(|x| x.delta).collect()));
        }
        out
    }
}

fn clip_unit(v: f64, what: &str, i: usize, flags: &mut Vec<String>) -> f64 {
    if v > 1.0 {
        flags.push(format!("{what}[{i}] = {v} clipped to 1"));
        1.0
    } else {
        v
    }
}

struct PerInput {
    delta_f: f64,
    eta_bar: f64,
    sobol: f64,
    delta: Option<f64>,
    density: String,
    copula: String,
}

/// Runs the max-entropy fits and all plug-in estimators.
///
/// `sample`/`outputs` are the failure-conditioned draws; `unconditional`,
/// when given, holds crude Monte Carlo draws and their outputs for `δ`.
#[allow(clippy::too_many_arguments)]
pub fn compute_indices(
    sample: &[Vec<f64>],
    outputs: &[f64],
    input: &InputModel,
    event: &FailureEvent,
    p_f_hat: f64,
    maxent: &MaxEntSettings,
    settings: &IndexSettings,
    seed: u64,
    unconditional: Option<(&[Vec<f64>], &[f64])>,
) -> Result<IndexEstimates> {
    settings.validate()?;
    maxent.validate()?;
    if sample.len() != outputs.len() {
        return Err(invalid("sample", "one output per sample row"));
    }
    let streams = StreamFactory::new(seed);
    let n_prime = settings.plugin_samples;
    let per_input: Vec<PerInput> = (0..input.dim())
        .into_par_iter()
        .map(|i| {
            let stream = |purpose| {
                streams.stream(StreamId::PlugIn {
                    input: i as u32,
                    purpose,
                })
            };
            let xi = column(sample, i);
            let marginal = input.marginal(i);
            let density = fit_density(&xi, &maxent.density_exponents)?;
            let copula = fit_copula(&xi, outputs, &maxent.copula_exponents)?;
            let delta_f = estimate_delta_f(&copula, n_prime, &mut stream(purpose::COPULA));
            let eta_bar = match settings.eta_bar_method {
                EtaBarMethod::Quadrature => eta_bar_quadrature(&density, marginal),
                EtaBarMethod::MonteCarlo => {
                    eta_bar_monte_carlo(&density, marginal, n_prime, &mut stream(purpose::MARGINAL))?
                }
            };
            let sobol = estimate_sobol_indicator(
                &density,
                marginal,
                p_f_hat,
                n_prime,
                &mut stream(purpose::SOBOL),
            )?;
            let delta = match unconditional {
                Some((xs, ys)) => {
                    let c = fit_copula(&column(xs, i), ys, &maxent.copula_exponents)?;
                    Some(estimate_delta_f(&c, n_prime, &mut stream(purpose::UNCONDITIONAL)))
                }
                None => None,
            };
            Ok(PerInput {
                delta_f,
                eta_bar,
                sobol,
                delta,
                density: density.to_record(),
                copula: copula.to_record(),
            })
        })
        .collect::<Result<_>>()?;

    let mut flags = Vec::new();
    let mut est = IndexEstimates {
        p_f_hat,
        plugin_samples: n_prime,
        delta_f: Vec::new(),
        eta_bar: Vec::new(),
        eta: Vec::new(),
        sobol_indicator: Vec::new(),
        delta: unconditional.map(|_| Vec::new()),
        generalized: None,
        flags: Vec::new(),
        densities: Vec::new(),
        copulas: Vec::new(),
    };
    for (i, r) in per_input.into_iter().enumerate() {
        est.delta_f.push(clip_unit(r.delta_f, "delta_f", i, &mut flags));
        let eta_bar = clip_unit(r.eta_bar, "eta_bar", i, &mut flags);
        est.eta_bar.push(eta_bar);
        est.eta.push(estimate_eta(eta_bar, p_f_hat));
        est.sobol_indicator.push(r.sobol);
        if let (Some(d), Some(v)) = (est.delta.as_mut(), r.delta) {
            d.push(clip_unit(v, "delta", i, &mut flags));
        }
        est.densities.push(r.density);
        est.copulas.push(r.copula);
    }
    if let Some(name) = settings.divergence {
        let weight = WeightFunction::IndicatorAbove(event.threshold);
        est.generalized = Some(estimate_generalized(
            &name.into(),
            &weight,
            sample,
            outputs,
            input,
            maxent,
            n_prime,
            seed,
        )?);
    }
    for f in &flags {
        log::warn!("{f}");
    }
    est.flags = flags;
    Ok(est)
}
