//! Benchmark models with their input laws and failure thresholds.

use std::fmt;
use std::str::FromStr;

use super::{BlackBox, FailureEvent, InputModel, Marginal};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BuiltinModel {
    /// `Y = X₁ + 1{X₁>3}·|X₂|`, `X₁ ~ N(0,1)`, `X₂ ~ N(0,5)`, failure `Y > 3`.
    Toy1,
    /// `Y = X₁ + X₂²`, i.i.d. standard normals, failure `Y > 15`.
    AdditiveChi2,
    /// Nonlinear single-degree-of-freedom oscillator, six lognormal inputs
    /// `(c₁, c₂, r, m, t, F)`, failure `Y > 0`.
    SdofOscillator,
}

impl BuiltinModel {
    pub const ALL: [BuiltinModel; 3] = [
        BuiltinModel::Toy1,
        BuiltinModel::AdditiveChi2,
        BuiltinModel::SdofOscillator,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BuiltinModel::Toy1 => "toy1",
            BuiltinModel::AdditiveChi2 => "additive_chi2",
            BuiltinModel::SdofOscillator => "sdof_oscillator",
        }
    }

    pub fn dim(self) -> usize {
        match self {
            BuiltinModel::Toy1 | BuiltinModel::AdditiveChi2 => 2,
            BuiltinModel::SdofOscillator => 6,
        }
    }

    pub fn input_names(self) -> Vec<&'static str> {
        match self {
            BuiltinModel::Toy1 | BuiltinModel::AdditiveChi2 => vec!["X1", "X2"],
            BuiltinModel::SdofOscillator => vec!["c1", "c2", "r", "m", "t", "F"],
        }
    }

    pub fn evaluate(self, x: &[f64]) -> f64 {
        match self {
            BuiltinModel::Toy1 => toy1(x),
            BuiltinModel::AdditiveChi2 => additive_chi2(x),
            BuiltinModel::SdofOscillator => sdof_oscillator(x),
        }
    }

    pub fn blackbox(self) -> BlackBox {
        BlackBox::from_fn(self.name(), self.dim(), move |x| self.evaluate(x))
    }

    pub fn input_model(self) -> InputModel {
        let marginals = match self {
            BuiltinModel::Toy1 => vec![
                Marginal::normal(0.0, 1.0),
                Marginal::normal(0.0, 5f64.sqrt()),
            ],
            BuiltinModel::AdditiveChi2 => {
                vec![Marginal::normal(0.0, 1.0), Marginal::normal(0.0, 1.0)]
            }
            // (mean, sd) of ln X for c1, c2, r, m, t, F
            BuiltinModel::SdofOscillator => [
                (2.0, 0.2),
                (0.2, 0.02),
                (0.6, 0.05),
                (1.0, 0.05),
                (1.0, 0.2),
                (1.0, 0.2),
            ]
            .iter()
            .map(|&(mu, s)| Marginal::lognormal(mu, s))
            .collect(),
        };
        let marginals = marginals
            .into_iter()
            .collect::<Result<Vec<_>>>()
            .expect("builtin parameters are valid");
        InputModel::independent(marginals).expect("builtin parameters are valid")
    }

    pub fn event(self) -> FailureEvent {
        let s = match self {
            BuiltinModel::Toy1 => 3.0,
            BuiltinModel::AdditiveChi2 => 15.0,
            BuiltinModel::SdofOscillator => 0.0,
        };
        FailureEvent::new(s).expect("finite threshold")
    }
}

impl fmt::Display for BuiltinModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BuiltinModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "toy1" => Ok(BuiltinModel::Toy1),
            "additive_chi2" => Ok(BuiltinModel::AdditiveChi2),
            "sdof_oscillator" | "sdof" => Ok(BuiltinModel::SdofOscillator),
            other => Err(Error::UnknownModel(other.to_string())),
        }
    }
}

/// Black box, input law and failure event of a named benchmark.
pub fn builtin_model(name: &str) -> Result<(BlackBox, InputModel, FailureEvent)> {
    let m: BuiltinModel = name.parse()?;
    Ok((m.blackbox(), m.input_model(), m.event()))
}

pub fn toy1(x: &[f64]) -> f64 {
    if x[0] > 3.0 {
        x[0] + x[1].abs()
    } else {
        x[0]
    }
}

pub fn additive_chi2(x: &[f64]) -> f64 {
    x[0] + x[1] * x[1]
}

/// Peak displacement of the oscillator minus `3r`.
pub fn sdof_oscillator(x: &[f64]) -> f64 {
    let (c1, c2, r, m, t, f) = (x[0], x[1], x[2], x[3], x[4], x[5]);
    let k = c1 + c2;
    let omega = (k / m).sqrt();
    -3.0 * r + (2.0 * f / k * (omega * t / 2.0).sin()).abs()
}
