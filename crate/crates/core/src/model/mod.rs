//! Input laws, black-box models and failure events.

mod blackbox;
mod builtin;
mod input;
mod marginal;

pub use blackbox::{external_blackbox, BlackBox, Evaluator, ProcessSpec};
pub use builtin::{additive_chi2, builtin_model, sdof_oscillator, toy1, BuiltinModel};
pub use input::{sample_input, Dependence, InputModel};
pub use marginal::{
    std_normal_cdf, std_normal_pdf, std_normal_quantile, std_normal_sf, Marginal, MarginalKind,
};

use crate::error::{invalid, Result};

/// Failure event `{Y > S}`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FailureEvent {
    pub threshold: f64,
}

impl FailureEvent {
    pub fn new(threshold: f64) -> Result<Self> {
        if !threshold.is_finite() {
            return Err(invalid("event.threshold", "must be finite"));
        }
        Ok(Self { threshold })
    }

    pub fn is_failure(&self, y: f64) -> bool {
        y > self.threshold
    }
}
