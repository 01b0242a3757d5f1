use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::erf;

use crate::error::{invalid, Result};

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Standard normal density.
pub fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z - LN_SQRT_2PI).exp()
}

/// Standard normal CDF.
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erf::erfc(-z / SQRT_2)
}

/// Upper tail `1 - Φ(z)` without cancellation.
pub fn std_normal_sf(z: f64) -> f64 {
    0.5 * erf::erfc(z / SQRT_2)
}

pub fn std_normal_quantile(u: f64) -> f64 {
    -SQRT_2 * erf::erfc_inv(2.0 * u)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginalKind {
    Normal,
    /// `location`/`scale` are the mean and standard deviation of `ln X`.
    Lognormal,
    /// Uniform on `[location, location + scale]`.
    Uniform,
}

/// A univariate input law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Marginal {
    pub kind: MarginalKind,
    pub location: f64,
    pub scale: f64,
}

impl Marginal {
    pub fn new(kind: MarginalKind, location: f64, scale: f64) -> Result<Self> {
        let m = Marginal {
            kind,
            location,
            scale,
        };
        m.validate("marginal")?;
        Ok(m)
    }

    pub fn normal(mean: f64, sd: f64) -> Result<Self> {
        Self::new(MarginalKind::Normal, mean, sd)
    }

    pub fn lognormal(log_mean: f64, log_sd: f64) -> Result<Self> {
        Self::new(MarginalKind::Lognormal, log_mean, log_sd)
    }

    pub fn uniform(lower: f64, width: f64) -> Result<Self> {
        Self::new(MarginalKind::Uniform, lower, width)
    }

    pub(crate) fn validate(&self, field: &str) -> Result<()> {
        if !self.location.is_finite() {
            return Err(invalid(format!("{field}.location"), "must be finite"));
        }
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(invalid(format!("{field}.scale"), "must be finite and > 0"));
        }
        Ok(())
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match self.kind {
            MarginalKind::Normal => std_normal_pdf((x - self.location) / self.scale) / self.scale,
            MarginalKind::Lognormal => {
                if x <= 0.0 {
                    0.0
                } else {
                    let z = (x.ln() - self.location) / self.scale;
                    std_normal_pdf(z) / (x * self.scale)
                }
            }
            MarginalKind::Uniform => {
                if x >= self.location && x <= self.location + self.scale {
                    1.0 / self.scale
                } else {
                    0.0
                }
            }
        }
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        match self.kind {
            MarginalKind::Normal => {
                let z = (x - self.location) / self.scale;
                -0.5 * z * z - LN_SQRT_2PI - self.scale.ln()
            }
            MarginalKind::Lognormal => {
                if x <= 0.0 {
                    f64::NEG_INFINITY
                } else {
                    let lx = x.ln();
                    let z = (lx - self.location) / self.scale;
                    -0.5 * z * z - LN_SQRT_2PI - self.scale.ln() - lx
                }
            }
            MarginalKind::Uniform => self.pdf(x).ln(),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match self.kind {
            MarginalKind::Normal => std_normal_cdf((x - self.location) / self.scale),
            MarginalKind::Lognormal => {
                if x <= 0.0 {
                    0.0
                } else {
                    std_normal_cdf((x.ln() - self.location) / self.scale)
                }
            }
            MarginalKind::Uniform => ((x - self.location) / self.scale).clamp(0.0, 1.0),
        }
    }

    pub fn quantile(&self, u: f64) -> f64 {
        match self.kind {
            MarginalKind::Normal => self.location + self.scale * std_normal_quantile(u),
            MarginalKind::Lognormal => {
                (self.location + self.scale * std_normal_quantile(u)).exp()
            }
            MarginalKind::Uniform => self.location + self.scale * u.clamp(0.0, 1.0),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.kind {
            MarginalKind::Normal => {
                let z: f64 = rng.sample(StandardNormal);
                self.location + self.scale * z
            }
            MarginalKind::Lognormal => {
                let z: f64 = rng.sample(StandardNormal);
                (self.location + self.scale * z).exp()
            }
            MarginalKind::Uniform => self.location + self.scale * rng.random::<f64>(),
        }
    }

    pub fn mean(&self) -> f64 {
        match self.kind {
            MarginalKind::Normal => self.location,
            MarginalKind::Lognormal => (self.location + 0.5 * self.scale * self.scale).exp(),
            MarginalKind::Uniform => self.location + 0.5 * self.scale,
        }
    }

    pub fn sd(&self) -> f64 {
        match self.kind {
            MarginalKind::Normal => self.scale,
            MarginalKind::Lognormal => {
                let s2 = self.scale * self.scale;
                self.mean() * s2.exp_m1().sqrt()
            }
            MarginalKind::Uniform => self.scale / 12f64.sqrt(),
        }
    }

    /// Closed support `[lo, hi]` (infinite ends allowed).
    pub fn support(&self) -> (f64, f64) {
        match self.kind {
            MarginalKind::Normal => (f64::NEG_INFINITY, f64::INFINITY),
            MarginalKind::Lognormal => (0.0, f64::INFINITY),
            MarginalKind::Uniform => (self.location, self.location + self.scale),
        }
    }

    pub fn is_normal(&self) -> bool {
        self.kind == MarginalKind::Normal
    }
}
