use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::model::{BlackBox, InputModel};

/// Proposal used by the Metropolis–Hastings moves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelSpec {
    /// `x' = ν + √(1−a)(x−ν) + √a·L·Z`, reversible for the Gaussian input law.
    CrankNicolson { a: f64 },
    /// `x' = x + s ⊙ Z`.
    GaussianRandomWalk { step_sds: Vec<f64> },
}

impl KernelSpec {
    /// Random walk whose step in each coordinate is that input's standard deviation.
    pub fn random_walk_matching(input: &InputModel) -> Self {
        KernelSpec::GaussianRandomWalk {
            step_sds: input.sds(),
        }
    }

    pub fn validate(&self, input: &InputModel) -> Result<()> {
        match self {
            KernelSpec::CrankNicolson { a } => {
                if !(*a > 0.0 && *a < 1.0) {
                    return Err(invalid("smc.kernel.a", "must lie in (0, 1)"));
                }
                if !input.is_gaussian() {
                    return Err(invalid("smc.kernel", "kernel requires gaussian inputs"));
                }
            }
            KernelSpec::GaussianRandomWalk { step_sds } => {
                if step_sds.len() != input.dim() {
                    return Err(invalid(
                        "smc.kernel.step_sds",
                        format!("expected {} entries, got {}", input.dim(), step_sds.len()),
                    ));
                }
                if step_sds.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
                    return Err(invalid("smc.kernel.step_sds", "must be finite and > 0"));
                }
            }
        }
        Ok(())
    }
}

/// A kernel bound to an input law.
#[derive(Debug, Clone)]
pub enum Kernel {
    CrankNicolson {
        mean: DVector<f64>,
        chol: DMatrix<f64>,
        keep: f64,
        noise: f64,
    },
    RandomWalk {
        steps: Vec<f64>,
    },
}

impl Kernel {
    pub fn new(spec: &KernelSpec, input: &InputModel) -> Result<Self> {
        spec.validate(input)?;
        Ok(match spec {
            KernelSpec::CrankNicolson { a } => {
                let (mean, chol) = input.gaussian_factor().expect("validated gaussian");
                Kernel::CrankNicolson {
                    mean,
                    chol,
                    keep: (1.0 - a).sqrt(),
                    noise: a.sqrt(),
                }
            }
            KernelSpec::GaussianRandomWalk { step_sds } => Kernel::RandomWalk {
                steps: step_sds.clone(),
            },
        })
    }

    fn propose<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Vec<f64> {
        let d = x.len();
        match self {
            Kernel::CrankNicolson {
                mean,
                chol,
                keep,
                noise,
            } => {
                let z = DVector::from_iterator(d, (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
                let lz = chol * z;
                (0..d)
                    .map(|i| mean[i] + keep * (x[i] - mean[i]) + noise * lz[i])
                    .collect()
            }
            Kernel::RandomWalk { steps } => x
                .iter()
                .zip(steps)
                .map(|(xi, s)| xi + s * rng.sample::<f64, _>(StandardNormal))
                .collect(),
        }
    }
}

/// Result of one Metropolis–Hastings transition.
#[derive(Debug, Clone)]
pub struct MhOutcome {
    pub x: Vec<f64>,
    pub y: f64,
    pub accepted: bool,
    /// False when the candidate fell outside the input support and the
    /// black box was not called.
    pub evaluated: bool,
}

/// One MH transition targeting the input law restricted to `{M > level}`.
///
/// The candidate is always evaluated (one black-box call) unless it has
/// zero input density. For the Crank–Nicolson proposal the acceptance
/// probability is the indicator `1{M(x') > level}`; for the random walk it
/// is `min(1, f(x')/f(x))·1{M(x') > level}`.
pub fn mh_step<R: Rng + ?Sized>(
    x: &[f64],
    y: f64,
    level: f64,
    model: &BlackBox,
    input: &InputModel,
    kernel: &Kernel,
    rng: &mut R,
) -> Result<MhOutcome> {
    let candidate = kernel.propose(x, rng);
    let log_ratio = match kernel {
        Kernel::CrankNicolson { .. } => 0.0,
        Kernel::RandomWalk { .. } => input.ln_density(&candidate) - input.ln_density(x),
    };
    // drawn unconditionally so stream consumption does not depend on outcomes
    let u: f64 = rng.random();
    if log_ratio == f64::NEG_INFINITY || log_ratio.is_nan() {
        return Ok(MhOutcome {
            x: x.to_vec(),
            y,
            accepted: false,
            evaluated: false,
        });
    }
    let y_new = model.evaluate(&candidate)?;
    let accept = y_new > level && (log_ratio >= 0.0 || u.ln() < log_ratio);
    Ok(if accept {
        MhOutcome {
            x: candidate,
            y: y_new,
            accepted: true,
            evaluated: true,
        }
    } else {
        MhOutcome {
            x: x.to_vec(),
            y,
            accepted: false,
            evaluated: true,
        }
    })
}

/// Runs `steps` transitions from `(x, y)`; returns the endpoint and counts.
pub(crate) fn run_chain<R: Rng + ?Sized>(
    mut x: Vec<f64>,
    mut y: f64,
    steps: usize,
    level: f64,
    model: &BlackBox,
    input: &InputModel,
    kernel: &Kernel,
    rng: &mut R,
) -> Result<ChainEnd> {
    let mut accepted = 0;
    let mut skipped = 0;
    for _ in 0..steps {
        let out = mh_step(&x, y, level, model, input, kernel, rng)?;
        accepted += out.accepted as usize;
        skipped += (!out.evaluated) as usize;
        x = out.x;
        y = out.y;
    }
    Ok(ChainEnd {
        x,
        y,
        accepted,
        skipped,
    })
}

pub(crate) struct ChainEnd {
    pub x: Vec<f64>,
    pub y: f64,
    pub accepted: usize,
    pub skipped: usize,
}
