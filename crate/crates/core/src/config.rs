//! Campaign configuration documents (TOML).
//!
//! ```toml
//! seed = 1
//! replications = 100
//!
//! [model]
//! builtin = "toy1"                 # or: command = ["./model", "--flag"]
//!
//! [inputs]                         # required for command models
//! marginals = [
//!   { kind = "normal", location = 0.0, scale = 1.0 },
//!   { kind = "lognormal", location = 0.2, scale = 0.02 },
//! ]
//! covariance = [[1.0, 0.5], [0.5, 2.0]]   # optional, normal marginals only
//!
//! [event]
//! threshold = 3.0
//!
//! [smc]
//! particles = 500
//! rho = 0.3935
//! mutation_steps = 3
//! sampling_steps = 5
//! sample_size = 3000
//! max_levels = 100                 # optional
//! kernel = { kind = "crank_nicolson", a = 0.5 }
//! # kernel = { kind = "gaussian_random_walk" }   step_sds default to input sds
//!
//! [maxent]                         # optional
//! density_exponents = [0.5, 1.0, 1.5]
//! copula_exponents = [0.5, 1.0, 1.5]
//!
//! [indices]                        # optional
//! plugin_samples = 100000
//! eta_bar_method = "quadrature"    # or "monte_carlo"
//! unconditional_delta_samples = 0
//! divergence = "kullback_leibler"  # optional extra generalized indices
//!
//! [output]                         # optional
//! dir = "out/toy1"
//! ```

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::indices::IndexSettings;
use crate::maxent::MaxEntSettings;
use crate::model::{
    external_blackbox, BlackBox, BuiltinModel, FailureEvent, InputModel, Marginal, ProcessSpec,
};
use crate::smc::{KernelSpec, SmcParams, DEFAULT_MAX_LEVELS};

pub const DEFAULT_REPLICATIONS: usize = 100;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    seed: Option<u64>,
    replications: Option<usize>,
    model: Option<RawModel>,
    inputs: Option<RawInputs>,
    event: Option<RawEvent>,
    smc: Option<RawSmc>,
    #[serde(default)]
    maxent: MaxEntSettings,
    #[serde(default)]
    indices: IndexSettings,
    output: Option<RawOutput>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    builtin: Option<String>,
    command: Option<Vec<String>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInputs {
    marginals: Vec<Marginal>,
    covariance: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEvent {
    threshold: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSmc {
    particles: Option<usize>,
    rho: Option<f64>,
    mutation_steps: Option<usize>,
    sampling_steps: Option<usize>,
    sample_size: Option<usize>,
    max_levels: Option<usize>,
    kernel: Option<RawKernel>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum RawKernel {
    CrankNicolson { a: f64 },
    GaussianRandomWalk { step_sds: Option<Vec<f64>> },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    Builtin(BuiltinModel),
    Command(ProcessSpec),
}

impl ModelSpec {
    pub fn name(&self) -> String {
        match self {
            ModelSpec::Builtin(m) => m.name().to_string(),
            ModelSpec::Command(p) => format!("command:{}", p.program),
        }
    }

    pub fn is_external(&self) -> bool {
        matches!(self, ModelSpec::Command(_))
    }

    /// Instantiates the black box; external models spawn their process here.
    pub fn instantiate(&self, dim: usize) -> Result<BlackBox> {
        match self {
            ModelSpec::Builtin(m) => Ok(m.blackbox()),
            ModelSpec::Command(p) => Ok(external_blackbox(p, dim)?),
        }
    }
}

/// A validated campaign.
#[derive(Debug, Clone)]
pub struct CampaignConfig {
    pub seed: u64,
    pub replications: usize,
    pub model: ModelSpec,
    pub inputs: InputModel,
    pub input_names: Vec<String>,
    /// True when a builtin model runs on its own input law.
    pub default_inputs: bool,
    pub event: FailureEvent,
    /// `seed` is overwritten per replication.
    pub smc: SmcParams,
    pub maxent: MaxEntSettings,
    pub indices: IndexSettings,
    pub output_dir: Option<PathBuf>,
    /// The document as read, echoed into reports.
    pub source: String,
}

fn build_inputs(raw: &RawInputs, problems: &mut Vec<String>) -> Option<InputModel> {
    let mut ok = true;
    for (i, m) in raw.marginals.iter().enumerate() {
        if let Err(e) = m.validate(&format!("inputs.marginals[{i}]")) {
            problems.push(e.to_string());
            ok = false;
        }
    }
    if raw.marginals.is_empty() {
        problems.push("inputs.marginals: at least one input is required".into());
        ok = false;
    }
    if !ok {
        return None;
    }
    match &raw.covariance {
        None => match InputModel::independent(raw.marginals.clone()) {
            Ok(m) => Some(m),
            Err(e) => {
                problems.push(e.to_string());
                None
            }
        },
        Some(rows) => {
            let d = raw.marginals.len();
            if rows.len() != d || rows.iter().any(|r| r.len() != d) {
                problems.push(format!("inputs.covariance: must be {d}×{d}"));
                return None;
            }
            if raw.marginals.iter().any(|m| !m.is_normal()) {
                problems.push("inputs.covariance: dependent inputs must have normal marginals".into());
                return None;
            }
            let cov = DMatrix::from_fn(d, d, |i, j| rows[i][j]);
            let sd_mismatch = raw
                .marginals
                .iter()
                .enumerate()
                .any(|(i, m)| (cov[(i, i)].sqrt() - m.scale).abs() > 1e-9 * m.scale);
            if sd_mismatch {
                problems.push(
                    "inputs.covariance: diagonal must equal the squared marginal scales".into(),
                );
                return None;
            }
            let mean = raw.marginals.iter().map(|m| m.location).collect();
            match InputModel::gaussian(mean, cov) {
                Ok(m) => Some(m),
                Err(e) => {
                    problems.push(e.to_string());
                    None
                }
            }
        }
    }
}

fn require<T: Copy>(v: Option<T>, field: &str, problems: &mut Vec<String>) -> Option<T> {
    if v.is_none() {
        problems.push(format!("{field} required"));
    }
    v
}

/// Parses and validates a configuration document. All problems found are
/// reported together, one per line, in an [`Error::Config`].
pub fn parse_config(text: &str) -> Result<CampaignConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    let mut problems = Vec::new();

    let seed = raw.seed.unwrap_or(0);
    let replications = raw.replications.unwrap_or(DEFAULT_REPLICATIONS);
    if replications < 1 {
        problems.push("replications: must be at least 1".into());
    }

    let model = match raw.model {
        None => {
            problems.push("model required".into());
            None
        }
        Some(RawModel {
            builtin: Some(_),
            command: Some(_),
        }) => {
            problems.push("model: give either `builtin` or `command`, not both".into());
            None
        }
        Some(RawModel {
            builtin: Some(name),
            ..
        }) => match name.parse::<BuiltinModel>() {
            Ok(m) => Some(ModelSpec::Builtin(m)),
            Err(e) => {
                problems.push(format!("model.builtin: {e}"));
                None
            }
        },
        Some(RawModel {
            command: Some(cmd),
            ..
        }) => match cmd.split_first() {
            Some((program, args)) => Some(ModelSpec::Command(ProcessSpec {
                program: program.clone(),
                args: args.to_vec(),
            })),
            None => {
                problems.push("model.command: must name a program".into());
                None
            }
        },
        Some(_) => {
            problems.push("model: `builtin` or `command` required".into());
            None
        }
    };

    let inputs = match (&raw.inputs, &model) {
        (Some(r), _) => build_inputs(r, &mut problems),
        (None, Some(ModelSpec::Builtin(m))) => Some(m.input_model()),
        (None, Some(ModelSpec::Command(_))) => {
            problems.push("inputs required for command models".into());
            None
        }
        (None, None) => None,
    };
    if let (Some(ModelSpec::Builtin(m)), Some(inp)) = (&model, &inputs) {
        if inp.dim() != m.dim() {
            problems.push(format!(
                "inputs.marginals: model `{}` takes {} inputs, got {}",
                m.name(),
                m.dim(),
                inp.dim()
            ));
        }
    }
    let input_names = match (&model, &inputs) {
        (Some(ModelSpec::Builtin(m)), _) => m.input_names().iter().map(|s| s.to_string()).collect(),
        (_, Some(inp)) => (1..=inp.dim()).map(|i| format!("X{i}")).collect(),
        _ => Vec::new(),
    };

    let threshold = raw.event.as_ref().and_then(|e| e.threshold);
    let event = match require(threshold, "event.threshold", &mut problems) {
        Some(s) => match FailureEvent::new(s) {
            Ok(e) => Some(e),
            Err(e) => {
                problems.push(e.to_string());
                None
            }
        },
        None => None,
    };

    let smc = match raw.smc {
        None => {
            problems.push("smc required".into());
            None
        }
        Some(s) => {
            let particles = require(s.particles, "smc.particles", &mut problems);
            let rho = require(s.rho, "smc.rho", &mut problems);
            let mutation_steps = require(s.mutation_steps, "smc.mutation_steps", &mut problems);
            let sampling_steps = require(s.sampling_steps, "smc.sampling_steps", &mut problems);
            let sample_size = require(s.sample_size, "smc.sample_size", &mut problems);
            let kernel = match (s.kernel, &inputs) {
                (Some(RawKernel::CrankNicolson { a }), _) => Some(KernelSpec::CrankNicolson { a }),
                (Some(RawKernel::GaussianRandomWalk { step_sds: Some(sds) }), _) => {
                    Some(KernelSpec::GaussianRandomWalk { step_sds: sds })
                }
                (Some(RawKernel::GaussianRandomWalk { step_sds: None }), Some(inp)) => {
                    Some(KernelSpec::random_walk_matching(inp))
                }
                (None, Some(inp)) if inp.is_gaussian() => Some(KernelSpec::CrankNicolson { a: 0.5 }),
                (None, Some(inp)) => Some(KernelSpec::random_walk_matching(inp)),
                (_, None) => None,
            };
            match (particles, rho, mutation_steps, sampling_steps, sample_size, kernel) {
                (Some(particles), Some(rho), Some(mutation_steps), Some(sampling_steps), Some(sample_size), Some(kernel)) => {
                    let params = SmcParams {
                        particles,
                        rho,
                        mutation_steps,
                        sampling_steps,
                        sample_size,
                        kernel,
                        max_levels: s.max_levels.unwrap_or(DEFAULT_MAX_LEVELS),
                        seed,
                    };
                    if let Err(e) = params.validate() {
                        problems.push(e.to_string());
                    }
                    if let Some(inp) = &inputs {
                        if let Err(e) = params.kernel.validate(inp) {
                            problems.push(e.to_string());
                        }
                    }
                    Some(params)
                }
                _ => None,
            }
        }
    };

    if let Err(e) = raw.maxent.validate() {
        problems.push(e.to_string());
    }
    if let Err(e) = raw.indices.validate() {
        problems.push(e.to_string());
    }

    if !problems.is_empty() {
        return Err(Error::Config(problems.join("\n")));
    }
    Ok(CampaignConfig {
        seed,
        replications,
        model: model.expect("checked"),
        inputs: inputs.expect("checked"),
        input_names,
        default_inputs: raw.inputs.is_none(),
        event: event.expect("checked"),
        smc: smc.expect("checked"),
        maxent: raw.maxent,
        indices: raw.indices,
        output_dir: raw.output.and_then(|o| o.dir),
        source: text.to_string(),
    })
}

pub fn load_config(path: &Path) -> Result<CampaignConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}
