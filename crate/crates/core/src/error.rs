use thiserror::Error;

/// Failures raised while evaluating a black-box model.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("non-finite output {value} at input {input:?}")]
    NonFinite { value: f64, input: Vec<f64> },
    #[error("input has dimension {got}, model expects {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("external process failure: {0}")]
    Process(String),
    #[error("protocol violation: expected one float, got line {line:?}")]
    Protocol { line: String },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },
    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error("model evaluation failed: {0}")]
    Model(#[from] ModelError),
    #[error("level stagnation at level {level}: {detail}")]
    Stagnation { level: usize, detail: String },
    #[error("zero acceptance during {phase} at level {level} ({proposals} proposals)")]
    ZeroAcceptance {
        phase: &'static str,
        level: usize,
        proposals: usize,
    },
    #[error("no particles above the threshold to seed the final sampling")]
    EmptySurvivors,
    #[error("maximum-entropy constraints are infeasible: {0}")]
    Infeasible(String),
    #[error("quadrature did not converge: {0}")]
    Quadrature(String),
    #[error("density underflow: {0}")]
    DensityUnderflow(String),
    #[error("degenerate sample: {0}")]
    DegenerateSample(String),
    #[error("negative variance {0:e} in indicator Sobol estimator")]
    NegativeVariance(f64),
    #[error("rejection budget exhausted: accepted {accepted} of {target} after {budget} draws")]
    BudgetExhausted {
        accepted: usize,
        target: usize,
        budget: u64,
    },
    #[error("no theoretical references for `{0}`")]
    NoReferences(String),
    #[error("replication {index} (seed {seed}) failed: {source}")]
    Replication {
        index: usize,
        seed: u64,
        source: Box<Error>,
    },
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        field: field.into(),
        reason: reason.into(),
    }
}
