//! Adaptive sequential Monte Carlo (subset simulation) for `P(Y > S)` and
//! for sampling the failure-conditioned input law.
//!
//! Each level keeps the particles strictly above the `ρ`-quantile `γ_p` of
//! the current outputs, resamples them uniformly with replacement back to
//! `N_x` particles and moves each one with `A_x` Metropolis–Hastings steps
//! targeting `X | M(X) > γ_p`. The loop stops at the first level whose
//! quantile exceeds `S`. A final phase duplicates the particles above `S`
//! into `N` chains of `A` steps targeting `X | M(X) > S`.
//!
//! Calls to the black box: `N_x·(1 + m·A_x)` for the probability phase and
//! `N·A` for the sampling phase.

mod kernel;

pub use kernel::{mh_step, Kernel, KernelSpec, MhOutcome};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{BlackBox, FailureEvent, InputModel};
use crate::rng::{StreamFactory, StreamId};
use kernel::{run_chain, ChainEnd};

pub const DEFAULT_MAX_LEVELS: usize = 100;

/// Acceptance rates outside this band trigger a warning.
pub const ACCEPTANCE_BAND: (f64, f64) = (0.15, 0.40);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmcParams {
    /// `N_x`
    pub particles: usize,
    /// Quantile level `ρ`; a fraction `1 − ρ` of the particles survives each level.
    pub rho: f64,
    /// `A_x`
    pub mutation_steps: usize,
    /// `A`
    pub sampling_steps: usize,
    /// `N`
    pub sample_size: usize,
    pub kernel: KernelSpec,
    pub max_levels: usize,
    pub seed: u64,
}

impl SmcParams {
    pub fn validate(&self) -> Result<()> {
        if self.particles < 2 {
            return Err(invalid("smc.particles", "must be at least 2"));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(invalid("smc.rho", format!("must lie in (0, 1), got {}", self.rho)));
        }
        if self.survivor_target() < 1 {
            return Err(invalid(
                "smc.rho",
                "(1 − rho)·particles must keep at least one particle",
            ));
        }
        if self.mutation_steps < 1 {
            return Err(invalid("smc.mutation_steps", "must be at least 1"));
        }
        if self.sample_size < 1 {
            return Err(invalid("smc.sample_size", "must be at least 1"));
        }
        if self.max_levels < 1 {
            return Err(invalid("smc.max_levels", "must be at least 1"));
        }
        Ok(())
    }

    /// 1-based ascending rank of the order statistic used as `γ_p`.
    pub fn quantile_rank(&self) -> usize {
        ((self.rho * self.particles as f64).ceil() as usize).clamp(1, self.particles)
    }

    /// Number of survivors per level when outputs have no ties.
    pub fn survivor_target(&self) -> usize {
        self.particles - self.quantile_rank()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmcResult {
    /// `N` rows approximately i.i.d. from `X | Y > S`.
    pub conditioned_sample: Vec<Vec<f64>>,
    pub conditioned_outputs: Vec<f64>,
    pub p_f_hat: f64,
    /// `γ_0, …, γ_m`; the last entry exceeds `S`.
    pub levels: Vec<f64>,
    /// Number of mutation phases.
    pub m: usize,
    pub survivor_counts: Vec<usize>,
    /// Fraction of the last-level particles above `S`.
    pub final_fraction: f64,
    pub calls_total: u64,
    pub calls_probability_phase: u64,
    pub calls_sampling_phase: u64,
    /// Candidates outside the input support, rejected without a model call.
    pub skipped_candidates: u64,
    /// Per mutation level.
    pub acceptance_rates: Vec<f64>,
    pub final_acceptance_rate: Option<f64>,
    pub warnings: Vec<String>,
}

impl SmcResult {
    /// `N_x·(1 + m·A_x) + N·A`, the call count when no candidate was skipped.
    pub fn nominal_calls(&self, params: &SmcParams) -> u64 {
        (params.particles * (1 + self.m * params.mutation_steps)
            + params.sample_size * params.sampling_steps) as u64
    }
}

fn evaluate_all(model: &BlackBox, xs: &[Vec<f64>]) -> Result<Vec<f64>> {
    if model.is_thread_safe() {
        xs.par_iter()
            .map(|x| model.evaluate(x).map_err(Error::from))
            .collect()
    } else {
        xs.iter()
            .map(|x| model.evaluate(x).map_err(Error::from))
            .collect()
    }
}

#[allow(clippy::too_many_arguments)]
fn move_all(
    xs: Vec<Vec<f64>>,
    ys: Vec<f64>,
    steps: usize,
    level: f64,
    model: &BlackBox,
    input: &InputModel,
    kernel: &Kernel,
    stream: impl Fn(usize) -> StreamId + Sync,
    streams: &StreamFactory,
) -> Result<Vec<ChainEnd>> {
    let work = |(k, (x, y)): (usize, (Vec<f64>, f64))| {
        let mut rng = streams.stream(stream(k));
        run_chain(x, y, steps, level, model, input, kernel, &mut rng)
    };
    let items: Vec<_> = xs.into_iter().zip(ys).enumerate().collect();
    if model.is_thread_safe() {
        items.into_par_iter().map(work).collect()
    } else {
        items.into_iter().map(work).collect()
    }
}

fn duplicate<R: Rng + ?Sized>(pool: &[usize], n: usize, rng: &mut R) -> Vec<usize> {
    (0..n).map(|_| pool[rng.random_range(0..pool.len())]).collect()
}

fn check_acceptance(rate: f64, what: &str, warnings: &mut Vec<String>) {
    if rate < ACCEPTANCE_BAND.0 || rate > ACCEPTANCE_BAND.1 {
        let msg = format!(
            "{what}: acceptance rate {rate:.3} outside [{}, {}]",
            ACCEPTANCE_BAND.0, ACCEPTANCE_BAND.1
        );
        log::info!("{msg}");
        warnings.push(msg);
    }
}

/// Duplicates `pool` into `sample_size` particles and runs an
/// `sampling_steps`-step chain from each one, targeting `X | M(X) > S`.
///
/// Returns the sample, its outputs, and `(accepted, skipped)` counts.
#[allow(clippy::too_many_arguments)]
pub fn final_sampling(
    pool_x: &[Vec<f64>],
    pool_y: &[f64],
    model: &BlackBox,
    input: &InputModel,
    event: &FailureEvent,
    sampling_steps: usize,
    sample_size: usize,
    kernel: &Kernel,
    streams: &StreamFactory,
) -> Result<(Vec<Vec<f64>>, Vec<f64>, usize, usize)> {
    let above: Vec<usize> = (0..pool_y.len())
        .filter(|&k| event.is_failure(pool_y[k]))
        .collect();
    if above.is_empty() {
        return Err(Error::EmptySurvivors);
    }
    let mut rng = streams.stream(StreamId::FinalDuplication);
    let picks = duplicate(&above, sample_size, &mut rng);
    let xs: Vec<Vec<f64>> = picks.iter().map(|&k| pool_x[k].clone()).collect();
    let ys: Vec<f64> = picks.iter().map(|&k| pool_y[k]).collect();
    if sampling_steps == 0 {
        return Ok((xs, ys, 0, 0));
    }
    let ends = move_all(
        xs,
        ys,
        sampling_steps,
        event.threshold,
        model,
        input,
        kernel,
        |k| StreamId::FinalChain {
            particle: k as u32,
        },
        streams,
    )?;
    let accepted = ends.iter().map(|e| e.accepted).sum();
    let skipped = ends.iter().map(|e| e.skipped).sum();
    let (xs, ys) = ends.into_iter().map(|e| (e.x, e.y)).unzip();
    Ok((xs, ys, accepted, skipped))
}

/// Runs the adaptive SMC sampler followed by the final sampling phase.
pub fn run_adaptive_smc(
    model: &BlackBox,
    input: &InputModel,
    event: &FailureEvent,
    params: &SmcParams,
) -> Result<SmcResult> {
    params.validate()?;
    if model.dim() != input.dim() {
        return Err(invalid(
            "inputs",
            format!("model expects {} inputs, input law has {}", model.dim(), input.dim()),
        ));
    }
    let kernel = Kernel::new(&params.kernel, input)?;
    let streams = StreamFactory::new(params.seed);
    let n = params.particles;
    let rank = params.quantile_rank();
    let start_calls = model.calls();
    let mut warnings = Vec::new();

    let mut rng = streams.stream(StreamId::Initial);
    let mut xs: Vec<Vec<f64>> = (0..n).map(|_| input.sample_one(&mut rng)).collect();
    let mut ys = evaluate_all(model, &xs)?;

    let mut levels: Vec<f64> = Vec::new();
    let mut survivor_counts = Vec::new();
    let mut acceptance_rates = Vec::new();
    let mut skipped_total = 0u64;
    let mut p_f_hat = 1.0;
    let mut p = 0usize;
    loop {
        let mut sorted = ys.clone();
        sorted.sort_by(f64::total_cmp);
        let gamma = sorted[rank - 1];
        if let Some(&prev) = levels.last() {
            if gamma <= prev {
                return Err(Error::Stagnation {
                    level: p,
                    detail: format!("quantile {gamma} did not increase past {prev}"),
                });
            }
        }
        levels.push(gamma);
        if gamma > event.threshold {
            break;
        }
        if p >= params.max_levels {
            return Err(Error::Stagnation {
                level: p,
                detail: format!(
                    "reached max_levels = {} with quantile {gamma} ≤ threshold {}",
                    params.max_levels, event.threshold
                ),
            });
        }
        let survivors: Vec<usize> = (0..n).filter(|&k| ys[k] > gamma).collect();
        if survivors.is_empty() {
            return Err(Error::Stagnation {
                level: p,
                detail: format!("no particle strictly above quantile {gamma} (tied outputs)"),
            });
        }
        survivor_counts.push(survivors.len());
        p_f_hat *= survivors.len() as f64 / n as f64;

        let mut rng = streams.stream(StreamId::Duplication { level: p as u32 });
        let picks = duplicate(&survivors, n, &mut rng);
        let dup_x: Vec<Vec<f64>> = picks.iter().map(|&k| xs[k].clone()).collect();
        let dup_y: Vec<f64> = picks.iter().map(|&k| ys[k]).collect();
        let level = p as u32;
        let ends = move_all(
            dup_x,
            dup_y,
            params.mutation_steps,
            gamma,
            model,
            input,
            &kernel,
            |k| StreamId::Mutation {
                level,
                particle: k as u32,
            },
            &streams,
        )?;
        let accepted: usize = ends.iter().map(|e| e.accepted).sum();
        skipped_total += ends.iter().map(|e| e.skipped as u64).sum::<u64>();
        let proposals = n * params.mutation_steps;
        if accepted == 0 {
            return Err(Error::ZeroAcceptance {
                phase: "mutation",
                level: p,
                proposals,
            });
        }
        let rate = accepted as f64 / proposals as f64;
        check_acceptance(rate, &format!("level {p}"), &mut warnings);
        acceptance_rates.push(rate);
        (xs, ys) = ends.into_iter().map(|e| (e.x, e.y)).unzip();
        p += 1;
    }
    let m = p;
    let above = ys.iter().filter(|&&y| event.is_failure(y)).count();
    let final_fraction = above as f64 / n as f64;
    p_f_hat *= final_fraction;
    let calls_probability_phase = model.calls() - start_calls;

    let (sample, outputs, accepted, skipped) = final_sampling(
        &xs,
        &ys,
        model,
        input,
        event,
        params.sampling_steps,
        params.sample_size,
        &kernel,
        &streams,
    )?;
    skipped_total += skipped as u64;
    let final_acceptance_rate = if params.sampling_steps > 0 {
        let proposals = params.sample_size * params.sampling_steps;
        if accepted == 0 {
            return Err(Error::ZeroAcceptance {
                phase: "final sampling",
                level: m,
                proposals,
            });
        }
        let rate = accepted as f64 / proposals as f64;
        check_acceptance(rate, "final sampling", &mut warnings);
        Some(rate)
    } else {
        None
    };
    let calls_total = model.calls() - start_calls;

    Ok(SmcResult {
        conditioned_sample: sample,
        conditioned_outputs: outputs,
        p_f_hat,
        levels,
        m,
        survivor_counts,
        final_fraction,
        calls_total,
        calls_probability_phase,
        calls_sampling_phase: calls_total - calls_probability_phase,
        skipped_candidates: skipped_total,
        acceptance_rates,
        final_acceptance_rate,
        warnings,
    })
}
