//! Replicated estimation campaigns and their reports.
//!
//! Replication `r` runs with seed `derive_seed(master, r)`. The SMC sampler
//! uses it directly, the plug-in estimators use `derive_seed(rep_seed, 1)`
//! and the optional unconditional sample uses `derive_seed(rep_seed, 2)`.
//! Changing the replication count leaves earlier replications untouched.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{CampaignConfig, ModelSpec};
use crate::error::{Error, Result};
use crate::indices::{compute_indices, rank_indices, IndexEstimates, IndexFamily};
use crate::model::{sample_input, BlackBox};
use crate::oracle::{references, ReferenceValue};
use crate::rng::derive_seed;
use crate::smc::{run_adaptive_smc, SmcResult};

pub const VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

/// Per-replication SMC diagnostics, without the sample itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmcSummary {
    pub p_f_hat: f64,
    pub levels: Vec<f64>,
    pub m: usize,
    pub survivor_counts: Vec<usize>,
    pub final_fraction: f64,
    pub acceptance_rates: Vec<f64>,
    pub final_acceptance_rate: Option<f64>,
    pub skipped_candidates: u64,
    pub warnings: Vec<String>,
}

impl From<&SmcResult> for SmcSummary {
    fn from(r: &SmcResult) -> Self {
        Self {
            p_f_hat: r.p_f_hat,
            levels: r.levels.clone(),
            m: r.m,
            survivor_counts: r.survivor_counts.clone(),
            final_fraction: r.final_fraction,
            acceptance_rates: r.acceptance_rates.clone(),
            final_acceptance_rate: r.final_acceptance_rate,
            skipped_candidates: r.skipped_candidates,
            warnings: r.warnings.clone(),
        }
    }
}

/// Model calls of one replication, read off the black-box counter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CallCounts {
    /// Initial population and mutation phases.
    pub probability: u64,
    /// Final sampling phase feeding the sensitivity analysis.
    pub sensitivity: u64,
    /// Crude Monte Carlo draws for the unconditional `δ`.
    pub unconditional: u64,
    pub total: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replication {
    pub index: usize,
    pub seed: u64,
    pub smc: SmcSummary,
    pub indices: IndexEstimates,
    pub calls: CallCounts,
    #[serde(skip)]
    pub wall_clock: Duration,
}

/// Statistics of one index of one input across replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexSummary {
    pub family: IndexFamily,
    /// 1-based.
    pub input_index: usize,
    pub input_name: String,
    pub mean: f64,
    /// Sample standard deviation, 0 for a single replication.
    pub sd: f64,
    /// Competition rank of `mean` among the inputs.
    pub rank: usize,
    pub reference: Option<f64>,
    /// `(θ − θ̂)/θ` with `θ` the reference and `θ̂` the mean.
    pub relative_deviation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarSummary {
    pub mean: f64,
    pub sd: f64,
    pub reference: Option<f64>,
    pub relative_deviation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub version: String,
    pub model: String,
    pub master_seed: u64,
    pub input_names: Vec<String>,
    pub dependent_inputs: bool,
    pub threshold: f64,
    pub p_f: ScalarSummary,
    pub indices: Vec<IndexSummary>,
    pub replications: Vec<Replication>,
    pub calls: CallCounts,
    /// Mean calls per replication.
    pub mean_calls: f64,
    pub references: Vec<ReferenceValue>,
    pub config: String,
    #[serde(skip)]
    pub wall_clock: Duration,
}

/// Runtime options that override the configuration.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub replications: Option<usize>,
    pub seed: Option<u64>,
    /// Parallel replications; 0 means one per available core.
    pub jobs: usize,
}

fn run_one(config: &CampaignConfig, model: &BlackBox, index: usize, seed: u64) -> Result<Replication> {
    let started = Instant::now();
    let mut params = config.smc.clone();
    params.seed = seed;
    let smc = run_adaptive_smc(model, &config.inputs, &config.event, &params)?;

    let before = model.calls();
    let unconditional = if config.indices.unconditional_delta_samples > 0 {
        let xs = sample_input(
            &config.inputs,
            config.indices.unconditional_delta_samples,
            derive_seed(seed, 2),
        );
        let ys = xs
            .iter()
            .map(|x| model.evaluate(x).map_err(Error::from))
            .collect::<Result<Vec<_>>>()?;
        Some((xs, ys))
    } else {
        None
    };
    let unconditional_calls = model.calls() - before;

    let indices = compute_indices(
        &smc.conditioned_sample,
        &smc.conditioned_outputs,
        &config.inputs,
        &config.event,
        smc.p_f_hat,
        &config.maxent,
        &config.indices,
        derive_seed(seed, 1),
        unconditional.as_ref().map(|(x, y)| (x.as_slice(), y.as_slice())),
    )?;
    Ok(Replication {
        index,
        seed,
        calls: CallCounts {
            probability: smc.calls_probability_phase,
            sensitivity: smc.calls_sampling_phase,
            unconditional: unconditional_calls,
            total: smc.calls_total + unconditional_calls,
        },
        smc: SmcSummary::from(&smc),
        indices,
        wall_clock: started.elapsed(),
    })
}

fn first_error(results: Vec<(usize, u64, Result<Replication>)>) -> Result<Vec<Replication>> {
    results
        .into_iter()
        .map(|(index, seed, r)| {
            r.map_err(|e| Error::Replication {
                index,
                seed,
                source: Box::new(e),
            })
        })
        .collect()
}

/// Runs every replication of `config`.
pub fn run_replications(config: &CampaignConfig, options: &RunOptions) -> Result<Vec<Replication>> {
    let count = options.replications.unwrap_or(config.replications);
    if count < 1 {
        return Err(Error::Config("replications: must be at least 1".into()));
    }
    let master = options.seed.unwrap_or(config.seed);
    let seeds: Vec<(usize, u64)> = (0..count).map(|r| (r, derive_seed(master, r as u64))).collect();

    let results = match &config.model {
        // One process instance serves every replication in turn.
        ModelSpec::Command(_) => {
            let model = config.model.instantiate(config.inputs.dim())?;
            seeds
                .iter()
                .map(|&(r, s)| (r, s, run_one(config, &model, r, s)))
                .collect()
        }
        ModelSpec::Builtin(_) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(options.jobs)
                .build()
                .map_err(|e| Error::Config(format!("cannot start {} jobs: {e}", options.jobs)))?;
            pool.install(|| {
                seeds
                    .par_iter()
                    .map(|&(r, s)| {
                        let run = config
                            .model
                            .instantiate(config.inputs.dim())
                            .and_then(|model| run_one(config, &model, r, s));
                        (r, s, run)
                    })
                    .collect()
            })
        }
    };
    first_error(results)
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

fn relative_deviation(reference: Option<f64>, estimate: f64) -> Option<f64> {
    reference
        .filter(|r| *r != 0.0)
        .map(|r| (r - estimate) / r)
}

fn reference_name(family: IndexFamily, input: usize) -> Option<String> {
    let stem = match family {
        IndexFamily::DeltaF => "delta_f",
        IndexFamily::EtaBar => "eta_bar",
        IndexFamily::SobolIndicator => "sobol",
        IndexFamily::Delta => "delta",
        _ => return None,
    };
    Some(format!("{stem}_{input}"))
}

/// References that apply to `config`: only builtin models on their own
/// input law and threshold have them.
pub fn applicable_references(config: &CampaignConfig) -> Vec<ReferenceValue> {
    match &config.model {
        ModelSpec::Builtin(m) if config.default_inputs && m.event() == config.event => {
            references(m.name()).unwrap_or_default()
        }
        _ => Vec::new(),
    }
}

/// Aggregates replications into a report. Pure in its arguments.
pub fn build_report(
    config: &CampaignConfig,
    master_seed: u64,
    replications: Vec<Replication>,
    references: Vec<ReferenceValue>,
) -> CampaignReport {
    let lookup = |q: &str| crate::oracle::reference(&references, q);
    let first = &replications[0].indices;
    let mut indices = Vec::new();
    for (family, _) in first.families() {
        let per_input: Vec<(f64, f64)> = (0..config.inputs.dim())
            .map(|i| {
                let values: Vec<f64> = replications
                    .iter()
                    .map(|r| {
                        r.indices
                            .families()
                            .into_iter()
                            .find(|(f, _)| *f == family)
                            .map(|(_, v)| v[i])
                            .unwrap_or(f64::NAN)
                    })
                    .collect();
                mean_sd(&values)
            })
            .collect();
        let means: Vec<f64> = per_input.iter().map(|p| p.0).collect();
        let ranks = rank_indices(&means);
        for (i, &(mean, sd)) in per_input.iter().enumerate() {
            let reference = reference_name(family, i + 1).and_then(|q| lookup(&q));
            indices.push(IndexSummary {
                family,
                input_index: i + 1,
                input_name: config.input_names[i].clone(),
                mean,
                sd,
                rank: ranks[i],
                reference,
                relative_deviation: relative_deviation(reference, mean),
            });
        }
    }

    let p: Vec<f64> = replications.iter().map(|r| r.smc.p_f_hat).collect();
    let (p_mean, p_sd) = mean_sd(&p);
    let p_ref = lookup("P_f");

    let mut calls = CallCounts::default();
    for r in &replications {
        calls.probability += r.calls.probability;
        calls.sensitivity += r.calls.sensitivity;
        calls.unconditional += r.calls.unconditional;
        calls.total += r.calls.total;
    }
    let wall_clock = replications.iter().map(|r| r.wall_clock).sum();
    CampaignReport {
        version: VERSION.to_string(),
        model: config.model.name(),
        master_seed,
        input_names: config.input_names.clone(),
        dependent_inputs: config.inputs.is_dependent(),
        threshold: config.event.threshold,
        p_f: ScalarSummary {
            mean: p_mean,
            sd: p_sd,
            reference: p_ref,
            relative_deviation: relative_deviation(p_ref, p_mean),
        },
        indices,
        mean_calls: calls.total as f64 / replications.len() as f64,
        calls,
        replications,
        references,
        config: config.source.clone(),
        wall_clock,
    }
}

/// Runs the campaign and assembles its report.
pub fn run_campaign(config: &CampaignConfig, options: &RunOptions) -> Result<CampaignReport> {
    let started = Instant::now();
    let replications = run_replications(config, options)?;
    let master = options.seed.unwrap_or(config.seed);
    let mut report = build_report(config, master, replications, applicable_references(config));
    report.wall_clock = started.elapsed();
    Ok(report)
}

impl CampaignReport {
    /// Summary for `family` and 0-based input `i`.
    pub fn summary(&self, family: IndexFamily, i: usize) -> Option<&IndexSummary> {
        self.indices
            .iter()
            .find(|s| s.family == family && s.input_index == i + 1)
    }

    /// One row per input per index family per replication.
    pub fn indices_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["replication", "input_index", "index_family", "estimate", "rank"])
            .map_err(csv_error)?;
        for r in &self.replications {
            for (family, values) in r.indices.families() {
                let ranks = rank_indices(&values);
                for (i, v) in values.iter().enumerate() {
                    w.serialize((r.index, i + 1, family.name(), v, ranks[i]))
                        .map_err(csv_error)?;
                }
            }
        }
        csv_text(w)
    }

    pub fn replications_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "replication",
            "seed",
            "p_f_hat",
            "m",
            "final_fraction",
            "final_acceptance_rate",
            "skipped_candidates",
            "calls_probability",
            "calls_sensitivity",
            "calls_unconditional",
            "calls_total",
        ])
        .map_err(csv_error)?;
        for r in &self.replications {
            w.serialize((
                r.index,
                r.seed,
                r.smc.p_f_hat,
                r.smc.m,
                r.smc.final_fraction,
                r.smc.final_acceptance_rate,
                r.smc.skipped_candidates,
                r.calls.probability,
                r.calls.sensitivity,
                r.calls.unconditional,
                r.calls.total,
            ))
            .map_err(csv_error)?;
        }
        csv_text(w)
    }

    /// Table of means with ranks, standard deviations and relative deviations.
    pub fn summary_table(&self) -> String {
        let mut out = String::new();
        let n = self.replications.len();
        let _ = writeln!(out, "model {}  threshold {}  replications {n}  seed {}", self.model, self.threshold, self.master_seed);
        let _ = writeln!(
            out,
            "P_f  mean {:.4e}  sd {:.4e}{}",
            self.p_f.mean,
            self.p_f.sd,
            match (self.p_f.reference, self.p_f.relative_deviation) {
                (Some(r), Some(d)) => format!("  reference {r:.4e}  RD {d:.4}"),
                _ => String::new(),
            }
        );
        let per_run = |c: u64| c as f64 / n as f64;
        let _ = writeln!(
            out,
            "calls per run  {:.0} probability + {:.0} sensitivity{} = {:.0}",
            per_run(self.calls.probability),
            per_run(self.calls.sensitivity),
            if self.calls.unconditional > 0 {
                format!(" + {:.0} unconditional", per_run(self.calls.unconditional))
            } else {
                String::new()
            },
            self.mean_calls
        );
        if self.dependent_inputs {
            let _ = writeln!(out, "note: inputs are dependent; δᶠ and η̄ describe marginal effects only");
        }
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "{:<20} {:<8} {:>10} {:>5} {:>10} {:>10} {:>8}",
            "index", "input", "mean", "rank", "sd", "reference", "RD"
        );
        for s in &self.indices {
            let _ = writeln!(
                out,
                "{:<20} {:<8} {:>10.4} {:>5} {:>10.4} {:>10} {:>8}",
                s.family.name(),
                s.input_name,
                s.mean,
                format!("({})", s.rank),
                s.sd,
                s.reference.map(|r| format!("{r:.4}")).unwrap_or_else(|| "-".into()),
                s.relative_deviation.map(|d| format!("{d:.3}")).unwrap_or_else(|| "-".into()),
            );
        }
        let flags: Vec<String> = self
            .replications
            .iter()
            .flat_map(|r| r.indices.flags.iter().map(move |f| format!("replication {}: {f}", r.index)))
            .collect();
        if !flags.is_empty() {
            let _ = writeln!(out, "\nclipped estimates:");
            for f in flags {
                let _ = writeln!(out, "  {f}");
            }
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.into()))
    }

    pub fn timing_text(&self) -> String {
        let mut out = format!("total_seconds {:.3}\n", self.wall_clock.as_secs_f64());
        for r in &self.replications {
            let _ = writeln!(out, "replication {} seconds {:.3}", r.index, r.wall_clock.as_secs_f64());
        }
        out
    }

    /// Writes `indices.csv`, `replications.csv`, `summary.txt`, `report.json`
    /// and `timing.txt` into `dir`, returning the paths written.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let files = [
            ("indices.csv", self.indices_csv()?),
            ("replications.csv", self.replications_csv()?),
            ("summary.txt", self.summary_table()),
            ("report.json", self.to_json()?),
            ("timing.txt", self.timing_text()),
        ];
        let mut written = Vec::new();
        for (name, body) in files {
            let path = dir.join(name);
            std::fs::write(&path, body)?;
            written.push(path);
        }
        Ok(written)
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

fn csv_text(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
