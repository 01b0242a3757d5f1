use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rosa_core::campaign::{run_campaign, RunOptions};
use rosa_core::config::load_config;
use rosa_core::oracle::references;
use rosa_core::Error;

const EXIT_RUNTIME: u8 = 1;
const EXIT_CONFIG: u8 = 2;

/// Sensitivity analysis of rare failure events from one adaptive SMC campaign.
#[derive(Parser)]
#[command(name = "rosa", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the replicated estimation campaign of a config file.
    Estimate {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; defaults to `output.dir` of the config, else `out`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        replications: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Replications run in parallel; 0 uses every core.
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
    /// Print the theoretical reference values of a builtin example.
    References { name: String },
    /// Check a config file without evaluating the model.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn is_config_error(e: &Error) -> bool {
    matches!(
        e,
        Error::Config(_) | Error::InvalidParameter { .. } | Error::UnknownModel(_) | Error::NoReferences(_)
    )
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(if is_config_error(e) { EXIT_CONFIG } else { EXIT_RUNTIME })
}

/// Writes to stdout, ignoring a closed pipe.
fn emit(text: &str) {
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Estimate {
            config,
            out,
            replications,
            seed,
            jobs,
        } => {
            let cfg = match load_config(&config) {
                Ok(c) => c,
                Err(e) => return fail(&e),
            };
            let mut jobs = jobs;
            if cfg.model.is_external() && jobs != 1 {
                log::info!("external model: running replications sequentially");
                jobs = 1;
            }
            let options = RunOptions {
                replications,
                seed,
                jobs,
            };
            let report = match run_campaign(&cfg, &options) {
                Ok(r) => r,
                Err(e) => return fail(&e),
            };
            let dir = out
                .or_else(|| cfg.output_dir.clone())
                .unwrap_or_else(|| PathBuf::from("out"));
            if let Err(e) = report.write(&dir) {
                return fail(&e);
            }
            emit(&format!(
                "{}\nwall clock {:.2} s; reports written to {}\n",
                report.summary_table(),
                report.wall_clock.as_secs_f64(),
                dir.display()
            ));
            ExitCode::SUCCESS
        }
        Command::References { name } => match references(&name) {
            Ok(refs) => {
                for r in refs {
                    emit(&format!("{} {:.4e} {} {:.1e}\n", r.quantity, r.value, r.method, r.tolerance));
                }
                ExitCode::SUCCESS
            }
            Err(e) => fail(&e),
        },
        Command::Validate { config } => match load_config(&config) {
            Ok(_) => {
                emit("ok\n");
                ExitCode::SUCCESS
            }
            Err(Error::Config(list)) => {
                emit(&format!("{list}\n"));
                ExitCode::from(EXIT_CONFIG)
            }
            Err(e) => fail(&e),
        },
    }
}
