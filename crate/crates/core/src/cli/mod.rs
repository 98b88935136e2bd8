//! Command line, run configuration, checkpoints and dataset files.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or model error. Results go to
//! the declared output files or, as one JSON document, to standard output.
//! Human-readable logs go to standard error.

pub mod checkpoint;
pub mod config;
pub mod dataset_io;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointHeader};
pub use config::RunConfig;
pub use dataset_io::{read_dataset_dir, write_dataset_dir};

use crate::decoders::retrieve;
use crate::error::{Error, Result};
use crate::evalharness::{eval_colearning, eval_retrieval, fusion_report, MetricReport, Task};
use crate::gradsuite::gradient_suite;
use crate::model::Model;
use crate::numkernel::rng_fork;
use crate::synthworld::{build_world, sample_datasets};
use crate::trainer::{run_training, split_holdout};

#[derive(Debug, Parser)]
#[command(name = "mmlang", version, about = "Coordinated multimodal representation learning on a synthetic concept world")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EvalTask {
    Fusion,
    Retrieval,
    Colearn,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a world and the D1/D2/D3 datasets.
    Gen {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a model on a dataset directory.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Write the training trace as JSON lines.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a checkpoint on the held-out split of a dataset directory.
    Eval {
        #[arg(long, value_enum)]
        task: EvalTask,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Report path; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rank candidates of the other modality for one query record.
    Retrieve {
        #[arg(long)]
        model: PathBuf,
        /// A single dataset record as JSON.
        #[arg(long)]
        query: String,
        /// Dataset records, one per line.
        #[arg(long)]
        candidates: PathBuf,
        #[arg(long)]
        k: usize,
    },
    /// Run the finite-difference gradient suite.
    CheckGrads {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<RunConfig> {
    let mut config = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    config.resolve_seed(seed)?;
    Ok(config)
}

fn write_json(path: &Path, value: &str) -> Result<()> {
    std::fs::write(path, value).map_err(|e| Error::io(path, e))
}

/// Runs one command; returns the JSON document for standard output, if any.
fn execute(command: Command) -> Result<Option<String>> {
    match command {
        Command::Gen { config, out, seed } => {
            let config = load_config(config.as_deref(), seed)?;
            let world = build_world(&config.world, &rng_fork(config.seed(), "world"))?;
            let data = sample_datasets(&world, config.datasets, &rng_fork(config.seed(), "data"))?;
            write_dataset_dir(&out, &world, &data)?;
            log::info!("wrote world and {} + {} + {} records to {}", data.d1.len(), data.d2.len(), data.d3.len(), out.display());
            Ok(Some(serde_json::to_string_pretty(&json!({
                "config_fingerprint": config.fingerprint()?,
                "seed": config.seed(),
                "d1": data.d1.len(),
                "d2": data.d2.len(),
                "d3": data.d3.len(),
            }))?))
        }
        Command::Train { config, data, out, trace, seed } => {
            let config = load_config(config.as_deref(), seed)?;
            let (world, triple) = read_dataset_dir(&data)?;
            let init = Model::init(&config.model_shape(&world), config.seed())?;
            let (model, tr) = run_training(&triple, init, &config.train_config())?;
            save_checkpoint(&model, &config, &out)?;
            if let Some(path) = trace {
                tr.write_jsonl(&path)?;
            }
            Ok(Some(serde_json::to_string_pretty(&json!({
                "config_fingerprint": config.fingerprint()?,
                "seed": config.seed(),
                "iterations": config.train.iterations,
                "initial_heldout_align_loss": tr.first_heldout(),
                "final_heldout_align_loss": tr.last_heldout(),
            }))?))
        }
        Command::Eval { task, model, data, out } => {
            let (model, header) = load_checkpoint(&model)?;
            let config = header.config;
            let (world, triple) = read_dataset_dir(&data)?;
            let train = config.train_config();
            let (train_split, heldout) = split_holdout(&triple, train.holdout_fraction, train.seed);
            let fp = header.config_fingerprint;
            let report = match task {
                EvalTask::Retrieval => {
                    let metrics = eval_retrieval(&model, &heldout.d3, &config.eval.ks)?;
                    MetricReport::single(Task::Retrieval, fp, config.seed(), metrics)
                }
                EvalTask::Fusion => fusion_report(&model, &train_split, &heldout.d1, &heldout.d2, &train, fp)?,
                EvalTask::Colearn => MetricReport {
                    config_fingerprint: fp,
                    ..eval_colearning(&world, &config.eval.colearn)?
                },
            };
            let text = report.to_json()?;
            match out {
                Some(path) => {
                    write_json(&path, &text)?;
                    Ok(None)
                }
                None => Ok(Some(text)),
            }
        }
        Command::Retrieve { model, query, candidates, k } => {
            let (model, _) = load_checkpoint(&model)?;
            let query = dataset_io::parse_record(&query)?.instance();
            let text = std::fs::read_to_string(&candidates).map_err(|e| Error::io(&candidates, e))?;
            let pool = text
                .lines()
                .enumerate()
                .filter(|(_, l)| !l.trim().is_empty())
                .map(|(i, l)| {
                    dataset_io::parse_record(l).map(|r| r.instance()).map_err(|e| Error::Schema {
                        path: candidates.clone(),
                        line: i + 1,
                        message: e.to_string(),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let ranked = retrieve(&model, &query, &pool, k)?;
            Ok(Some(serde_json::to_string_pretty(&ranked)?))
        }
        Command::CheckGrads { seed } => {
            let checks = gradient_suite(seed)?;
            let passed = checks.iter().all(|c| c.passed);
            let doc = serde_json::to_string_pretty(&json!({ "seed": seed, "passed": passed, "checks": checks }))?;
            if passed {
                Ok(Some(doc))
            } else {
                Err(Error::Format(format!("gradient check failed:\n{doc}")))
            }
        }
    }
}

/// Parses `argv` (program name first), runs the command and returns the exit code.
pub fn run_cli_with<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(stderr, "{text}");
                1
            } else {
                let _ = write!(stdout, "{text}");
                0
            };
        }
    };
    match execute(cli.command) {
        Ok(doc) => {
            if let Some(doc) = doc {
                let _ = writeln!(stdout, "{doc}");
            }
            0
        }
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            2
        }
    }
}

pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_cli_with(argv, &mut std::io::stdout().lock(), &mut std::io::stderr().lock())
}
