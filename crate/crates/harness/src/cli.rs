//! Command-line interface.
//!
//! Exit codes: 0 success, 2 config error, 3 numerical failure, 4
//! under-powered report.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use resque_core::cluster::InitScheme;
use resque_core::dataset::generate_synthetic;
use resque_core::nn::{train_to_cutoff, ModelParams, TrainConfig};
use resque_core::randindex::resque_task_pipeline;
use resque_core::representation::{class_embeddings, resque_dist, ClassEmbeddingSet};
use resque_core::shift::{apply_shift, NoiseKind, NoiseSpec};
use resque_core::Dataset32;

use crate::artifacts::{load_dataset, load_model, save_dataset, save_model};
use crate::config::{ExperimentConfig, TaskMode};
use crate::error::{HarnessError, Result};
use crate::records::read_records;
use crate::report::{build_report, format_table, write_report, ReportMode};
use crate::suite::{run_distribution_suite, run_task_suite, SuiteOptions};

#[derive(Parser)]
#[command(
    name = "resque",
    version,
    about = "Forward-pass retraining-cost indices and the desk-scale studies that validate them"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset file.
    GenData {
        #[command(flatten)]
        config: ConfigArg,
        /// Output dataset file.
        #[arg(long)]
        out: PathBuf,
        /// Override the dataset seed (defines the task identity).
        #[arg(long)]
        seed: Option<u64>,
        /// Override the class count.
        #[arg(long)]
        classes: Option<usize>,
    },
    /// Train a model to the cutoff accuracy and write a checkpoint.
    Train {
        #[command(flatten)]
        config: ConfigArg,
        /// Dataset file; generated from the config when omitted.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Output checkpoint file.
        #[arg(long)]
        out: PathBuf,
        /// Override the training seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Apply a corruption to a dataset file.
    Shift {
        /// Input dataset file.
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        kind: NoiseKindArg,
        #[arg(long)]
        level: u8,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Distribution-shift index between two datasets through a model.
    ResqueDist {
        #[command(flatten)]
        config: ConfigArg,
        /// Model checkpoint (ignored with --embeddings).
        #[arg(long)]
        model: Option<PathBuf>,
        /// Original dataset (or class-embedding file with --embeddings).
        #[arg(long)]
        original: PathBuf,
        /// Shifted dataset (or class-embedding file with --embeddings).
        #[arg(long)]
        shifted: PathBuf,
        /// Treat inputs as precomputed class-embedding files.
        #[arg(long)]
        embeddings: bool,
        /// Write the two class-embedding sets into this directory.
        #[arg(long)]
        dump_embeddings: Option<PathBuf>,
    },
    /// Task-change index for retraining a model to a new task.
    ResqueTask {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        model: PathBuf,
        /// Target-task dataset file.
        #[arg(long)]
        target: PathBuf,
        /// Centroid initialization scheme.
        #[arg(long, default_value = "class_centroids")]
        init_scheme: InitSchemeArg,
        /// Override the pipeline seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Retrain a checkpoint to a dataset, recording cost measures.
    Retrain {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Output checkpoint file.
        #[arg(long)]
        out: PathBuf,
        /// Override the retraining seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the distribution-shift suite, appending JSONL records.
    SuiteDist {
        #[command(flatten)]
        config: ConfigArg,
        /// Record file (appended; completed cells are skipped).
        #[arg(long)]
        out: PathBuf,
        /// Worker threads.
        #[arg(long, default_value_t = 1)]
        parallel: usize,
        /// Skip the from-scratch baselines.
        #[arg(long)]
        no_scratch: bool,
        /// Suppress per-record progress output.
        #[arg(long)]
        quiet: bool,
    },
    /// Run the task-change suite, appending JSONL records.
    SuiteTask {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        parallel: usize,
        /// Override the task mode (measures | peak).
        #[arg(long)]
        mode: Option<TaskModeArg>,
        #[arg(long)]
        quiet: bool,
    },
    /// Correlation tables and plot-data CSVs from a record file.
    Report {
        /// Record file produced by a suite.
        #[arg(long)]
        records: PathBuf,
        /// dist | task | peak
        #[arg(long)]
        mode: String,
        /// Output directory for CSV files.
        #[arg(long)]
        out: PathBuf,
        /// Correlate raw runs instead of seed-averaged cells.
        #[arg(long)]
        raw: bool,
    },
}

// Thin clap-compatible wrappers over the core enums.
#[derive(Clone)]
struct NoiseKindArg(NoiseKind);

impl std::str::FromStr for NoiseKindArg {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        s.parse::<NoiseKind>()
            .map(NoiseKindArg)
            .map_err(|e| e.to_string())
    }
}

#[derive(Clone)]
struct InitSchemeArg(InitScheme);

impl std::str::FromStr for InitSchemeArg {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        s.parse::<InitScheme>()
            .map(InitSchemeArg)
            .map_err(|e| e.to_string())
    }
}

#[derive(Clone)]
struct TaskModeArg(TaskMode);

impl std::str::FromStr for TaskModeArg {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "measures" => Ok(TaskModeArg(TaskMode::Measures)),
            "peak" => Ok(TaskModeArg(TaskMode::Peak)),
            other => Err(format!("unknown task mode `{other}`")),
        }
    }
}

const TAG_CLI_INIT: u64 = 100;
const TAG_CLI_HEAD: u64 = 101;

pub fn run() -> Result<()> {
    dispatch(Cli::parse())
}

fn generate_from_config(config: &ExperimentConfig, seed: u64, classes: usize) -> Result<Dataset32> {
    Ok(generate_synthetic::<f32>(
        classes,
        config.dataset.samples_per_class,
        config.dataset.height,
        config.dataset.width,
        config.dataset.channels,
        seed,
    )?)
}

fn seeded(config: &TrainConfig, seed: Option<u64>) -> TrainConfig {
    match seed {
        Some(seed) => TrainConfig {
            seed,
            ..config.clone()
        },
        None => config.clone(),
    }
}

fn print_json(value: serde_json::Value) {
    println!(
        "{}",
        serde_json::to_string_pretty(&value).expect("valid json")
    );
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData {
            config,
            out,
            seed,
            classes,
        } => {
            let config = ExperimentConfig::load(&config.config)?;
            let ds = generate_from_config(
                &config,
                seed.unwrap_or(config.dataset.seed),
                classes.unwrap_or(config.dataset.num_classes),
            )?;
            save_dataset(&out, &ds)?;
            print_json(json!({
                "samples": ds.len(),
                "num_classes": ds.num_classes,
                "out": out,
            }));
            Ok(())
        }
        Command::Train {
            config,
            data,
            out,
            seed,
        } => {
            let config = ExperimentConfig::load(&config.config)?;
            let ds = match data {
                Some(path) => load_dataset(path)?,
                None => {
                    generate_from_config(&config, config.dataset.seed, config.dataset.num_classes)?
                }
            };
            let train_cfg = seeded(&config.train, seed);
            let params = ModelParams::<f32>::init(
                config.model_spec(ds.num_classes),
                resque_core::rng::derive_seed(train_cfg.seed, TAG_CLI_INIT),
            )?;
            let (trained, measures) = train_to_cutoff(params, &ds, &train_cfg)?;
            save_model(&out, &trained)?;
            print_json(serde_json::to_value(&measures).expect("measures serialize"));
            Ok(())
        }
        Command::Shift {
            input,
            kind,
            level,
            seed,
            out,
        } => {
            let ds = load_dataset(input)?;
            let shifted = apply_shift(
                &ds,
                &NoiseSpec {
                    kind: kind.0,
                    level,
                    seed,
                },
            )?;
            save_dataset(&out, &shifted)?;
            print_json(json!({
                "kind": kind.0.name(),
                "level": level,
                "seed": seed,
                "out": out,
            }));
            Ok(())
        }
        Command::ResqueDist {
            config,
            model,
            original,
            shifted,
            embeddings,
            dump_embeddings,
        } => {
            let config = ExperimentConfig::load(&config.config)?;
            let (set_a, set_b) = if embeddings {
                (
                    ClassEmbeddingSet::read_file(&original)?,
                    ClassEmbeddingSet::read_file(&shifted)?,
                )
            } else {
                let model_path = model.ok_or_else(|| {
                    HarnessError::Config("--model is required unless --embeddings is set".into())
                })?;
                let params = load_model(&model_path, &config.model, config.dataset.input_shape())?;
                let ds_a = load_dataset(&original)?;
                let ds_b = load_dataset(&shifted)?;
                if ds_a.num_classes != ds_b.num_classes {
                    return Err(HarnessError::Config(format!(
                        "class counts differ: {} vs {}",
                        ds_a.num_classes, ds_b.num_classes
                    )));
                }
                let emb_a = resque_core::nn::extract_embeddings(&params, &ds_a)?;
                let emb_b = resque_core::nn::extract_embeddings(&params, &ds_b)?;
                (
                    class_embeddings(&emb_a, ds_a.num_classes)?,
                    class_embeddings(&emb_b, ds_b.num_classes)?,
                )
            };
            if let Some(dir) = dump_embeddings {
                std::fs::create_dir_all(&dir)?;
                set_a.write_file(dir.join("original_classes.rsqe"))?;
                set_b.write_file(dir.join("shifted_classes.rsqe"))?;
            }
            let index = resque_dist(&set_a, &set_b)?;
            print_json(json!({
                "index": index,
                "num_classes": set_a.num_classes(),
                "rep_dim": set_a.rep_dim(),
            }));
            Ok(())
        }
        Command::ResqueTask {
            config,
            model,
            target,
            init_scheme,
            seed,
        } => {
            let config = ExperimentConfig::load(&config.config)?;
            let params = load_model(&model, &config.model, config.dataset.input_shape())?;
            let target_ds = load_dataset(&target)?;
            let retrain_cfg = seeded(config.retrain_config(), seed);
            let index = resque_task_pipeline(&params, &target_ds, &retrain_cfg, init_scheme.0)?;
            print_json(json!({
                "index": index,
                "init_scheme": init_scheme.0.to_string(),
                "epochs_used": 1,
                "seed": retrain_cfg.seed,
            }));
            Ok(())
        }
        Command::Retrain {
            config,
            model,
            data,
            out,
            seed,
        } => {
            let config = ExperimentConfig::load(&config.config)?;
            let mut params = load_model(&model, &config.model, config.dataset.input_shape())?;
            let ds = load_dataset(&data)?;
            let retrain_cfg = seeded(config.retrain_config(), seed);
            if params.spec.num_classes != ds.num_classes {
                params.reinit_head(
                    ds.num_classes,
                    resque_core::rng::derive_seed(retrain_cfg.seed, TAG_CLI_HEAD),
                )?;
            }
            let (retrained, measures) = train_to_cutoff(params, &ds, &retrain_cfg)?;
            save_model(&out, &retrained)?;
            print_json(serde_json::to_value(&measures).expect("measures serialize"));
            Ok(())
        }
        Command::SuiteDist {
            config,
            out,
            parallel,
            no_scratch,
            quiet,
        } => {
            let config = ExperimentConfig::load(&config.config)?;
            if config.noises.is_empty() {
                return Err(HarnessError::Config(
                    "config lists no [[noise]] entries".into(),
                ));
            }
            let options = SuiteOptions {
                parallel,
                with_scratch: no_scratch.then_some(false),
                task_mode: None,
                verbose: !quiet,
            };
            let summary = run_distribution_suite(&config, &out, &options)?;
            print_json(json!({
                "executed": summary.executed,
                "skipped": summary.skipped,
                "failed": summary.failed,
                "out": out,
            }));
            Ok(())
        }
        Command::SuiteTask {
            config,
            out,
            parallel,
            mode,
            quiet,
        } => {
            let config = ExperimentConfig::load(&config.config)?;
            if config.tasks.is_empty() {
                return Err(HarnessError::Config(
                    "config lists no [[task]] entries".into(),
                ));
            }
            let options = SuiteOptions {
                parallel,
                with_scratch: None,
                task_mode: mode.map(|m| m.0),
                verbose: !quiet,
            };
            let summary = run_task_suite(&config, &out, &options)?;
            print_json(json!({
                "executed": summary.executed,
                "skipped": summary.skipped,
                "failed": summary.failed,
                "out": out,
            }));
            Ok(())
        }
        Command::Report {
            records,
            mode,
            out,
            raw,
        } => {
            let mode: ReportMode = mode.parse()?;
            let records = read_records(&records)?;
            let report = build_report(&records, mode, !raw)?;
            let written = write_report(&report, &out)?;
            print!("{}", format_table(&report));
            for path in written {
                eprintln!("wrote {}", path.display());
            }
            Ok(())
        }
    }
}
