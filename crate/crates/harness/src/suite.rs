//! Suite runners: distribution-shift and task-change studies.
//!
//! Cells are independent and may run on parallel workers; records are
//! appended to the output file as they arrive. Every random stream is
//! derived from (run seed, cell identity, purpose), so record *content* is
//! deterministic regardless of scheduling; single-threaded runs also fix the
//! record order. Cells already present in the output file are skipped.

use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{mpsc, Arc};

use resque_core::dataset::{generate_synthetic, split_for_retraining, LabeledDataset};
use resque_core::nn::{
    train_fixed_epochs, train_to_cutoff, ModelParams, RetrainMeasures, TrainConfig,
};
use resque_core::randindex::resque_task_pipeline;
use resque_core::representation::{class_embeddings, resque_dist, ClassEmbeddingSet};
use resque_core::rng::splitmix64;
use resque_core::shift::{apply_shift, NoiseKind, NoiseSpec};

use crate::config::{ExperimentConfig, TaskMode, TaskPair};
use crate::error::Result;
use crate::records::{append_record, completed_cells, read_records, CellKey, RunRecord, Variant};

/// Purpose tags for deriving independent seeds from one run seed.
mod purpose {
    pub const ORIGINAL_INIT: u64 = 1;
    pub const ORIGINAL_TRAIN: u64 = 2;
    pub const NOISE: u64 = 3;
    pub const RETRAIN: u64 = 4;
    pub const SCRATCH_INIT: u64 = 5;
    pub const SCRATCH_TRAIN: u64 = 6;
    pub const TASK_PIPELINE: u64 = 7;
    pub const TASK_RETRAIN: u64 = 8;
}

/// Mixes a run seed with a cell identity and purpose into one stream seed.
fn derive(run_seed: u64, purpose: u64, a: u64, b: u64) -> u64 {
    splitmix64(run_seed ^ splitmix64(purpose ^ splitmix64(a ^ splitmix64(b))))
}

fn noise_kind_id(kind: NoiseKind) -> u64 {
    match kind {
        NoiseKind::Gaussian => 1,
        NoiseKind::Blur => 2,
        NoiseKind::SaltPepper => 3,
    }
}

/// Runtime options common to both suites.
#[derive(Debug, Clone)]
pub struct SuiteOptions {
    /// Number of worker threads (1 = fully ordered output).
    pub parallel: usize,
    /// Overrides `suite.with_scratch` when set.
    pub with_scratch: Option<bool>,
    /// Overrides `suite.task_mode` when set.
    pub task_mode: Option<TaskMode>,
    /// Per-record progress lines on stderr.
    pub verbose: bool,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            parallel: 1,
            with_scratch: None,
            task_mode: None,
            verbose: false,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SuiteSummary {
    pub executed: usize,
    pub skipped: usize,
    pub failed: usize,
}

fn with_seed(config: &TrainConfig, seed: u64) -> TrainConfig {
    TrainConfig {
        seed,
        ..config.clone()
    }
}

// --- distribution suite ------------------------------------------------

/// Shared state for one run seed: the trained original model and the class
/// embeddings of the original split through it.
struct DistContext {
    trained: ModelParams<f32>,
    original_embeddings: ClassEmbeddingSet,
}

struct DistJob {
    kind: NoiseKind,
    level: u8,
    noise_seed: Option<u64>,
    run_seed: u64,
    variants: Vec<Variant>,
}

/// Runs the distribution-shift study: per (noise kind, level, seed), compute
/// the shift index through the trained original model, retrain to the shifted
/// split recording cost measures, and optionally train a scratch baseline.
pub fn run_distribution_suite(
    config: &ExperimentConfig,
    out: &Path,
    options: &SuiteOptions,
) -> Result<SuiteSummary> {
    let done = completed_cells(&read_records(out)?);
    let with_scratch = options.with_scratch.unwrap_or(config.suite.with_scratch);

    let base = generate_synthetic::<f32>(
        config.dataset.num_classes,
        config.dataset.samples_per_class,
        config.dataset.height,
        config.dataset.width,
        config.dataset.channels,
        config.dataset.seed,
    )?;
    let (original_split, shifted_base) = split_for_retraining(&base, &config.split)?;
    let num_classes = config.dataset.num_classes;

    // Plan jobs, skipping cells that already have records.
    let mut jobs = Vec::new();
    let mut skipped = 0usize;
    for entry in &config.noises {
        for (kind, level, noise_seed) in entry.expand() {
            for &run_seed in &config.suite.seeds {
                let mut variants = Vec::new();
                for variant in [Variant::Retrain, Variant::Scratch] {
                    if variant == Variant::Scratch && !with_scratch {
                        continue;
                    }
                    let key = CellKey::Dist {
                        kind,
                        level,
                        seed: run_seed,
                        variant,
                    };
                    if done.contains(&key) {
                        skipped += 1;
                    } else {
                        variants.push(variant);
                    }
                }
                if !variants.is_empty() {
                    jobs.push(DistJob {
                        kind,
                        level,
                        noise_seed,
                        run_seed,
                        variants,
                    });
                }
            }
        }
    }

    // Train the original model once per run seed (shared across cells).
    let mut contexts: HashMap<u64, Arc<DistContext>> = HashMap::new();
    for job in &jobs {
        if contexts.contains_key(&job.run_seed) {
            continue;
        }
        let run_seed = job.run_seed;
        let spec = config.model_spec(num_classes);
        let params =
            ModelParams::<f32>::init(spec, derive(run_seed, purpose::ORIGINAL_INIT, 0, 0))?;
        let train_cfg = with_seed(
            &config.train,
            derive(run_seed, purpose::ORIGINAL_TRAIN, 0, 0),
        );
        let (trained, measures) = train_to_cutoff(params, &original_split, &train_cfg)?;
        if options.verbose {
            eprintln!(
                "[suite-dist] original model for seed {run_seed}: epochs {} (accuracy {:.3})",
                measures.epochs,
                measures.accuracy_trace.last().copied().unwrap_or(0.0)
            );
        }
        let emb = resque_core::nn::extract_embeddings(&trained, &original_split)?;
        let original_embeddings = class_embeddings(&emb, num_classes)?;
        contexts.insert(
            run_seed,
            Arc::new(DistContext {
                trained,
                original_embeddings,
            }),
        );
    }

    let retrain_cfg = config.retrain_config();
    let run_job = |job: &DistJob| -> Vec<RunRecord> {
        let context = &contexts[&job.run_seed];
        let kind_id = noise_kind_id(job.kind);
        let noise_seed = job
            .noise_seed
            .unwrap_or_else(|| derive(job.run_seed, purpose::NOISE, kind_id, job.level as u64));
        let spec = NoiseSpec {
            kind: job.kind,
            level: job.level,
            seed: noise_seed,
        };

        // Shift + index are shared by both variants of the cell.
        let prelude = (|| -> resque_core::Result<(LabeledDataset<f32>, f64)> {
            let shifted = apply_shift(&shifted_base, &spec)?;
            let emb = resque_core::nn::extract_embeddings(&context.trained, &shifted)?;
            let shifted_embeddings = class_embeddings(&emb, num_classes)?;
            let index = resque_dist(&context.original_embeddings, &shifted_embeddings)?;
            Ok((shifted, index))
        })();

        let mut records = Vec::new();
        for &variant in &job.variants {
            let key = CellKey::Dist {
                kind: job.kind,
                level: job.level,
                seed: job.run_seed,
                variant,
            };
            let record = match &prelude {
                Err(e) => failed_record(key, None, e.to_string()),
                Ok((shifted, index)) => {
                    let outcome = match variant {
                        Variant::Retrain => train_to_cutoff(
                            context.trained.clone(),
                            shifted,
                            &with_seed(
                                retrain_cfg,
                                derive(job.run_seed, purpose::RETRAIN, kind_id, job.level as u64),
                            ),
                        ),
                        Variant::Scratch => ModelParams::<f32>::init(
                            config.model_spec(num_classes),
                            derive(
                                job.run_seed,
                                purpose::SCRATCH_INIT,
                                kind_id,
                                job.level as u64,
                            ),
                        )
                        .and_then(|fresh| {
                            train_to_cutoff(
                                fresh,
                                shifted,
                                &with_seed(
                                    retrain_cfg,
                                    derive(
                                        job.run_seed,
                                        purpose::SCRATCH_TRAIN,
                                        kind_id,
                                        job.level as u64,
                                    ),
                                ),
                            )
                        }),
                    };
                    match outcome {
                        Ok((_, measures)) => RunRecord {
                            cell: key,
                            index: Some(*index),
                            measures: Some(measures),
                            peak_accuracy: None,
                            failed: false,
                            error: None,
                        },
                        Err(e) => failed_record(key, Some(*index), e.to_string()),
                    }
                }
            };
            records.push(record);
        }
        records
    };

    execute(jobs, run_job, out, options, skipped)
}

// --- task suite ---------------------------------------------------------

struct TaskJob {
    pair: TaskPair,
    run_seed: u64,
    mode: TaskMode,
}

/// Runs the task-change study: per (original task, target task, seed), the
/// task index via the single-epoch pipeline, then either retrain-to-cutoff
/// (measures mode) or a fixed-epoch retrain recording peak accuracy.
pub fn run_task_suite(
    config: &ExperimentConfig,
    out: &Path,
    options: &SuiteOptions,
) -> Result<SuiteSummary> {
    let done = completed_cells(&read_records(out)?);
    let mode = options.task_mode.unwrap_or(config.suite.task_mode);

    let mut jobs = Vec::new();
    let mut skipped = 0usize;
    for pair in &config.tasks {
        for &run_seed in &config.suite.seeds {
            let key = CellKey::Task {
                original_seed: pair.original_seed,
                original_classes: pair.original_classes,
                target_seed: pair.target_seed,
                target_classes: pair.target_classes,
                seed: run_seed,
                mode,
            };
            if done.contains(&key) {
                skipped += 1;
            } else {
                jobs.push(TaskJob {
                    pair: pair.clone(),
                    run_seed,
                    mode,
                });
            }
        }
    }

    // Datasets are shared across cells; original models also depend on the
    // run seed.
    let mut datasets: HashMap<(u64, usize), Arc<LabeledDataset<f32>>> = HashMap::new();
    let mut make_dataset = |seed: u64, classes: usize| -> Result<Arc<LabeledDataset<f32>>> {
        if let Some(ds) = datasets.get(&(seed, classes)) {
            return Ok(ds.clone());
        }
        let ds = Arc::new(generate_synthetic::<f32>(
            classes,
            config.dataset.samples_per_class,
            config.dataset.height,
            config.dataset.width,
            config.dataset.channels,
            seed,
        )?);
        datasets.insert((seed, classes), ds.clone());
        Ok(ds)
    };

    let mut originals: HashMap<(u64, usize, u64), Arc<ModelParams<f32>>> = HashMap::new();
    let mut targets: HashMap<(u64, usize), Arc<LabeledDataset<f32>>> = HashMap::new();
    for job in &jobs {
        let okey = (
            job.pair.original_seed,
            job.pair.original_classes,
            job.run_seed,
        );
        if let std::collections::hash_map::Entry::Vacant(slot) = originals.entry(okey) {
            let ds = make_dataset(job.pair.original_seed, job.pair.original_classes)?;
            let params = ModelParams::<f32>::init(
                config.model_spec(job.pair.original_classes),
                derive(
                    job.run_seed,
                    purpose::ORIGINAL_INIT,
                    job.pair.original_seed,
                    0,
                ),
            )?;
            let cfg = with_seed(
                &config.train,
                derive(
                    job.run_seed,
                    purpose::ORIGINAL_TRAIN,
                    job.pair.original_seed,
                    0,
                ),
            );
            let (trained, measures) = train_to_cutoff(params, &ds, &cfg)?;
            if options.verbose {
                eprintln!(
                    "[suite-task] original task {} (k={}) seed {}: epochs {}",
                    job.pair.original_seed,
                    job.pair.original_classes,
                    job.run_seed,
                    measures.epochs
                );
            }
            slot.insert(Arc::new(trained));
        }
        let tkey = (job.pair.target_seed, job.pair.target_classes);
        if let std::collections::hash_map::Entry::Vacant(slot) = targets.entry(tkey) {
            slot.insert(make_dataset(tkey.0, tkey.1)?);
        }
    }

    let retrain_cfg = config.retrain_config();
    let init_scheme = config.suite.init_scheme;
    let fixed_epochs = config.suite.fixed_epochs;
    let run_job = |job: &TaskJob| -> Vec<RunRecord> {
        let key = CellKey::Task {
            original_seed: job.pair.original_seed,
            original_classes: job.pair.original_classes,
            target_seed: job.pair.target_seed,
            target_classes: job.pair.target_classes,
            seed: job.run_seed,
            mode: job.mode,
        };
        let trained = &originals[&(
            job.pair.original_seed,
            job.pair.original_classes,
            job.run_seed,
        )];
        let target = &targets[&(job.pair.target_seed, job.pair.target_classes)];
        let pair_tag = splitmix64(job.pair.original_seed ^ splitmix64(job.pair.target_seed));

        let pipeline_cfg = with_seed(
            retrain_cfg,
            derive(job.run_seed, purpose::TASK_PIPELINE, pair_tag, 0),
        );
        let index = match resque_task_pipeline(trained, target, &pipeline_cfg, init_scheme) {
            Ok(v) => v,
            Err(e) => return vec![failed_record(key, None, e.to_string())],
        };

        let retrain_seed = derive(job.run_seed, purpose::TASK_RETRAIN, pair_tag, 0);
        let outcome = (|| -> resque_core::Result<(RetrainMeasures, Option<f64>)> {
            let mut params = (**trained).clone();
            params.reinit_head(job.pair.target_classes, retrain_seed)?;
            let cfg = with_seed(retrain_cfg, retrain_seed);
            match job.mode {
                TaskMode::Measures => {
                    let (_, measures) = train_to_cutoff(params, target, &cfg)?;
                    Ok((measures, None))
                }
                TaskMode::Peak => {
                    let (_, measures) = train_fixed_epochs(params, target, &cfg, fixed_epochs)?;
                    let peak = measures
                        .accuracy_trace
                        .iter()
                        .cloned()
                        .fold(f64::NEG_INFINITY, f64::max);
                    Ok((measures, Some(peak)))
                }
            }
        })();

        vec![match outcome {
            Ok((measures, peak_accuracy)) => RunRecord {
                cell: key,
                index: Some(index),
                measures: Some(measures),
                peak_accuracy,
                failed: false,
                error: None,
            },
            Err(e) => failed_record(key, Some(index), e.to_string()),
        }]
    };

    execute(jobs, run_job, out, options, skipped)
}

fn failed_record(cell: CellKey, index: Option<f64>, error: String) -> RunRecord {
    RunRecord {
        cell,
        index,
        measures: None,
        peak_accuracy: None,
        failed: true,
        error: Some(error),
    }
}

/// Runs jobs (possibly on worker threads) and appends records in arrival
/// order. With one worker the order matches the job enumeration.
fn execute<J: Sync>(
    jobs: Vec<J>,
    run_job: impl Fn(&J) -> Vec<RunRecord> + Sync,
    out: &Path,
    options: &SuiteOptions,
    skipped: usize,
) -> Result<SuiteSummary> {
    let mut summary = SuiteSummary {
        skipped,
        ..SuiteSummary::default()
    };
    let workers = options.parallel.max(1).min(jobs.len().max(1));
    let next_job = AtomicUsize::new(0);
    let (sender, receiver) = mpsc::channel::<Vec<RunRecord>>();

    std::thread::scope(|scope| -> Result<()> {
        for _ in 0..workers {
            let sender = sender.clone();
            let jobs = &jobs;
            let next_job = &next_job;
            let run_job = &run_job;
            scope.spawn(move || loop {
                let i = next_job.fetch_add(1, Ordering::Relaxed);
                let Some(job) = jobs.get(i) else { break };
                if sender.send(run_job(job)).is_err() {
                    break;
                }
            });
        }
        drop(sender);
        for batch in receiver {
            for record in batch {
                if options.verbose {
                    eprintln!(
                        "[record] {} {}",
                        record.cell.describe(),
                        if record.failed { "FAILED" } else { "ok" }
                    );
                }
                summary.executed += 1;
                if record.failed {
                    summary.failed += 1;
                }
                append_record(out, &record)?;
            }
        }
        Ok(())
    })?;
    Ok(summary)
}
