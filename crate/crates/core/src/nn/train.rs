//! Optimizers, training loops, and per-run cost instrumentation.

use std::time::Instant;

use rand::RngExt as _;
use serde::{Deserialize, Serialize};

use crate::dataset::{round_half_away, LabeledDataset};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed};
use crate::scalar::Scalar;

use super::backprop::loss_and_grads;
use super::{accuracy, Batch, LayerParams, ModelParams};

// Stream tags for deriving independent RNG streams from one config seed.
const TAG_SHUFFLE: u64 = 1;
const TAG_EVAL_SPLIT: u64 = 2;
const TAG_HEAD: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

/// Hyperparameters for one (re)training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    /// Epochs after which the learning rate is divided by `lr_decay_factor`.
    #[serde(default)]
    pub lr_decay_epochs: Vec<usize>,
    #[serde(default = "default_decay_factor")]
    pub lr_decay_factor: f64,
    #[serde(default)]
    pub weight_decay: f64,
    pub batch_size: usize,
    #[serde(default = "default_cutoff")]
    pub cutoff_accuracy: f64,
    pub max_epochs: usize,
    /// Fraction of the dataset held out for the per-epoch accuracy check;
    /// 0 evaluates on the training data itself.
    #[serde(default)]
    pub eval_fraction: f64,
    pub seed: u64,
}

fn default_decay_factor() -> f64 {
    10.0
}

fn default_cutoff() -> f64 {
    0.90
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.cutoff_accuracy) {
            return Err(Error::Parameter(format!(
                "cutoff accuracy must lie in [0, 1], got {}",
                self.cutoff_accuracy
            )));
        }
        if self.max_epochs == 0 {
            return Err(Error::Parameter("max_epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Parameter("batch size must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.eval_fraction) {
            return Err(Error::Parameter(format!(
                "eval fraction must lie in [0, 1), got {}",
                self.eval_fraction
            )));
        }
        if self.learning_rate < 0.0 || !self.learning_rate.is_finite() {
            return Err(Error::Parameter(
                "learning rate must be finite and >= 0".into(),
            ));
        }
        if self.lr_decay_factor <= 0.0 {
            return Err(Error::Parameter("lr decay factor must be positive".into()));
        }
        Ok(())
    }

    /// Learning rate in effect during a given 1-based epoch.
    fn lr_at_epoch(&self, epoch: usize) -> f64 {
        let decays = self
            .lr_decay_epochs
            .iter()
            .filter(|&&boundary| epoch > boundary)
            .count();
        self.learning_rate / self.lr_decay_factor.powi(decays as i32)
    }
}

/// Optimizer state carried across steps.
#[derive(Debug, Clone)]
pub struct Optimizer<S: Scalar> {
    kind: OptimizerKind,
    lr: f64,
    step_count: u64,
    first_moment: Vec<LayerParams<S>>,
    second_moment: Vec<LayerParams<S>>,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl<S: Scalar> Optimizer<S> {
    pub fn new(config: &TrainConfig, params: &ModelParams<S>) -> Self {
        let zeros = || {
            params
                .spec
                .layer_plans()
                .iter()
                .map(LayerParams::zeros_like)
                .collect::<Vec<_>>()
        };
        Self {
            kind: config.optimizer,
            lr: config.learning_rate,
            step_count: 0,
            first_moment: zeros(),
            second_moment: zeros(),
        }
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.lr = lr;
    }

    fn apply(&mut self, params: &mut ModelParams<S>, grads: &super::Gradients<S>) {
        self.step_count += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                let lr = S::from_f64_lossy(self.lr);
                for (layer, grad) in params.layers.iter_mut().zip(&grads.layers) {
                    for (w, &g) in layer.weights.iter_mut().zip(&grad.weights) {
                        *w -= lr * g;
                    }
                    for (b, &g) in layer.bias.iter_mut().zip(&grad.bias) {
                        *b -= lr * g;
                    }
                }
            }
            OptimizerKind::Adam => {
                let t = self.step_count as i32;
                let correction1 = 1.0 - ADAM_BETA1.powi(t);
                let correction2 = 1.0 - ADAM_BETA2.powi(t);
                for (l, (layer, grad)) in params.layers.iter_mut().zip(&grads.layers).enumerate() {
                    let update = |value: &mut S, g: S, m: &mut S, v: &mut S, lr: f64| {
                        let g = g.as_f64();
                        let m_new = ADAM_BETA1 * m.as_f64() + (1.0 - ADAM_BETA1) * g;
                        let v_new = ADAM_BETA2 * v.as_f64() + (1.0 - ADAM_BETA2) * g * g;
                        *m = S::from_f64_lossy(m_new);
                        *v = S::from_f64_lossy(v_new);
                        let m_hat = m_new / correction1;
                        let v_hat = v_new / correction2;
                        let step = lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
                        *value = S::from_f64_lossy(value.as_f64() - step);
                    };
                    for (i, w) in layer.weights.iter_mut().enumerate() {
                        update(
                            w,
                            grad.weights[i],
                            &mut self.first_moment[l].weights[i],
                            &mut self.second_moment[l].weights[i],
                            self.lr,
                        );
                    }
                    for (i, b) in layer.bias.iter_mut().enumerate() {
                        update(
                            b,
                            grad.bias[i],
                            &mut self.first_moment[l].bias[i],
                            &mut self.second_moment[l].bias[i],
                            self.lr,
                        );
                    }
                }
            }
        }
    }
}

/// One optimizer step on a batch. Returns the global L2 norm of all parameter
/// gradients, taken before the update.
pub fn grad_step<S: Scalar>(
    params: &mut ModelParams<S>,
    optimizer: &mut Optimizer<S>,
    batch: &Batch<S>,
    config: &TrainConfig,
) -> Result<f64> {
    let (_, grads) = loss_and_grads(params, batch, config.weight_decay)?;
    let norm = grads.global_norm();
    optimizer.apply(params, &grads);
    if params.layers.iter().any(|l| {
        l.weights
            .iter()
            .chain(l.bias.iter())
            .any(|v| !v.is_finite())
    }) {
        return Err(Error::Numerical("parameters became non-finite".into()));
    }
    Ok(norm)
}

/// Why a training run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HaltReason {
    /// Evaluation accuracy reached the cutoff.
    Cutoff,
    /// Within 0.5% of the cutoff at epoch 25.
    Proximity25,
    /// Within 1% of the cutoff at epoch 50.
    Proximity50,
    /// Ran out of epochs without reaching the cutoff.
    MaxEpochs,
    /// Fixed-epoch run; no cutoff applied.
    FixedEpochs,
}

/// Cost measures recorded for one (re)training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrainMeasures {
    pub epochs: usize,
    /// Sum over optimizer steps of the global gradient L2 norm.
    pub total_grad_norm: f64,
    /// Per-epoch normalized parameter change, summed over epochs and layers,
    /// averaged over layers.
    pub param_change: f64,
    pub wall_clock_s: f64,
    /// Analytic forward+backward multiply-accumulate count over all steps.
    pub flops_estimate: f64,
    pub reached_cutoff: bool,
    pub halt: HaltReason,
    pub accuracy_trace: Vec<f64>,
}

/// Normalized per-layer parameter change between two snapshots:
/// `||W_t - W_{t-1}||_2 / sqrt(||W_t||_2)`, biases folded into their layer.
pub fn param_change_interval<S: Scalar>(
    prev: &ModelParams<S>,
    cur: &ModelParams<S>,
) -> Result<Vec<f64>> {
    if prev.layers.len() != cur.layers.len() {
        return Err(Error::Parameter("layer counts differ".into()));
    }
    let mut changes = Vec::with_capacity(cur.layers.len());
    for (l, (p, c)) in prev.layers.iter().zip(&cur.layers).enumerate() {
        if p.weights.len() != c.weights.len() || p.bias.len() != c.bias.len() {
            return Err(Error::Parameter(format!("layer {l} shapes differ")));
        }
        let mut diff_sq = 0.0f64;
        let mut cur_sq = 0.0f64;
        for (&a, &b) in p
            .weights
            .iter()
            .chain(p.bias.iter())
            .zip(c.weights.iter().chain(c.bias.iter()))
        {
            let d = b.as_f64() - a.as_f64();
            diff_sq += d * d;
            cur_sq += b.as_f64() * b.as_f64();
        }
        if cur_sq == 0.0 {
            return Err(Error::DegenerateLayer(l));
        }
        changes.push(diff_sq.sqrt() / cur_sq.sqrt().sqrt());
    }
    Ok(changes)
}

/// Stratified eval/train index split, deterministic per seed.
fn eval_split<S: Scalar>(
    ds: &LabeledDataset<S>,
    fraction: f64,
    seed: u64,
) -> (Vec<usize>, Vec<usize>) {
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); ds.num_classes];
    for (i, &label) in ds.labels.iter().enumerate() {
        per_class[label as usize].push(i);
    }
    let mut rng = rng_from_seed(derive_seed(seed, TAG_EVAL_SPLIT));
    let mut train = Vec::new();
    let mut eval = Vec::new();
    for pool in &mut per_class {
        for i in (1..pool.len()).rev() {
            let j = rng.random_range(0..=i);
            pool.swap(i, j);
        }
        // Keep at least one training sample per class.
        let take = (round_half_away(fraction * pool.len() as f64) as usize)
            .min(pool.len().saturating_sub(1));
        eval.extend_from_slice(&pool[..take]);
        train.extend_from_slice(&pool[take..]);
    }
    train.sort_unstable();
    eval.sort_unstable();
    (train, eval)
}

enum HaltPolicy {
    /// Cutoff with the epoch-25/50 proximity rules and a max-epoch stop.
    Cutoff,
    /// Exactly this many epochs, no accuracy-based halting.
    Fixed(usize),
}

/// Accuracy-based halting decision for one epoch. Reaching the cutoff wins
/// over the proximity rules: within 0.5% of the cutoff at epoch 25, within 1%
/// at epoch 50. The max-epoch stop is applied by the caller, after these.
fn cutoff_halt(epoch: usize, accuracy: f64, cutoff: f64) -> Option<HaltReason> {
    if accuracy >= cutoff {
        Some(HaltReason::Cutoff)
    } else if epoch == 25 && accuracy >= cutoff - 0.005 {
        Some(HaltReason::Proximity25)
    } else if epoch == 50 && accuracy >= cutoff - 0.01 {
        Some(HaltReason::Proximity50)
    } else {
        None
    }
}

/// Trains until the evaluation accuracy reaches the cutoff.
///
/// Halting, in order of precedence per epoch: accuracy >= cutoff; at epoch 25
/// accuracy >= cutoff - 0.005; at epoch 50 accuracy >= cutoff - 0.01; at
/// `max_epochs` the run stops with `reached_cutoff = false`.
pub fn train_to_cutoff<S: Scalar>(
    params: ModelParams<S>,
    ds: &LabeledDataset<S>,
    config: &TrainConfig,
) -> Result<(ModelParams<S>, RetrainMeasures)> {
    run_epochs(params, ds, config, HaltPolicy::Cutoff)
}

/// Trains for exactly `epochs` epochs (peak-accuracy estimation); the
/// accuracy trace carries every epoch's evaluation accuracy.
pub fn train_fixed_epochs<S: Scalar>(
    params: ModelParams<S>,
    ds: &LabeledDataset<S>,
    config: &TrainConfig,
    epochs: usize,
) -> Result<(ModelParams<S>, RetrainMeasures)> {
    if epochs == 0 {
        return Err(Error::Parameter("fixed epoch count must be >= 1".into()));
    }
    run_epochs(params, ds, config, HaltPolicy::Fixed(epochs))
}

fn run_epochs<S: Scalar>(
    mut params: ModelParams<S>,
    ds: &LabeledDataset<S>,
    config: &TrainConfig,
    policy: HaltPolicy,
) -> Result<(ModelParams<S>, RetrainMeasures)> {
    config.validate()?;
    if ds.is_empty() {
        return Err(Error::Parameter("cannot train on an empty dataset".into()));
    }
    let start = Instant::now();
    let (train_indices, eval_indices) = eval_split(ds, config.eval_fraction, config.seed);
    if train_indices.is_empty() {
        return Err(Error::Parameter(
            "eval split leaves no training data".into(),
        ));
    }
    let eval_batch = if eval_indices.is_empty() {
        Batch::from_dataset(ds, &train_indices)
    } else {
        Batch::from_dataset(ds, &eval_indices)
    };

    let macs_per_sample = params.spec.forward_macs_per_sample() as f64;
    let mut optimizer = Optimizer::new(config, &params);
    let mut shuffle_rng = rng_from_seed(derive_seed(config.seed, TAG_SHUFFLE));
    let mut order = train_indices.clone();

    let max_epochs = match policy {
        HaltPolicy::Cutoff => config.max_epochs,
        HaltPolicy::Fixed(n) => n,
    };

    let mut total_grad_norm = 0.0f64;
    let mut flops = 0.0f64;
    let mut change_sum = 0.0f64;
    let mut trace = Vec::new();
    let mut halt = HaltReason::MaxEpochs;
    let mut reached = false;
    let mut epochs_run = 0;

    for epoch in 1..=max_epochs {
        epochs_run = epoch;
        optimizer.set_learning_rate(config.lr_at_epoch(epoch));
        let snapshot = params.clone();

        for i in (1..order.len()).rev() {
            let j = shuffle_rng.random_range(0..=i);
            order.swap(i, j);
        }
        for (step, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch = Batch::from_dataset(ds, chunk);
            let norm =
                grad_step(&mut params, &mut optimizer, &batch, config).map_err(|e| match e {
                    Error::Numerical(detail) => {
                        Error::Numerical(format!("epoch {epoch} step {step}: {detail}"))
                    }
                    other => other,
                })?;
            total_grad_norm += norm;
            flops += 3.0 * macs_per_sample * chunk.len() as f64;
        }

        change_sum += param_change_interval(&snapshot, &params)?
            .iter()
            .sum::<f64>();
        let acc = accuracy(&params, &eval_batch)?;
        trace.push(acc);

        match policy {
            HaltPolicy::Cutoff => {
                if let Some(reason) = cutoff_halt(epoch, acc, config.cutoff_accuracy) {
                    halt = reason;
                    reached = true;
                    break;
                }
            }
            HaltPolicy::Fixed(_) => {
                halt = HaltReason::FixedEpochs;
            }
        }
    }

    let measures = RetrainMeasures {
        epochs: epochs_run,
        total_grad_norm,
        param_change: change_sum / params.num_layers() as f64,
        wall_clock_s: start.elapsed().as_secs_f64(),
        flops_estimate: flops,
        reached_cutoff: reached,
        halt,
        accuracy_trace: trace,
    };
    Ok((params, measures))
}

/// Single-epoch retraining to a new task: the classifier head is re-built at
/// the new class count, then every layer takes exactly one pass of updates.
pub fn retrain_one_epoch<S: Scalar>(
    params: ModelParams<S>,
    new_task_ds: &LabeledDataset<S>,
    config: &TrainConfig,
) -> Result<ModelParams<S>> {
    config.validate()?;
    if new_task_ds.is_empty() {
        return Err(Error::Parameter(
            "cannot retrain on an empty dataset".into(),
        ));
    }
    let mut params = params;
    params.reinit_head(new_task_ds.num_classes, derive_seed(config.seed, TAG_HEAD))?;

    let mut optimizer = Optimizer::new(config, &params);
    optimizer.set_learning_rate(config.lr_at_epoch(1));
    let mut rng = rng_from_seed(derive_seed(config.seed, TAG_SHUFFLE));
    let mut order: Vec<usize> = (0..new_task_ds.len()).collect();
    for i in (1..order.len()).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    for chunk in order.chunks(config.batch_size) {
        let batch = Batch::from_dataset(new_task_ds, chunk);
        grad_step(&mut params, &mut optimizer, &batch, config)?;
    }
    Ok(params)
}
