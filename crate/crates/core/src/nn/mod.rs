//! Desk-scale neural networks with a designated representation layer.
//!
//! Two reference architectures: an MLP (`input -> hidden -> classes`) whose
//! representation is the hidden activation, and a small two-layer convnet
//! whose representation is the flattened output of the final convolutional
//! layer. Both train in seconds on a CPU and expose the activations feeding
//! the classifier head.

mod backprop;
mod train;

pub use backprop::{loss_and_grads, Gradients};
pub use train::{
    grad_step, param_change_interval, retrain_one_epoch, train_fixed_epochs, train_to_cutoff,
    HaltReason, Optimizer, OptimizerKind, RetrainMeasures, TrainConfig,
};

use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, Rng};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use rand::RngExt as _;

/// Architecture family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arch {
    /// Single hidden layer; the hidden activation is the representation.
    Mlp { hidden: usize },
    /// Two 3x3 stride-2 convolutions; the second one's (flattened) output is
    /// the representation.
    Convnet { channels: [usize; 2] },
}

/// Shape-level description of a model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub arch: Arch,
    /// Per-sample input shape `[c, h, w]`.
    pub input_shape: Vec<usize>,
    pub num_classes: usize,
}

const CONV_KERNEL: usize = 3;
const CONV_STRIDE: usize = 2;
const CONV_PAD: usize = 1;

/// Geometry of one parameterized layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum LayerPlan {
    Dense {
        fan_in: usize,
        fan_out: usize,
        relu: bool,
    },
    Conv {
        in_c: usize,
        in_h: usize,
        in_w: usize,
        out_c: usize,
        out_h: usize,
        out_w: usize,
    },
}

impl LayerPlan {
    pub(crate) fn weight_len(&self) -> usize {
        match *self {
            LayerPlan::Dense {
                fan_in, fan_out, ..
            } => fan_in * fan_out,
            LayerPlan::Conv { in_c, out_c, .. } => out_c * in_c * CONV_KERNEL * CONV_KERNEL,
        }
    }

    pub(crate) fn bias_len(&self) -> usize {
        match *self {
            LayerPlan::Dense { fan_out, .. } => fan_out,
            LayerPlan::Conv { out_c, .. } => out_c,
        }
    }

    pub(crate) fn fan_in(&self) -> usize {
        match *self {
            LayerPlan::Dense { fan_in, .. } => fan_in,
            LayerPlan::Conv { in_c, .. } => in_c * CONV_KERNEL * CONV_KERNEL,
        }
    }

    pub(crate) fn output_len(&self) -> usize {
        match *self {
            LayerPlan::Dense { fan_out, .. } => fan_out,
            LayerPlan::Conv {
                out_c,
                out_h,
                out_w,
                ..
            } => out_c * out_h * out_w,
        }
    }

    /// Multiply-accumulate count for one sample's forward pass.
    pub(crate) fn forward_macs(&self) -> u64 {
        match *self {
            LayerPlan::Dense {
                fan_in, fan_out, ..
            } => (fan_in * fan_out) as u64,
            LayerPlan::Conv {
                in_c,
                out_c,
                out_h,
                out_w,
                ..
            } => (out_h * out_w * out_c * in_c * CONV_KERNEL * CONV_KERNEL) as u64,
        }
    }
}

fn conv_out(dim: usize) -> usize {
    (dim + 2 * CONV_PAD - CONV_KERNEL) / CONV_STRIDE + 1
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::Parameter(format!(
                "num_classes must be >= 2, got {}",
                self.num_classes
            )));
        }
        if self.input_shape.len() != 3 || self.input_shape.contains(&0) {
            return Err(Error::Parameter(format!(
                "input shape must be [c, h, w] with positive dims, got {:?}",
                self.input_shape
            )));
        }
        match self.arch {
            Arch::Mlp { hidden: 0 } => {
                Err(Error::Parameter("hidden width must be positive".into()))
            }
            Arch::Convnet { channels } if channels.contains(&0) => Err(Error::Parameter(
                "conv channel counts must be positive".into(),
            )),
            Arch::Convnet { .. } if self.input_shape[1] < 2 || self.input_shape[2] < 2 => {
                Err(Error::Parameter("convnet needs at least 2x2 inputs".into()))
            }
            _ => Ok(()),
        }
    }

    /// The ordered per-layer geometry. The second-to-last layer's output is
    /// the representation; the last layer is always the classifier head.
    pub(crate) fn layer_plans(&self) -> Vec<LayerPlan> {
        let (c, h, w) = (
            self.input_shape[0],
            self.input_shape[1],
            self.input_shape[2],
        );
        match self.arch {
            Arch::Mlp { hidden } => vec![
                LayerPlan::Dense {
                    fan_in: c * h * w,
                    fan_out: hidden,
                    relu: true,
                },
                LayerPlan::Dense {
                    fan_in: hidden,
                    fan_out: self.num_classes,
                    relu: false,
                },
            ],
            Arch::Convnet { channels } => {
                let (h1, w1) = (conv_out(h), conv_out(w));
                let (h2, w2) = (conv_out(h1), conv_out(w1));
                vec![
                    LayerPlan::Conv {
                        in_c: c,
                        in_h: h,
                        in_w: w,
                        out_c: channels[0],
                        out_h: h1,
                        out_w: w1,
                    },
                    LayerPlan::Conv {
                        in_c: channels[0],
                        in_h: h1,
                        in_w: w1,
                        out_c: channels[1],
                        out_h: h2,
                        out_w: w2,
                    },
                    LayerPlan::Dense {
                        fan_in: channels[1] * h2 * w2,
                        fan_out: self.num_classes,
                        relu: false,
                    },
                ]
            }
        }
    }

    /// Width of the flattened representation.
    pub fn representation_dim(&self) -> usize {
        let plans = self.layer_plans();
        plans[plans.len() - 2].output_len()
    }

    /// Per-sample forward multiply-accumulate count over all layers.
    pub fn forward_macs_per_sample(&self) -> u64 {
        self.layer_plans().iter().map(LayerPlan::forward_macs).sum()
    }

    /// Total parameter count (weights and biases) across layers.
    pub fn param_count(&self) -> usize {
        self.layer_plans()
            .iter()
            .map(|p| p.weight_len() + p.bias_len())
            .sum()
    }
}

/// One layer's parameters (or a like-shaped gradient buffer).
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<S: Scalar> {
    pub weights: Vec<S>,
    pub bias: Vec<S>,
}

impl<S: Scalar> LayerParams<S> {
    fn zeros_like(plan: &LayerPlan) -> Self {
        Self {
            weights: vec![S::zero(); plan.weight_len()],
            bias: vec![S::zero(); plan.bias_len()],
        }
    }
}

/// A model's full parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<S: Scalar> {
    pub spec: ModelSpec,
    pub layers: Vec<LayerParams<S>>,
}

impl<S: Scalar> ModelParams<S> {
    /// He-uniform initialization, deterministic per seed.
    pub fn init(spec: ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = rng_from_seed(seed);
        let layers = spec
            .layer_plans()
            .iter()
            .map(|plan| init_layer(plan, &mut rng))
            .collect();
        Ok(Self { spec, layers })
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Replaces the classifier head with a freshly initialized one of a new
    /// width. All other layers keep their weights.
    pub fn reinit_head(&mut self, num_classes: usize, seed: u64) -> Result<()> {
        if num_classes < 2 {
            return Err(Error::Parameter(format!(
                "num_classes must be >= 2, got {num_classes}"
            )));
        }
        self.spec.num_classes = num_classes;
        let plans = self.spec.layer_plans();
        let head_plan = plans.last().expect("models always have a head");
        let mut rng = rng_from_seed(seed);
        *self.layers.last_mut().expect("models always have a head") =
            init_layer(head_plan, &mut rng);
        Ok(())
    }

    /// Flattens all parameters (per layer: weights then bias) into one vector.
    pub fn to_flat(&self) -> Vec<S> {
        let mut flat = Vec::new();
        for layer in &self.layers {
            flat.extend_from_slice(&layer.weights);
            flat.extend_from_slice(&layer.bias);
        }
        flat
    }

    /// Rebuilds parameters from a flat vector produced by [`Self::to_flat`].
    pub fn from_flat(spec: ModelSpec, flat: &[S]) -> Result<Self> {
        spec.validate()?;
        let plans = spec.layer_plans();
        let expected: usize = plans.iter().map(|p| p.weight_len() + p.bias_len()).sum();
        if flat.len() != expected {
            return Err(Error::Parameter(format!(
                "flat parameter vector has {} values, spec needs {expected}",
                flat.len()
            )));
        }
        let mut layers = Vec::with_capacity(plans.len());
        let mut offset = 0;
        for plan in &plans {
            let w = plan.weight_len();
            let b = plan.bias_len();
            layers.push(LayerParams {
                weights: flat[offset..offset + w].to_vec(),
                bias: flat[offset + w..offset + w + b].to_vec(),
            });
            offset += w + b;
        }
        Ok(Self { spec, layers })
    }
}

fn init_layer<S: Scalar>(plan: &LayerPlan, rng: &mut Rng) -> LayerParams<S> {
    let bound = (6.0 / plan.fan_in() as f64).sqrt();
    LayerParams {
        weights: (0..plan.weight_len())
            .map(|_| S::from_f64_lossy(rng.random_range(-bound..bound)))
            .collect(),
        bias: vec![S::zero(); plan.bias_len()],
    }
}

/// A batch of inputs with labels, ready for the forward pass.
#[derive(Debug, Clone)]
pub struct Batch<S: Scalar> {
    pub inputs: Tensor<S>,
    pub labels: Vec<u32>,
}

impl<S: Scalar> Batch<S> {
    pub fn from_dataset(ds: &LabeledDataset<S>, indices: &[usize]) -> Self {
        Self {
            inputs: ds.samples.gather_rows(indices),
            labels: indices.iter().map(|&i| ds.labels[i]).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Flattened representations with their labels.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBatch<S: Scalar> {
    /// `[n, rep_dim]` representation rows.
    pub representations: Tensor<S>,
    pub labels: Vec<u32>,
}

impl<S: Scalar> EmbeddingBatch<S> {
    pub fn new(representations: Tensor<S>, labels: Vec<u32>) -> Result<Self> {
        if representations.rows() != labels.len() {
            return Err(Error::Parameter(format!(
                "{} representation rows but {} labels",
                representations.rows(),
                labels.len()
            )));
        }
        Ok(Self {
            representations,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Logits and representations from one forward pass.
pub struct ForwardOutput<S: Scalar> {
    pub logits: Tensor<S>,
    pub representations: Tensor<S>,
}

/// Runs the model on a batch of inputs.
///
/// Representations are taken at the layer feeding the classifier head, after
/// its activation, flattened per sample.
pub fn forward<S: Scalar>(params: &ModelParams<S>, inputs: &Tensor<S>) -> Result<ForwardOutput<S>> {
    let activations = backprop::forward_all(params, inputs)?;
    let n = activations.len();
    let rows = inputs.rows();
    let representations = activations[n - 2]
        .clone()
        .reshape(vec![rows, params.spec.representation_dim()])?;
    Ok(ForwardOutput {
        logits: activations[n - 1].clone(),
        representations,
    })
}

/// Forward-only embedding extraction over a whole dataset.
pub fn extract_embeddings<S: Scalar>(
    params: &ModelParams<S>,
    ds: &LabeledDataset<S>,
) -> Result<EmbeddingBatch<S>> {
    let rep_dim = params.spec.representation_dim();
    let mut rows = Vec::with_capacity(ds.len() * rep_dim);
    const CHUNK: usize = 256;
    let mut start = 0;
    while start < ds.len() {
        let end = (start + CHUNK).min(ds.len());
        let indices: Vec<usize> = (start..end).collect();
        let batch = ds.samples.gather_rows(&indices);
        let out = forward(params, &batch)?;
        rows.extend_from_slice(out.representations.data());
        start = end;
    }
    EmbeddingBatch::new(
        Tensor::new(vec![ds.len(), rep_dim], rows)?,
        ds.labels.clone(),
    )
}

/// Evaluation accuracy (argmax of logits vs labels; ties pick the lowest
/// class index).
pub fn accuracy<S: Scalar>(params: &ModelParams<S>, batch: &Batch<S>) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Parameter("cannot evaluate an empty batch".into()));
    }
    let out = forward(params, &batch.inputs)?;
    let mut correct = 0usize;
    for (i, &label) in batch.labels.iter().enumerate() {
        let row = out.logits.row(i);
        let mut best = 0usize;
        for (j, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = j;
            }
        }
        if best == label as usize {
            correct += 1;
        }
    }
    Ok(correct as f64 / batch.len() as f64)
}
