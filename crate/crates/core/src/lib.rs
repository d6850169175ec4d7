//! Forward-pass indices that estimate the cost of retraining a model, plus
//! everything needed to validate them at desk scale: synthetic datasets with
//! a train/retrain split protocol, parametric image corruptions, a small
//! deterministic trainer with full cost instrumentation, KMeans clustering,
//! and correlation statistics.
//!
//! Two indices are provided:
//!
//! - **distribution-shift index** ([`representation::resque_dist`]): the mean
//!   inverse-cosine angle between per-class normalized summed embeddings of an
//!   original and a shifted dataset, computed from forward passes only.
//! - **task-change index** ([`randindex::resque_task_pipeline`]): one minus
//!   the adjusted Rand index between representation-cluster labels and true
//!   labels of a new task, after a single retraining epoch.
//!
//! The numeric core is generic over the scalar payload via [`scalar::Scalar`]
//! (f32 or f64); the concrete aliases below cover the common case. Derived
//! statistics (indices, inertias, p-values) are always f64.

pub mod cluster;
pub mod dataset;
pub mod error;
pub mod nn;
pub mod randindex;
pub mod representation;
pub mod rng;
pub mod scalar;
pub mod shift;
pub mod stats;
pub mod tensor;
pub mod tensor_file;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// f32 payloads: what the on-disk format stores and the harness trains with.
pub type Tensor32 = tensor::Tensor<f32>;
pub type Dataset32 = dataset::LabeledDataset<f32>;
pub type ModelParams32 = nn::ModelParams<f32>;
pub type EmbeddingBatch32 = nn::EmbeddingBatch<f32>;

/// f64 payloads: used by gradient checks and high-precision verification.
pub type Tensor64 = tensor::Tensor<f64>;
pub type Dataset64 = dataset::LabeledDataset<f64>;
pub type ModelParams64 = nn::ModelParams<f64>;
pub type EmbeddingBatch64 = nn::EmbeddingBatch<f64>;
