//! Dataset and model-checkpoint files on top of the binary tensor format.
//!
//! Datasets are `[n, c, h, w]` tensors with per-sample labels. Checkpoints
//! are the flattened parameter vector (per layer: weights then bias); the
//! layer shapes come from the experiment config, and the classifier width is
//! inferred from the vector length, so one config serves models whose head
//! was rebuilt for a different task.

use std::path::Path;

use resque_core::dataset::LabeledDataset;
use resque_core::nn::ModelParams;
use resque_core::tensor::Tensor;
use resque_core::tensor_file::{read_tensor_file, write_tensor_file};
use resque_core::{Dataset32, ModelParams32};

use crate::config::ModelConfig;
use crate::error::{HarnessError, Result};

pub fn save_dataset(path: impl AsRef<Path>, ds: &Dataset32) -> Result<()> {
    write_tensor_file(path, &ds.samples, Some(&ds.labels))?;
    Ok(())
}

/// Loads a dataset file; the class count is the highest label plus one.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset32> {
    let display = path.as_ref().display().to_string();
    let (samples, labels) = read_tensor_file(path)?;
    let labels = labels.ok_or_else(|| {
        HarnessError::Config(format!("{display}: dataset file carries no labels"))
    })?;
    if samples.shape().len() != 4 {
        return Err(HarnessError::Config(format!(
            "{display}: expected [n, c, h, w] samples, got shape {:?}",
            samples.shape()
        )));
    }
    let num_classes = labels.iter().max().map_or(0, |&m| m as usize + 1);
    if num_classes < 2 {
        return Err(HarnessError::Config(format!(
            "{display}: dataset needs at least 2 classes"
        )));
    }
    Ok(LabeledDataset::new(samples, labels, num_classes)?)
}

pub fn save_model(path: impl AsRef<Path>, params: &ModelParams32) -> Result<()> {
    let flat = params.to_flat();
    let tensor = Tensor::new(vec![flat.len()], flat)?;
    write_tensor_file(path, &tensor, None)?;
    Ok(())
}

/// Loads a checkpoint, inferring the classifier width from the parameter
/// count given the configured architecture and input shape.
pub fn load_model(
    path: impl AsRef<Path>,
    model: &ModelConfig,
    input_shape: Vec<usize>,
) -> Result<ModelParams32> {
    let display = path.as_ref().display().to_string();
    let (tensor, labels) = read_tensor_file(path)?;
    if labels.is_some() || tensor.shape().len() != 1 {
        return Err(HarnessError::Config(format!(
            "{display}: not a parameter checkpoint"
        )));
    }
    let total = tensor.len();

    // Parameters in everything but the head, and the per-class head cost.
    let probe = model.to_spec(input_shape.clone(), 2);
    let per_class = probe.representation_dim() + 1;
    let body = probe.param_count() - 2 * per_class;
    if total <= body || !(total - body).is_multiple_of(per_class) {
        return Err(HarnessError::Config(format!(
            "{display}: {total} parameters do not fit the configured architecture"
        )));
    }
    let num_classes = (total - body) / per_class;
    if num_classes < 2 {
        return Err(HarnessError::Config(format!(
            "{display}: inferred class count {num_classes} is invalid"
        )));
    }
    let spec = model.to_spec(input_shape, num_classes);
    Ok(ModelParams::from_flat(spec, tensor.data())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{ArchKind, ModelConfig};
    use resque_core::dataset::generate_synthetic;

    #[test]
    fn dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.rsqe");
        let ds = generate_synthetic::<f32>(3, 10, 4, 4, 1, 5).unwrap();
        save_dataset(&path, &ds).unwrap();
        let back = load_dataset(&path).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn model_round_trip_infers_head_width() {
        let dir = tempfile::tempdir().unwrap();
        let config = ModelConfig {
            arch: ArchKind::Convnet,
            hidden: 64,
            channels: [4, 8],
        };
        for k in [2usize, 5, 9] {
            let spec = config.to_spec(vec![1, 8, 8], k);
            let params = ModelParams::<f32>::init(spec, 3).unwrap();
            let path = dir.path().join(format!("model{k}.rsqe"));
            save_model(&path, &params).unwrap();
            let back = load_model(&path, &config, vec![1, 8, 8]).unwrap();
            assert_eq!(back, params);
        }
    }

    #[test]
    fn model_load_rejects_wrong_architecture() {
        let dir = tempfile::tempdir().unwrap();
        let config = ModelConfig {
            arch: ArchKind::Mlp,
            hidden: 64,
            channels: [8, 16],
        };
        let params = ModelParams::<f32>::init(config.to_spec(vec![1, 8, 8], 3), 0).unwrap();
        let path = dir.path().join("model.rsqe");
        save_model(&path, &params).unwrap();
        let other = ModelConfig {
            arch: ArchKind::Mlp,
            hidden: 63,
            channels: [8, 16],
        };
        assert!(load_model(&path, &other, vec![1, 8, 8]).is_err());
    }
}
