//! Experiment configuration: a TOML file describing the dataset, model,
//! split protocol, training hyperparameters, and the suite roster.

use std::path::Path;

use serde::{Deserialize, Serialize};

use resque_core::cluster::InitScheme;
use resque_core::dataset::SplitSpec;
use resque_core::nn::{Arch, ModelSpec, TrainConfig};
use resque_core::shift::{NoiseKind, MAX_LEVEL};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub num_classes: usize,
    pub samples_per_class: usize,
    pub height: usize,
    pub width: usize,
    #[serde(default = "one")]
    pub channels: usize,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> usize {
    1
}

impl DatasetConfig {
    pub fn input_shape(&self) -> Vec<usize> {
        vec![self.channels, self.height, self.width]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchKind {
    Mlp,
    Convnet,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub arch: ArchKind,
    /// Hidden width (MLP).
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    /// Channel counts of the two conv layers (convnet).
    #[serde(default = "default_channels")]
    pub channels: [usize; 2],
}

fn default_hidden() -> usize {
    64
}

fn default_channels() -> [usize; 2] {
    [8, 16]
}

impl ModelConfig {
    pub fn to_spec(&self, input_shape: Vec<usize>, num_classes: usize) -> ModelSpec {
        ModelSpec {
            arch: match self.arch {
                ArchKind::Mlp => Arch::Mlp {
                    hidden: self.hidden,
                },
                ArchKind::Convnet => Arch::Convnet {
                    channels: self.channels,
                },
            },
            input_shape,
            num_classes,
        }
    }
}

/// One noise roster entry: a kind at one level (`level`) or several (`levels`).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseEntry {
    pub kind: NoiseKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<Vec<u8>>,
    /// Fixed corruption seed; derived from the run seed when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl NoiseEntry {
    pub fn expand(&self) -> Vec<(NoiseKind, u8, Option<u64>)> {
        match (&self.level, &self.levels) {
            (Some(level), None) => vec![(self.kind, *level, self.seed)],
            (None, Some(levels)) => levels.iter().map(|&l| (self.kind, l, self.seed)).collect(),
            _ => Vec::new(), // rejected by validate()
        }
    }
}

/// One task-change roster entry: an original task and a target task, each a
/// (generator seed, class count) pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskPair {
    pub original_seed: u64,
    pub original_classes: usize,
    pub target_seed: u64,
    pub target_classes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskMode {
    /// Retrain to the cutoff and record the cost measures.
    Measures,
    /// Retrain for a fixed number of epochs and record peak accuracy.
    Peak,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    /// Run seeds; every cell is executed once per seed.
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Also train a from-scratch baseline per distribution cell.
    #[serde(default = "default_true")]
    pub with_scratch: bool,
    #[serde(default = "default_task_mode")]
    pub task_mode: TaskMode,
    /// Epoch budget for peak mode.
    #[serde(default = "default_fixed_epochs")]
    pub fixed_epochs: usize,
    #[serde(default)]
    pub init_scheme: InitScheme,
}

fn default_seeds() -> Vec<u64> {
    vec![1]
}

fn default_true() -> bool {
    true
}

fn default_task_mode() -> TaskMode {
    TaskMode::Measures
}

fn default_fixed_epochs() -> usize {
    20
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            seeds: default_seeds(),
            with_scratch: true,
            task_mode: default_task_mode(),
            fixed_epochs: default_fixed_epochs(),
            init_scheme: InitScheme::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub model: ModelConfig,
    #[serde(default = "default_split")]
    pub split: SplitSpec,
    pub train: TrainConfig,
    /// Hyperparameters for retraining runs; defaults to `train`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retrain: Option<TrainConfig>,
    #[serde(default)]
    pub suite: SuiteConfig,
    #[serde(default, rename = "noise", skip_serializing_if = "Vec::is_empty")]
    pub noises: Vec<NoiseEntry>,
    #[serde(default, rename = "task", skip_serializing_if = "Vec::is_empty")]
    pub tasks: Vec<TaskPair>,
}

fn default_split() -> SplitSpec {
    SplitSpec::default()
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| {
            HarnessError::Config(format!("cannot read {}: {e}", path.as_ref().display()))
        })?;
        let config: ExperimentConfig =
            toml::from_str(&text).map_err(|e| HarnessError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        if self.dataset.num_classes < 2 {
            return bad("dataset.num_classes must be >= 2".into());
        }
        if self.dataset.samples_per_class < 8 {
            return bad("dataset.samples_per_class must be >= 8".into());
        }
        self.split
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        self.train
            .validate()
            .map_err(|e| HarnessError::Config(format!("train: {e}")))?;
        if let Some(retrain) = &self.retrain {
            retrain
                .validate()
                .map_err(|e| HarnessError::Config(format!("retrain: {e}")))?;
        }
        if self.suite.seeds.is_empty() {
            return bad("suite.seeds needs at least one seed".into());
        }
        if self.suite.fixed_epochs == 0 {
            return bad("suite.fixed_epochs must be >= 1".into());
        }
        for (i, entry) in self.noises.iter().enumerate() {
            match (&entry.level, &entry.levels) {
                (Some(_), Some(_)) | (None, None) => {
                    return bad(format!(
                        "noise[{i}]: give exactly one of `level` or `levels`"
                    ));
                }
                _ => {}
            }
            for (_, level, _) in entry.expand() {
                if level > MAX_LEVEL {
                    return bad(format!("noise[{i}]: level {level} exceeds {MAX_LEVEL}"));
                }
            }
        }
        for (i, pair) in self.tasks.iter().enumerate() {
            if pair.original_classes < 2 || pair.target_classes < 2 {
                return bad(format!("task[{i}]: class counts must be >= 2"));
            }
        }
        Ok(())
    }

    /// The retraining hyperparameters (falls back to `train`).
    pub fn retrain_config(&self) -> &TrainConfig {
        self.retrain.as_ref().unwrap_or(&self.train)
    }

    /// Model spec for the configured dataset at a given class count.
    pub fn model_spec(&self, num_classes: usize) -> ModelSpec {
        self.model.to_spec(self.dataset.input_shape(), num_classes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[dataset]
num_classes = 3
samples_per_class = 20
height = 8
width = 8

[model]
arch = "mlp"

[train]
optimizer = "adam"
learning_rate = 0.003
batch_size = 16
cutoff_accuracy = 0.9
max_epochs = 30
seed = 0

[[noise]]
kind = "gaussian"
levels = [1, 5, 10]
"#;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let config: ExperimentConfig = toml::from_str(MINIMAL).unwrap();
        config.validate().unwrap();
        assert_eq!(config.dataset.channels, 1);
        assert_eq!(config.split.original_fraction, 0.70);
        assert_eq!(config.suite.seeds, vec![1]);
        assert_eq!(config.noises[0].expand().len(), 3);
        assert!(config.retrain.is_none());
        assert_eq!(config.retrain_config().batch_size, 16);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let with_typo = MINIMAL.replace("samples_per_class", "samples_per_klass");
        assert!(toml::from_str::<ExperimentConfig>(&with_typo).is_err());
    }

    #[test]
    fn noise_entry_needs_exactly_one_level_form() {
        let both = MINIMAL.replace("levels = [1, 5, 10]", "levels = [1]\nlevel = 2");
        let config: ExperimentConfig = toml::from_str(&both).unwrap();
        assert!(config.validate().is_err());
    }

    #[test]
    fn level_range_is_checked() {
        let config: ExperimentConfig =
            toml::from_str(&MINIMAL.replace("[1, 5, 10]", "[1, 11]")).unwrap();
        assert!(config.validate().is_err());
    }

    #[test]
    fn shipped_example_configs_are_valid() {
        let root = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
        for name in ["distribution.toml", "task.toml"] {
            let config = ExperimentConfig::load(root.join(name)).unwrap();
            config.validate().unwrap();
        }
    }
}
