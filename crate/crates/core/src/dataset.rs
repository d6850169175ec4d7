//! Synthetic datasets and the train/retrain split protocol.
//!
//! Classes are parametric textures (a class-specific frequency/orientation
//! grating with a random per-sample phase plus additive noise), so a small
//! model has something genuinely learnable and blur/noise corruptions act on
//! meaningful spatial structure. The texture family itself (orientation
//! offset, frequency scale) is derived from the dataset seed, so different
//! seeds define genuinely different tasks, not just resampled ones.

use rand::RngExt as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed, splitmix64};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Per-sample additive noise used by the generator.
const SAMPLE_NOISE_SIGMA: f64 = 0.05;

// Stream tags for deriving independent RNG streams from one seed.
const TAG_GENERATOR: u64 = 1;
const TAG_SPLIT: u64 = 2;

/// Samples plus integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset<S: Scalar> {
    /// Sample tensor with leading dimension `len()`; images are `[n, c, h, w]`.
    pub samples: Tensor<S>,
    /// One label per sample, each in `[0, num_classes)`.
    pub labels: Vec<u32>,
    pub num_classes: usize,
}

impl<S: Scalar> LabeledDataset<S> {
    pub fn new(samples: Tensor<S>, labels: Vec<u32>, num_classes: usize) -> Result<Self> {
        if samples.rows() != labels.len() {
            return Err(Error::Parameter(format!(
                "{} samples but {} labels",
                samples.rows(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= num_classes) {
            return Err(Error::Parameter(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        Ok(Self {
            samples,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Shape of one sample (without the leading dimension).
    pub fn sample_shape(&self) -> &[usize] {
        &self.samples.shape()[1..]
    }

    /// Number of samples carrying each label.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.num_classes];
        for &label in &self.labels {
            counts[label as usize] += 1;
        }
        counts
    }

    /// Sub-dataset from sample indices (kept in the given order).
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            samples: self.samples.gather_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
        }
    }
}

/// Fractions controlling [`split_for_retraining`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SplitSpec {
    /// Fraction of samples used to train the original model.
    pub original_fraction: f64,
    /// Fraction of samples forming the (to-be-shifted) retraining base.
    pub shifted_fraction: f64,
    /// Fraction of samples present in both splits.
    pub overlap_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            original_fraction: 0.70,
            shifted_fraction: 0.50,
            overlap_fraction: 0.20,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let in_range = |f: f64| f > 0.0 && f <= 1.0;
        if !in_range(self.original_fraction) || !in_range(self.shifted_fraction) {
            return Err(Error::Parameter(
                "original and shifted fractions must lie in (0, 1]".into(),
            ));
        }
        if self.overlap_fraction < 0.0 || self.overlap_fraction > 1.0 {
            return Err(Error::Parameter(
                "overlap fraction must lie in [0, 1]".into(),
            ));
        }
        if self.overlap_fraction > self.original_fraction.min(self.shifted_fraction) {
            return Err(Error::Parameter(
                "overlap fraction exceeds a split fraction".into(),
            ));
        }
        if self.original_fraction + self.shifted_fraction - self.overlap_fraction > 1.0 + 1e-12 {
            return Err(Error::Parameter(
                "original + shifted - overlap exceeds the dataset".into(),
            ));
        }
        Ok(())
    }
}

/// Rounds half away from zero.
pub fn round_half_away(x: f64) -> i64 {
    if x >= 0.0 {
        (x + 0.5).floor() as i64
    } else {
        (x - 0.5).ceil() as i64
    }
}

/// Texture family parameters derived from a dataset seed.
struct TaskStyle {
    orientation_offset: f64,
    frequency_scale: f64,
}

impl TaskStyle {
    fn from_seed(seed: u64) -> Self {
        let a = splitmix64(seed ^ 0x7461_736b_5f73_7479); // "task_sty"
        let b = splitmix64(a);
        let unit = |v: u64| (v >> 11) as f64 / (1u64 << 53) as f64;
        Self {
            orientation_offset: unit(a) * std::f64::consts::PI,
            frequency_scale: 0.8 + unit(b) * 0.45,
        }
    }
}

/// Generates a deterministic synthetic classification dataset.
///
/// Each class is a sinusoidal grating with class-specific orientation and
/// frequency; samples vary by a uniform random phase and i.i.d. additive
/// noise. Values are clipped to `[0, 1]`. Samples are grouped by class.
pub fn generate_synthetic<S: Scalar>(
    num_classes: usize,
    samples_per_class: usize,
    height: usize,
    width: usize,
    channels: usize,
    seed: u64,
) -> Result<LabeledDataset<S>> {
    if num_classes < 2 {
        return Err(Error::Parameter(format!(
            "num_classes must be >= 2, got {num_classes}"
        )));
    }
    if samples_per_class < 8 {
        return Err(Error::Parameter(format!(
            "samples_per_class must be >= 8, got {samples_per_class}"
        )));
    }
    if height == 0 || width == 0 || channels == 0 {
        return Err(Error::Parameter(format!(
            "invalid sample dimensions {channels}x{height}x{width}"
        )));
    }

    let style = TaskStyle::from_seed(seed);
    let mut rng = rng_from_seed(derive_seed(seed, TAG_GENERATOR));
    let noise = Normal::new(0.0f64, SAMPLE_NOISE_SIGMA).expect("valid sigma");

    let n = num_classes * samples_per_class;
    let mut data = Vec::with_capacity(n * channels * height * width);
    let mut labels = Vec::with_capacity(n);

    for class in 0..num_classes {
        let orientation =
            style.orientation_offset + class as f64 * std::f64::consts::PI / num_classes as f64;
        let (sin_o, cos_o) = orientation.sin_cos();
        let frequency = (2.0 + 1.2 * class as f64) * style.frequency_scale;
        for _ in 0..samples_per_class {
            let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            for channel in 0..channels {
                let channel_phase = phase + channel as f64 * 0.7;
                for y in 0..height {
                    let yn = y as f64 / height as f64;
                    for x in 0..width {
                        let xn = x as f64 / width as f64;
                        let u = xn * cos_o + yn * sin_o;
                        let wave = 0.5
                            + 0.35 * (std::f64::consts::TAU * frequency * u + channel_phase).sin();
                        let value = (wave + noise.sample(&mut rng)).clamp(0.0, 1.0);
                        data.push(S::from_f64_lossy(value));
                    }
                }
            }
            labels.push(class as u32);
        }
    }

    let samples = Tensor::new(vec![n, channels, height, width], data)?;
    LabeledDataset::new(samples, labels, num_classes)
}

/// Splits a dataset into the original-training split and the retraining base.
///
/// Cardinalities follow the fractions under round-half-away-from-zero:
/// `|original| = round(f_o * n)`, `|shifted| = round(f_s * n)`, and exactly
/// `round(f_v * n)` indices appear in both (nudged by at most one in the rare
/// sizes where independent rounding is infeasible). Sampling is stratified
/// per class and deterministic for a fixed `spec.seed`.
pub fn split_for_retraining<S: Scalar>(
    ds: &LabeledDataset<S>,
    spec: &SplitSpec,
) -> Result<(LabeledDataset<S>, LabeledDataset<S>)> {
    spec.validate()?;
    let n = ds.len();
    let k = ds.num_classes;
    if n == 0 {
        return Err(Error::Parameter("cannot split an empty dataset".into()));
    }

    let total_original = round_half_away(spec.original_fraction * n as f64) as usize;
    let total_shifted = round_half_away(spec.shifted_fraction * n as f64) as usize;
    // Independent rounding of the three targets can be off by one in total
    // (e.g. n = 995 under the defaults rounds to 697 + 498 - 199 = 996), so
    // the overlap absorbs the slack; valid fractions keep the nudge to <= 1.
    let min_overlap = (total_original + total_shifted).saturating_sub(n);
    let max_overlap = total_original.min(total_shifted);
    let total_overlap = (round_half_away(spec.overlap_fraction * n as f64) as usize)
        .clamp(min_overlap, max_overlap);
    if total_original < k || total_shifted < k {
        return Err(Error::Parameter(
            "dataset too small for every class to appear in both splits".into(),
        ));
    }

    let class_sizes = ds.class_counts();
    if class_sizes.contains(&0) {
        return Err(Error::Parameter("a class has no samples".into()));
    }

    let original_quota = apportion(total_original, &class_sizes, n, &vec![1; k], &class_sizes)?;
    let shifted_quota = apportion(total_shifted, &class_sizes, n, &vec![1; k], &class_sizes)?;

    // Overlap floors ensure original + shifted - overlap fits in each class;
    // caps keep the overlap inside both splits.
    let overlap_floor: Vec<usize> = (0..k)
        .map(|c| (original_quota[c] + shifted_quota[c]).saturating_sub(class_sizes[c]))
        .collect();
    let overlap_cap: Vec<usize> = (0..k)
        .map(|c| original_quota[c].min(shifted_quota[c]))
        .collect();
    let overlap_quota = apportion(total_overlap, &class_sizes, n, &overlap_floor, &overlap_cap)?;

    let mut per_class_indices: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &label) in ds.labels.iter().enumerate() {
        per_class_indices[label as usize].push(i);
    }

    let mut rng = rng_from_seed(derive_seed(spec.seed, TAG_SPLIT));
    let mut original_indices = Vec::with_capacity(total_original);
    let mut shifted_indices = Vec::with_capacity(total_shifted);
    for class in 0..k {
        let pool = &mut per_class_indices[class];
        shuffle(pool, &mut rng);
        let o = original_quota[class];
        let s = shifted_quota[class];
        let v = overlap_quota[class];
        // First `o` form the original split; its first `v` (a uniform subset)
        // overlap with the shifted split, which takes the rest from outside.
        original_indices.extend_from_slice(&pool[..o]);
        shifted_indices.extend_from_slice(&pool[..v]);
        shifted_indices.extend_from_slice(&pool[o..o + (s - v)]);
    }
    original_indices.sort_unstable();
    shifted_indices.sort_unstable();

    Ok((ds.subset(&original_indices), ds.subset(&shifted_indices)))
}

/// Fisher-Yates shuffle driven by the crate RNG.
fn shuffle<T>(items: &mut [T], rng: &mut crate::rng::Rng) {
    for i in (1..items.len()).rev() {
        let j = rng.random_range(0..=i);
        items.swap(i, j);
    }
}

/// Largest-remainder apportionment of `total` across classes proportional to
/// `weights`, honoring per-class floors and caps.
fn apportion(
    total: usize,
    weights: &[usize],
    weight_sum: usize,
    floors: &[usize],
    caps: &[usize],
) -> Result<Vec<usize>> {
    let floor_sum: usize = floors.iter().sum();
    let cap_sum: usize = caps.iter().sum();
    if total < floor_sum || total > cap_sum {
        return Err(Error::Parameter(format!(
            "cannot apportion {total} samples with floors summing to {floor_sum} and caps to {cap_sum}"
        )));
    }

    let quotas: Vec<f64> = weights
        .iter()
        .map(|&w| total as f64 * w as f64 / weight_sum as f64)
        .collect();
    let mut allocation: Vec<usize> = quotas
        .iter()
        .zip(floors.iter().zip(caps.iter()))
        .map(|(&q, (&lo, &hi))| (q.floor() as usize).clamp(lo, hi))
        .collect();

    // Hand out the remainder by descending fractional part, then take back any
    // overshoot caused by floors, from the classes farthest above quota.
    let mut assigned: usize = allocation.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    while assigned < total {
        let mut progressed = false;
        for &c in &order {
            if assigned == total {
                break;
            }
            if allocation[c] < caps[c] {
                allocation[c] += 1;
                assigned += 1;
                progressed = true;
            }
        }
        if !progressed {
            return Err(Error::Parameter("apportionment cannot reach target".into()));
        }
    }
    while assigned > total {
        let mut progressed = false;
        let mut over: Vec<usize> = (0..weights.len()).collect();
        over.sort_by(|&a, &b| {
            let da = allocation[a] as f64 - quotas[a];
            let db = allocation[b] as f64 - quotas[b];
            db.partial_cmp(&da).unwrap().then(a.cmp(&b))
        });
        for &c in &over {
            if assigned == total {
                break;
            }
            if allocation[c] > floors[c] {
                allocation[c] -= 1;
                assigned -= 1;
                progressed = true;
            }
        }
        if !progressed {
            return Err(Error::Parameter("apportionment cannot reach target".into()));
        }
    }
    Ok(allocation)
}
