//! Parametric image corruptions with a 10-level intensity ladder.
//!
//! Level 0 is the identity for every kind; levels 1..10 increase the ladder
//! parameter linearly. Only the relative ordering of levels matters to the
//! downstream correlation studies, so the ladders are deliberately simple.

use rand::RngExt as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{round_half_away, LabeledDataset};
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;
use crate::scalar::Scalar;

pub const MAX_LEVEL: u8 = 10;

/// Supported corruption families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Gaussian,
    Blur,
    SaltPepper,
}

impl NoiseKind {
    pub const ALL: [NoiseKind; 3] = [NoiseKind::Gaussian, NoiseKind::Blur, NoiseKind::SaltPepper];

    pub fn name(self) -> &'static str {
        match self {
            NoiseKind::Gaussian => "gaussian",
            NoiseKind::Blur => "blur",
            NoiseKind::SaltPepper => "salt_pepper",
        }
    }
}

impl std::fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(NoiseKind::Gaussian),
            "blur" => Ok(NoiseKind::Blur),
            "salt_pepper" | "salt-pepper" => Ok(NoiseKind::SaltPepper),
            other => Err(Error::Parameter(format!("unknown noise kind `{other}`"))),
        }
    }
}

/// A corruption to apply: kind, intensity level, and RNG seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub level: u8,
    pub seed: u64,
}

/// Resolved ladder parameters for one `(kind, level)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LevelParams {
    /// Additive zero-mean Gaussian noise with this standard deviation.
    Gaussian { sigma: f64 },
    /// Gaussian blur kernel: standard deviation and integer radius.
    Blur { sigma: f64, radius: usize },
    /// Fraction of pixel positions forced to 0 or 1.
    SaltPepper { flip_fraction: f64 },
}

/// Maps a ladder level to concrete corruption parameters.
pub fn level_params(kind: NoiseKind, level: u8) -> Result<LevelParams> {
    if level > MAX_LEVEL {
        return Err(Error::Parameter(format!(
            "noise level must be in 0..={MAX_LEVEL}, got {level}"
        )));
    }
    let l = f64::from(level);
    Ok(match kind {
        NoiseKind::Gaussian => LevelParams::Gaussian { sigma: 0.03 * l },
        NoiseKind::Blur => {
            let sigma = 0.15 * l;
            LevelParams::Blur {
                sigma,
                radius: (2.0 * sigma).ceil() as usize,
            }
        }
        NoiseKind::SaltPepper => LevelParams::SaltPepper {
            flip_fraction: 0.015 * l,
        },
    })
}

/// Applies a corruption to every sample. Labels are unchanged; output values
/// stay in `[0, 1]`; the result is deterministic per `(ds, spec)`.
pub fn apply_shift<S: Scalar>(
    ds: &LabeledDataset<S>,
    spec: &NoiseSpec,
) -> Result<LabeledDataset<S>> {
    let params = level_params(spec.kind, spec.level)?;
    if ds.samples.data().iter().any(|&v| {
        let v = v.as_f64();
        !(0.0..=1.0).contains(&v)
    }) {
        return Err(Error::Parameter(
            "apply_shift requires sample values in [0, 1]".into(),
        ));
    }
    if spec.level == 0 {
        return Ok(ds.clone());
    }

    let shape = ds.sample_shape();
    let (channels, height, width) = match shape {
        [c, h, w] => (*c, *h, *w),
        other => {
            return Err(Error::Parameter(format!(
                "apply_shift expects [n, c, h, w] samples, got trailing shape {other:?}"
            )))
        }
    };

    let mut out = ds.clone();
    let mut rng = rng_from_seed(spec.seed);
    match params {
        LevelParams::Gaussian { sigma } => {
            let normal = Normal::new(0.0f64, sigma).expect("valid sigma");
            for value in out.samples.data_mut() {
                let noisy = (value.as_f64() + normal.sample(&mut rng)).clamp(0.0, 1.0);
                *value = S::from_f64_lossy(noisy);
            }
        }
        LevelParams::Blur { sigma, radius } => {
            let kernel = gaussian_kernel(sigma, radius);
            for i in 0..out.len() {
                blur_sample(out.samples.row_mut(i), channels, height, width, &kernel);
            }
        }
        LevelParams::SaltPepper { flip_fraction } => {
            let pixels = height * width;
            let flips = round_half_away(flip_fraction * pixels as f64) as usize;
            for i in 0..out.len() {
                let positions = sample_without_replacement(pixels, flips, &mut rng);
                let row = out.samples.row_mut(i);
                for position in positions {
                    let value = if rng.random::<bool>() {
                        S::one()
                    } else {
                        S::zero()
                    };
                    // The chosen position flips jointly across channels.
                    for channel in 0..channels {
                        row[channel * pixels + position] = value;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Normalized 1-D Gaussian kernel of half-width `radius`.
fn gaussian_kernel(sigma: f64, radius: usize) -> Vec<f64> {
    let mut kernel = Vec::with_capacity(2 * radius + 1);
    for j in -(radius as isize)..=(radius as isize) {
        let j = j as f64;
        kernel.push((-j * j / (2.0 * sigma * sigma)).exp());
    }
    let sum: f64 = kernel.iter().sum();
    for w in &mut kernel {
        *w /= sum;
    }
    kernel
}

/// Mirror index for reflect padding (edge pixel not repeated).
fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut m = i % period;
    if m < 0 {
        m += period;
    }
    if m < n as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

/// Separable Gaussian blur of one `[c, h, w]` sample, in place.
fn blur_sample<S: Scalar>(
    row: &mut [S],
    channels: usize,
    height: usize,
    width: usize,
    kernel: &[f64],
) {
    let radius = kernel.len() / 2;
    let plane = height * width;
    let mut scratch = vec![0.0f64; plane];
    for channel in 0..channels {
        let offset = channel * plane;
        // Horizontal pass into scratch.
        for y in 0..height {
            for x in 0..width {
                let mut acc = 0.0;
                for (t, &w) in kernel.iter().enumerate() {
                    let sx = reflect(x as isize + t as isize - radius as isize, width);
                    acc += w * row[offset + y * width + sx].as_f64();
                }
                scratch[y * width + x] = acc;
            }
        }
        // Vertical pass back into the sample.
        for y in 0..height {
            for x in 0..width {
                let mut acc = 0.0;
                for (t, &w) in kernel.iter().enumerate() {
                    let sy = reflect(y as isize + t as isize - radius as isize, height);
                    acc += w * scratch[sy * width + x];
                }
                row[offset + y * width + x] = S::from_f64_lossy(acc.clamp(0.0, 1.0));
            }
        }
    }
}

/// First `count` entries of a seeded partial Fisher-Yates over `0..n`.
fn sample_without_replacement(n: usize, count: usize, rng: &mut crate::rng::Rng) -> Vec<usize> {
    let count = count.min(n);
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..count {
        let j = rng.random_range(i..n);
        pool.swap(i, j);
    }
    pool.truncate(count);
    pool
}
