//! Class-wise embedding aggregation and the distribution-shift index.
//!
//! Per class, all representation rows are summed (in f64, regardless of the
//! payload precision) and normalized to a unit vector. The index between two
//! such sets is the mean inverse-cosine angle between matching class vectors,
//! so it lives in `[0, pi]`: 0 means identical directions, pi opposite ones.

use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::EmbeddingBatch;
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::tensor_file::{read_tensor_file, write_tensor_file};

/// Per-class unit-norm summed representation vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassEmbeddingSet {
    /// `k * rep_dim` values, row per class.
    vectors: Vec<f64>,
    num_classes: usize,
    rep_dim: usize,
}

impl ClassEmbeddingSet {
    /// Builds a set from unit-norm rows. Intended for tests and interop;
    /// [`class_embeddings`] is the normal constructor.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let num_classes = rows.len();
        if num_classes == 0 {
            return Err(Error::Parameter("need at least one class vector".into()));
        }
        let rep_dim = rows[0].len();
        let mut vectors = Vec::with_capacity(num_classes * rep_dim);
        for (l, row) in rows.into_iter().enumerate() {
            if row.len() != rep_dim {
                return Err(Error::Parameter(format!(
                    "class {l} vector has length {}, expected {rep_dim}",
                    row.len()
                )));
            }
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(Error::DegenerateEmbedding(l));
            }
            vectors.extend(row.into_iter().map(|v| v / norm));
        }
        Ok(Self {
            vectors,
            num_classes,
            rep_dim,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn rep_dim(&self) -> usize {
        self.rep_dim
    }

    pub fn class_vector(&self, class: usize) -> &[f64] {
        &self.vectors[class * self.rep_dim..(class + 1) * self.rep_dim]
    }

    /// Serializes as a `k x rep_dim` matrix with the class index as label.
    pub fn write_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let tensor = Tensor::new(
            vec![self.num_classes, self.rep_dim],
            self.vectors.iter().map(|&v| v as f32).collect(),
        )?;
        let labels: Vec<u32> = (0..self.num_classes as u32).collect();
        write_tensor_file(path, &tensor, Some(&labels))
    }

    /// Reads a file written by [`Self::write_file`], re-normalizing to absorb
    /// the f32 round trip.
    pub fn read_file(path: impl AsRef<Path>) -> Result<Self> {
        let (tensor, labels) = read_tensor_file(path)?;
        if tensor.shape().len() != 2 {
            return Err(Error::Parameter(format!(
                "class embedding file must be 2-d, got shape {:?}",
                tensor.shape()
            )));
        }
        let expected: Vec<u32> = (0..tensor.rows() as u32).collect();
        if labels.as_deref() != Some(&expected[..]) {
            return Err(Error::Parameter(
                "class embedding file must carry class indices 0..k as labels".into(),
            ));
        }
        let rows = (0..tensor.rows())
            .map(|i| tensor.row(i).iter().map(|&v| f64::from(v)).collect())
            .collect();
        Self::from_rows(rows)
    }
}

/// Sums each class's representation rows and normalizes the result.
///
/// Every class in `0..k` must have at least one row, and no class sum may be
/// the zero vector.
pub fn class_embeddings<S: Scalar>(emb: &EmbeddingBatch<S>, k: usize) -> Result<ClassEmbeddingSet> {
    if k == 0 {
        return Err(Error::Parameter("need at least one class".into()));
    }
    let rep_dim = emb.representations.row_len();
    let mut sums = vec![0.0f64; k * rep_dim];
    let mut counts = vec![0usize; k];
    for (i, &label) in emb.labels.iter().enumerate() {
        let label = label as usize;
        if label >= k {
            return Err(Error::Parameter(format!(
                "label {label} out of range for {k} classes"
            )));
        }
        counts[label] += 1;
        let sum = &mut sums[label * rep_dim..(label + 1) * rep_dim];
        for (s, &v) in sum.iter_mut().zip(emb.representations.row(i)) {
            *s += v.as_f64();
        }
    }
    if let Some(missing) = counts.iter().position(|&c| c == 0) {
        return Err(Error::MissingClass(missing));
    }
    for class in 0..k {
        let sum = &mut sums[class * rep_dim..(class + 1) * rep_dim];
        let norm = sum.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::DegenerateEmbedding(class));
        }
        sum.iter_mut().for_each(|v| *v /= norm);
    }
    Ok(ClassEmbeddingSet {
        vectors: sums,
        num_classes: k,
        rep_dim,
    })
}

/// Mean inverse-cosine angle between matching class vectors of two sets.
///
/// Dot products are clamped to `[-1, 1]` before `acos`, so the result is
/// always in `[0, pi]` even under floating-point drift.
pub fn resque_dist(a: &ClassEmbeddingSet, b: &ClassEmbeddingSet) -> Result<f64> {
    if a.num_classes != b.num_classes {
        return Err(Error::Parameter(format!(
            "class counts differ: {} vs {}",
            a.num_classes, b.num_classes
        )));
    }
    if a.rep_dim != b.rep_dim {
        return Err(Error::Parameter(format!(
            "representation dims differ: {} vs {}",
            a.rep_dim, b.rep_dim
        )));
    }
    let mut total = 0.0f64;
    for class in 0..a.num_classes {
        let dot: f64 = a
            .class_vector(class)
            .iter()
            .zip(b.class_vector(class))
            .map(|(x, y)| x * y)
            .sum();
        total += dot.clamp(-1.0, 1.0).acos();
    }
    Ok(total / a.num_classes as f64)
}
