//! Contingency tables, the adjusted-Rand-index complement, and the
//! end-to-end task-change index pipeline.
//!
//! The task index is `1 - ARI` between representation-cluster labels and the
//! true labels of a new task, computed after a single retraining epoch. It is
//! 0 for identical partitions, about 1 for random ones, and may exceed 1 when
//! the agreement is worse than chance (the value is deliberately unclipped).

use crate::cluster::{
    centroids_from_labels, kmeanspp_init, lloyd, random_init_least_entropy, InitScheme,
    DEFAULT_MAX_ITER, DEFAULT_TOL,
};
use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::nn::{extract_embeddings, retrain_one_epoch, ModelParams, TrainConfig};
use crate::rng::derive_seed;

// Stream tags for the pipeline's derived seeds.
const TAG_KMEANSPP_INIT: u64 = 10;
const TAG_LEAST_ENTROPY_INIT: u64 = 11;
use crate::scalar::Scalar;

/// Cluster-label x true-label count matrix with marginals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContingencyTable {
    /// Row-major `n_c x n_c` counts; rows are cluster labels, columns true labels.
    counts: Vec<u64>,
    n_c: usize,
    row_sums: Vec<u64>,
    col_sums: Vec<u64>,
    n: u64,
}

impl ContingencyTable {
    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn n_c(&self) -> usize {
        self.n_c
    }

    pub fn count(&self, cluster: usize, class: usize) -> u64 {
        self.counts[cluster * self.n_c + class]
    }

    pub fn row_sums(&self) -> &[u64] {
        &self.row_sums
    }

    pub fn col_sums(&self) -> &[u64] {
        &self.col_sums
    }
}

/// Builds the joint count table of cluster labels against true labels.
pub fn contingency(
    cluster_labels: &[u32],
    true_labels: &[u32],
    n_c: usize,
) -> Result<ContingencyTable> {
    if cluster_labels.len() != true_labels.len() {
        return Err(Error::Parameter(format!(
            "label arrays differ in length: {} vs {}",
            cluster_labels.len(),
            true_labels.len()
        )));
    }
    if n_c == 0 {
        return Err(Error::Parameter("n_c must be >= 1".into()));
    }
    let mut counts = vec![0u64; n_c * n_c];
    for (&cluster, &class) in cluster_labels.iter().zip(true_labels) {
        if cluster as usize >= n_c || class as usize >= n_c {
            return Err(Error::Parameter(format!(
                "label pair ({cluster}, {class}) out of range for n_c = {n_c}"
            )));
        }
        counts[cluster as usize * n_c + class as usize] += 1;
    }
    let row_sums: Vec<u64> = (0..n_c)
        .map(|i| counts[i * n_c..(i + 1) * n_c].iter().sum())
        .collect();
    let col_sums: Vec<u64> = (0..n_c)
        .map(|j| (0..n_c).map(|i| counts[i * n_c + j]).sum())
        .collect();
    let n = row_sums.iter().sum();
    Ok(ContingencyTable {
        counts,
        n_c,
        row_sums,
        col_sums,
        n,
    })
}

/// n choose 2, overflow-safe for counts up to u64 range.
fn pairs(n: u64) -> u128 {
    let n = n as u128;
    n * (n.saturating_sub(1)) / 2
}

/// Adjusted Rand Index from a contingency table: 1 for identical partitions,
/// about 0 for independent ones, negative when agreement is below chance.
/// When the denominator vanishes (both partitions trivial) the ARI is 1 by
/// convention.
pub fn adjusted_rand_index(table: &ContingencyTable) -> Result<f64> {
    if table.n < 2 {
        return Err(Error::Parameter(format!(
            "adjusted Rand index needs n >= 2, got {}",
            table.n
        )));
    }
    let sum_cells: u128 = table.counts.iter().map(|&c| pairs(c)).sum();
    let sum_rows: u128 = table.row_sums.iter().map(|&c| pairs(c)).sum();
    let sum_cols: u128 = table.col_sums.iter().map(|&c| pairs(c)).sum();
    let total = pairs(table.n);

    // Ratios move to f64; the integer pair sums above stay exact.
    let expected = (sum_rows as f64) * (sum_cols as f64) / (total as f64);
    let max_index = 0.5 * (sum_rows as f64 + sum_cols as f64);
    let denominator = max_index - expected;
    if denominator == 0.0 {
        return Ok(1.0);
    }
    Ok((sum_cells as f64 - expected) / denominator)
}

/// The task-change index: the complement of the adjusted Rand index.
pub fn resque_task_index(table: &ContingencyTable) -> Result<f64> {
    Ok(1.0 - adjusted_rand_index(table)?)
}

/// Full task-change pipeline: one retraining epoch on the new task, embedding
/// extraction, centroid initialization, Lloyd clustering, and the index.
///
/// Errors are tagged with the stage they came from.
pub fn resque_task_pipeline<S: Scalar>(
    original_params: &ModelParams<S>,
    new_task_ds: &LabeledDataset<S>,
    config: &TrainConfig,
    init_scheme: InitScheme,
) -> Result<f64> {
    let k = new_task_ds.num_classes;
    if k < 2 {
        return Err(Error::Parameter(format!(
            "task index needs at least 2 classes, got {k}"
        )));
    }
    let retrained = retrain_one_epoch(original_params.clone(), new_task_ds, config)
        .map_err(Error::in_stage("retrain_one_epoch"))?;
    let emb = extract_embeddings(&retrained, new_task_ds)
        .map_err(Error::in_stage("extract_embeddings"))?;
    let init = match init_scheme {
        InitScheme::ClassCentroids => centroids_from_labels(&emb, k),
        InitScheme::KmeansPlusPlus => kmeanspp_init(
            &emb.representations,
            k,
            derive_seed(config.seed, TAG_KMEANSPP_INIT),
        ),
        InitScheme::LeastEntropy => {
            random_init_least_entropy(&emb, k, derive_seed(config.seed, TAG_LEAST_ENTROPY_INIT))
        }
    }
    .map_err(Error::in_stage("init_centroids"))?;
    let assignment = lloyd(&emb.representations, &init, DEFAULT_TOL, DEFAULT_MAX_ITER)
        .map_err(Error::in_stage("lloyd"))?;
    let table =
        contingency(&assignment.labels, &emb.labels, k).map_err(Error::in_stage("contingency"))?;
    resque_task_index(&table).map_err(Error::in_stage("task_index"))
}
