//! Training-dependent fixtures: the reference synthetic task is learnable,
//! trained embeddings separate classes better than raw pixels, and the task
//! pipeline ranks a self-task below a label-scrambled one.

use resque_core::cluster::{centroids_from_labels, InitScheme};
use resque_core::dataset::{generate_synthetic, LabeledDataset};
use resque_core::nn::{
    extract_embeddings, train_to_cutoff, Arch, EmbeddingBatch, ModelParams, ModelSpec,
    OptimizerKind, TrainConfig,
};
use resque_core::randindex::resque_task_pipeline;
use resque_core::{Dataset32, Scalar};

fn reference_dataset() -> Dataset32 {
    generate_synthetic::<f32>(5, 100, 16, 16, 1, 1).unwrap()
}

fn reference_mlp(seed: u64) -> ModelParams<f32> {
    ModelParams::init(
        ModelSpec {
            arch: Arch::Mlp { hidden: 64 },
            input_shape: vec![1, 16, 16],
            num_classes: 5,
        },
        seed,
    )
    .unwrap()
}

fn train_config(cutoff: f64, max_epochs: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        optimizer: OptimizerKind::Adam,
        learning_rate: 0.003,
        lr_decay_epochs: vec![],
        lr_decay_factor: 10.0,
        weight_decay: 1e-4,
        batch_size: 32,
        cutoff_accuracy: cutoff,
        max_epochs,
        // Evaluate on the training data itself: this fixture pins train
        // accuracy, not generalization.
        eval_fraction: 0.0,
        seed,
    }
}

/// Nearest-centroid classification accuracy of rows against per-class means.
fn nearest_centroid_accuracy<S: Scalar>(emb: &EmbeddingBatch<S>, k: usize) -> f64 {
    let centroids = centroids_from_labels(emb, k).unwrap();
    let mut correct = 0usize;
    for (i, &label) in emb.labels.iter().enumerate() {
        let row = emb.representations.row(i);
        let mut best = 0usize;
        let mut best_dist = f64::INFINITY;
        for c in 0..k {
            let d: f64 = row
                .iter()
                .zip(centroids.centroid(c))
                .map(|(&x, y)| (x.as_f64() - y) * (x.as_f64() - y))
                .sum();
            if d < best_dist {
                best_dist = d;
                best = c;
            }
        }
        if best == label as usize {
            correct += 1;
        }
    }
    correct as f64 / emb.len() as f64
}

#[test]
fn reference_mlp_learns_the_synthetic_task() {
    let ds = reference_dataset();
    let cfg = train_config(0.95, 30, 1);
    let (_, measures) = train_to_cutoff(reference_mlp(1), &ds, &cfg).unwrap();
    assert!(
        measures.reached_cutoff,
        "did not reach 95% train accuracy in 30 epochs: trace {:?}",
        measures.accuracy_trace
    );
    assert!(measures.epochs <= 30);
    // Frozen from the first reference run; determinism keeps it stable.
    assert_eq!(measures.epochs, 3);
}

#[test]
fn trained_embeddings_separate_classes_better_than_pixels() {
    let ds = reference_dataset();
    let cfg = train_config(0.95, 30, 2);
    let (trained, _) = train_to_cutoff(reference_mlp(2), &ds, &cfg).unwrap();

    let trained_emb = extract_embeddings(&trained, &ds).unwrap();
    let pixel_emb = EmbeddingBatch::new(
        ds.samples.clone().reshape(vec![ds.len(), 256]).unwrap(),
        ds.labels.clone(),
    )
    .unwrap();

    let trained_acc = nearest_centroid_accuracy(&trained_emb, 5);
    let pixel_acc = nearest_centroid_accuracy(&pixel_emb, 5);
    assert!(
        trained_acc >= pixel_acc,
        "trained {trained_acc} < pixels {pixel_acc}"
    );
}

#[test]
fn self_task_scores_below_label_scrambled_task() {
    let ds = generate_synthetic::<f32>(4, 30, 8, 8, 1, 6).unwrap();
    let cfg = TrainConfig {
        optimizer: OptimizerKind::Adam,
        learning_rate: 0.003,
        lr_decay_epochs: vec![],
        lr_decay_factor: 10.0,
        weight_decay: 1e-4,
        batch_size: 32,
        cutoff_accuracy: 0.95,
        max_epochs: 30,
        eval_fraction: 0.0,
        seed: 3,
    };
    let (trained, measures) = train_to_cutoff(
        ModelParams::init(
            ModelSpec {
                arch: Arch::Mlp { hidden: 64 },
                input_shape: vec![1, 8, 8],
                num_classes: 4,
            },
            3,
        )
        .unwrap(),
        &ds,
        &cfg,
    )
    .unwrap();
    assert!(measures.reached_cutoff);

    // A per-sample shuffle of the labels: the index is invariant to label
    // renaming, so the scramble must break the sample-to-class pairing.
    let scrambled = {
        use rand::RngExt as _;
        let mut labels = ds.labels.clone();
        let mut rng = resque_core::rng::rng_from_seed(17);
        for i in (1..labels.len()).rev() {
            let j = rng.random_range(0..=i);
            labels.swap(i, j);
        }
        LabeledDataset::new(ds.samples.clone(), labels, 4).unwrap()
    };

    let self_index = resque_task_pipeline(&trained, &ds, &cfg, InitScheme::ClassCentroids).unwrap();
    let scrambled_index =
        resque_task_pipeline(&trained, &scrambled, &cfg, InitScheme::ClassCentroids).unwrap();
    assert!(
        self_index <= scrambled_index,
        "self {self_index} vs scrambled {scrambled_index}"
    );
}
