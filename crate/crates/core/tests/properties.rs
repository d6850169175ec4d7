//! Property tests for the cross-module invariants.

use proptest::prelude::*;

use resque_core::dataset::{generate_synthetic, round_half_away, split_for_retraining, SplitSpec};
use resque_core::representation::{resque_dist, ClassEmbeddingSet};
use resque_core::tensor_file::{read_tensor_file, write_tensor_file};
use resque_core::Tensor32;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// File round-trip is the identity on (shape, data, labels), bit for bit.
    #[test]
    fn tensor_file_round_trip(
        rows in 1usize..6,
        cols in 1usize..8,
        with_labels in any::<bool>(),
        seed in any::<u32>(),
    ) {
        let mut value = seed as f32;
        let data: Vec<f32> = (0..rows * cols)
            .map(|i| {
                value = (value * 1.31 + i as f32 * 0.7).sin();
                value
            })
            .collect();
        let tensor = Tensor32::new(vec![rows, cols], data).unwrap();
        let labels: Option<Vec<u32>> =
            with_labels.then(|| (0..rows as u32).map(|i| i * 3 + seed % 5).collect());

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.rsqe");
        write_tensor_file(&path, &tensor, labels.as_deref()).unwrap();
        let (back, back_labels) = read_tensor_file(&path).unwrap();

        prop_assert_eq!(back.shape(), tensor.shape());
        let bits: Vec<u32> = tensor.data().iter().map(|v| v.to_bits()).collect();
        let back_bits: Vec<u32> = back.data().iter().map(|v| v.to_bits()).collect();
        prop_assert_eq!(bits, back_bits);
        prop_assert_eq!(back_labels, labels);
    }

    /// The shift index is exactly symmetric and always lands in [0, pi].
    #[test]
    fn resque_dist_symmetric_and_in_range(
        k in 1usize..5,
        dim in 1usize..6,
        seed in any::<u64>(),
    ) {
        let mut state = seed | 1;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let mut rows = || -> Vec<Vec<f64>> {
            (0..k).map(|_| (0..dim).map(|_| next()).collect()).collect()
        };
        let first = rows();
        let second = rows();
        let make = |rows: Vec<Vec<f64>>| ClassEmbeddingSet::from_rows(rows);
        let (Ok(a), Ok(b)) = (make(first), make(second)) else {
            // A sampled row was exactly zero; nothing to check.
            return Ok(());
        };
        let ab = resque_dist(&a, &b).unwrap();
        let ba = resque_dist(&b, &a).unwrap();
        prop_assert_eq!(ab, ba);
        prop_assert!((0.0..=std::f64::consts::PI).contains(&ab));
        prop_assert!(resque_dist(&a, &a).unwrap() <= 1e-7);
    }

    /// Split cardinalities match the rounding rules across dataset sizes.
    #[test]
    fn split_cardinalities_exact(per_class in 10usize..260, k in 2usize..6, seed in any::<u64>()) {
        let ds = generate_synthetic::<f32>(k, per_class, 2, 2, 1, seed).unwrap();
        let n = ds.len();
        let spec = SplitSpec { seed, ..SplitSpec::default() };
        let (original, shifted) = split_for_retraining(&ds, &spec).unwrap();
        prop_assert_eq!(original.len(), round_half_away(0.70 * n as f64) as usize);
        prop_assert_eq!(shifted.len(), round_half_away(0.50 * n as f64) as usize);
        // Stratification: per-class counts stay within one of the share.
        for split in [&original, &shifted] {
            let share = split.len() as f64 / k as f64;
            for count in split.class_counts() {
                prop_assert!((count as f64 - share).abs() <= 1.0);
            }
        }
    }
}
