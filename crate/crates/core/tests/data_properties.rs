//! Dataset cache, pair sampling and the bundled MNIST files.

use ndarray::Array2;
use proptest::prelude::*;
use relubridge::data::{load_cache, load_idx, sample_pairs, save_cache, Dataset, PairMode};

fn dataset(n: usize, d: usize, classes: usize, salt: u64) -> Dataset {
    let inputs = Array2::from_shape_fn((n, d), |(i, j)| {
        ((i * d + j) as f64 + salt as f64 * 0.1).sin()
    });
    let labels = (0..n).map(|i| (i * 7 + salt as usize) % classes).collect();
    Dataset::new(inputs, labels, classes, "synthetic").unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn cache_round_trips(n in 1usize..40, d in 1usize..20, classes in 1usize..6, salt in 0u64..100) {
        let data = dataset(n, d, classes, salt);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.rpds");
        save_cache(&data, &path).unwrap();
        let back = load_cache(&path).unwrap();
        prop_assert_eq!(back.inputs(), data.inputs());
        prop_assert_eq!(back.labels(), data.labels());
        prop_assert_eq!(back.classes(), data.classes());
    }

    #[test]
    fn pairs_are_valid_and_deterministic(
        n in 4usize..60,
        classes in 1usize..4,
        count in 1usize..30,
        seed in any::<u64>(),
        within in any::<bool>(),
    ) {
        let data = dataset(n, 3, classes, 1);
        let mode = if within { PairMode::WithinClass } else { PairMode::Any };
        let a = sample_pairs(&data, count, seed, mode).unwrap();
        let b = sample_pairs(&data, count, seed, mode).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.len(), count);
        for p in &a {
            prop_assert!(p.i < n && p.j < n && p.i != p.j);
            prop_assert_eq!(&p.x_i, &data.row(p.i).to_vec());
            prop_assert_eq!(&p.x_j, &data.row(p.j).to_vec());
            if within {
                prop_assert_eq!(data.labels()[p.i], data.labels()[p.j]);
            }
        }
        // Prefixes are stable in the requested count.
        let shorter = sample_pairs(&data, count.div_ceil(2), seed, mode).unwrap();
        prop_assert_eq!(&a[..shorter.len()], &shorter[..]);
    }
}

#[test]
fn bundled_mnist_loads() {
    let root = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist");
    let data = load_idx(
        root.join("images-idx3-ubyte.gz"),
        root.join("labels-idx1-ubyte.gz"),
    )
    .unwrap();
    assert_eq!((data.len(), data.dim()), (10000, 784));
    assert_eq!(data.classes(), 10);
    assert!(data.labels().iter().all(|&y| y < 10));
    assert!(data.inputs().iter().all(|v| (0.0..=1.0).contains(v)));
    let mut seen = [false; 10];
    for &y in data.labels() {
        seen[y] = true;
    }
    assert!(seen.iter().all(|&s| s));
}
