//! Forward-pass invariants of He-initialized networks.

use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;
use relubridge::network::{he_init, Architecture, Shape3};
use relubridge::rng::stream;

fn input(seed: u64, d: usize) -> Vec<f64> {
    let mut r = stream(seed, 3, 1);
    (0..d).map(|_| r.sample(StandardNormal)).collect()
}

fn archs() -> impl Strategy<Value = Architecture> {
    prop_oneof![
        (
            1usize..8,
            prop::collection::vec(1usize..16, 1..4),
            1usize..5
        )
            .prop_map(|(d, h, c)| Architecture::mlp(d, &h, c)),
        Just(
            Architecture::parse(
                Shape3::new(1, 5, 5),
                "conv:2:3:1:1 res[conv:2:3:1:1 conv:2:3:1:1] dense:3"
            )
            .unwrap()
        ),
        Just(
            Architecture::parse(Shape3::new(2, 6, 6), "conv:3:3:2:1 conv:2:3:1:0 dense:4").unwrap()
        ),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fixed_pattern_reproduces_forward(arch in archs(), seed in any::<u64>()) {
        let net = he_init(&arch, seed).unwrap();
        let x = input(seed, net.input_dim());
        let (f, pattern) = net.forward_with_pattern(&x).unwrap();
        let g = net.forward_fixed(&x, &pattern).unwrap();
        let plain = net.forward(&x).unwrap();
        prop_assert_eq!(plain.values(), f.values());
        for (a, b) in f.values().iter().zip(g.values()) {
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn forward_is_positively_homogeneous(arch in archs(), seed in any::<u64>(), alpha in 1e-3f64..1e3) {
        let net = he_init(&arch, seed).unwrap();
        let x = input(seed, net.input_dim());
        let xs: Vec<f64> = x.iter().map(|v| alpha * v).collect();
        let f = net.forward(&x).unwrap();
        let g = net.forward(&xs).unwrap();
        prop_assert_eq!(net.capture_pattern(&x).unwrap(), net.capture_pattern(&xs).unwrap());
        for (a, b) in f.values().iter().zip(g.values()) {
            prop_assert!((alpha * a - b).abs() <= 1e-10 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn init_is_reproducible(arch in archs(), seed in any::<u64>()) {
        let a = he_init(&arch, seed).unwrap();
        let b = he_init(&arch, seed).unwrap();
        prop_assert_eq!(a.weights(), b.weights());
    }
}

#[test]
fn he_weights_have_variance_two_over_fan_in() {
    let net = he_init(&Architecture::mlp(400, &[300, 200], 10), 11).unwrap();
    for a in net.affines() {
        let w = a.weights();
        let n = w.len() as f64;
        let mean = w.iter().sum::<f64>() / n;
        let var = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let target = 2.0 / a.fan_in() as f64;
        // Standard error of a Gaussian sample variance is target * sqrt(2 / n).
        let se = target * (2.0 / n).sqrt();
        assert!(mean.abs() < 5.0 * (target / n).sqrt(), "mean {mean}");
        assert!((var - target).abs() < 5.0 * se, "var {var} vs {target}");
    }
}

#[test]
fn batch_forward_matches_rowwise() {
    let net = he_init(
        &Architecture::parse(
            Shape3::new(1, 6, 6),
            "conv:2:3:2:1 res[conv:2:3:1:1] dense:5",
        )
        .unwrap(),
        4,
    )
    .unwrap();
    let x = ndarray::Array2::from_shape_fn((7, 36), |(i, j)| ((i * 36 + j) as f64 * 0.37).sin());
    let out = net.forward_batch(x.view()).unwrap();
    for (i, row) in x.rows().into_iter().enumerate() {
        let f = net.forward(row.as_slice().unwrap()).unwrap();
        for (a, b) in f.values().iter().zip(out.row(i)) {
            assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }
    }
}
