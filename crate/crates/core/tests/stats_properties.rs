//! Bridge simulation and node-count statistics.

use proptest::prelude::*;
use relubridge::stats::{
    binomial_chi_square, bridge_deviation_theory, bridge_simulate, mean_std, node_count_check,
    GaussianIncrements,
};
use relubridge::Execution;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn bridge_is_pinned_and_mode_independent(
        big_k in 1usize..40,
        trials in 1usize..3000,
        seed in any::<u64>(),
        s0 in -5.0f64..5.0,
        sk in -5.0f64..5.0,
        sigma in 0.01f64..3.0,
    ) {
        let inc = GaussianIncrements { sigma };
        let a = bridge_simulate(&inc, big_k, (s0, sk), trials, seed, Execution::Sequential).unwrap();
        prop_assert_eq!(a.max_endpoint_abs, 0.0);
        prop_assert_eq!(a.empirical_profile[0], 0.0);
        prop_assert_eq!(a.empirical_profile[big_k], 0.0);
        if Execution::parallel_available() {
            let b = bridge_simulate(&inc, big_k, (s0, sk), trials, seed, Execution::Parallel).unwrap();
            prop_assert_eq!(&a.empirical_profile, &b.empirical_profile);
            prop_assert_eq!(&a.second_moment, &b.second_moment);
            prop_assert_eq!(&a.mean_path, &b.mean_path);
        }
    }

    #[test]
    fn bridge_theory_is_symmetric_and_vanishes_at_ends(big_k in 1usize..500, sigma in 0.0f64..10.0) {
        prop_assert_eq!(bridge_deviation_theory(0, big_k, sigma).unwrap(), 0.0);
        prop_assert_eq!(bridge_deviation_theory(big_k, big_k, sigma).unwrap(), 0.0);
        for k in 0..=big_k {
            let a = bridge_deviation_theory(k, big_k, sigma).unwrap();
            let b = bridge_deviation_theory(big_k - k, big_k, sigma).unwrap();
            prop_assert_eq!(a, b);
            prop_assert!(a >= 0.0);
        }
    }

    #[test]
    fn node_check_agrees_with_sample_moments(
        counts in prop::collection::vec(0usize..=30, 2..200),
    ) {
        let c = node_count_check(&counts, 30).unwrap();
        let xs: Vec<f64> = counts.iter().map(|&k| k as f64).collect();
        let (mean, std) = mean_std(&xs);
        prop_assert!((c.mean - mean).abs() <= 1e-12 * (1.0 + mean));
        prop_assert!((c.variance - std * std).abs() <= 1e-9 * (1.0 + c.variance));
        prop_assert_eq!(c.n, counts.len());
    }

    #[test]
    fn chi_square_p_is_a_probability(counts in prop::collection::vec(0usize..=20, 5..300)) {
        let t = binomial_chi_square(&counts, 20).unwrap();
        prop_assert!((0.0..=1.0).contains(&t.p_value), "p = {}", t.p_value);
        prop_assert!(t.statistic >= 0.0);
    }
}

#[test]
fn bridge_second_moment_matches_closed_form() {
    let big_k = 20;
    let inc = GaussianIncrements { sigma: 0.7 };
    let s = bridge_simulate(&inc, big_k, (0.0, 0.0), 200_000, 5, Execution::default()).unwrap();
    for k in 1..big_k {
        // Var T_k = sigma^2 k (K - k) / K for a Gaussian random-walk bridge.
        let exact = 0.49 * (k * (big_k - k)) as f64 / big_k as f64;
        assert!(
            (s.second_moment[k] - exact).abs() < 5.0 * s.second_moment_se[k],
            "k={k}"
        );
    }
}
