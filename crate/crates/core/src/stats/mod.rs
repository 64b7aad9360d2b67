//! Random walk bridge model of the gradient sequence and the estimators
//! measured on path profiles.

mod bridge;
mod gaps;
mod nodes;
mod pair;

pub use bridge::{
    bridge_deviation_theory, bridge_simulate, BridgeStats, GaussianIncrements, IncrementSampler,
};
pub use gaps::{
    deflection_at, deflection_from_gradients, deflection_midpoint, empirical_gap_sigma,
    gap_deviation_empirical, gap_variance_theory, midpoint_deviation_product_2layer,
    midpoint_deviation_theory_2layer, profile_gap_sigma, rms, GapDistribution,
};
pub use nodes::{binomial_chi_square, node_count_check, ChiSquareTest, NodeCountCheck};
pub use pair::{margin, pair_fluctuation, pair_margin, PairMetrics};

/// Mean and (n - 1) standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}
