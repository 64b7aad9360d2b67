use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::rng;

/// `sigma * sqrt(k (1 - k / K))`.
pub fn bridge_deviation_theory(k: usize, big_k: usize, sigma: f64) -> Result<f64> {
    if big_k == 0 || k > big_k {
        return Err(Error::OutOfRange {
            index: k,
            limit: big_k,
        });
    }
    if !(sigma >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "sigma {sigma} must be non-negative"
        )));
    }
    // k (K - k) is symmetric in k <-> K - k exactly.
    Ok(sigma * ((k * (big_k - k)) as f64 / big_k as f64).sqrt())
}

/// Zero-mean increment distribution with known standard deviation.
pub trait IncrementSampler: Sync {
    fn sigma(&self) -> f64;
    fn sample(&self, rng: &mut ChaCha8Rng) -> f64;
}

#[derive(Debug, Clone, Copy)]
pub struct GaussianIncrements {
    pub sigma: f64,
}

impl IncrementSampler for GaussianIncrements {
    fn sigma(&self) -> f64 {
        self.sigma
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        self.sigma * z
    }
}

/// Monte Carlo summary of `T_k = (S_k - S_0) - (k/K)(S_K - S_0)`.
#[derive(Debug, Clone)]
pub struct BridgeStats {
    pub k: usize,
    pub trials: usize,
    /// Theoretical `sigma sqrt(k (1 - k/K))`, `k = 0..=K`.
    pub deviation_profile: Vec<f64>,
    /// `sqrt(mean(T_k^2))`.
    pub empirical_profile: Vec<f64>,
    /// `mean(T_k^2)`, the zero-mean variance estimate.
    pub second_moment: Vec<f64>,
    /// Standard error of `second_moment`: `std(T_k^2) / sqrt(trials)`.
    pub second_moment_se: Vec<f64>,
    /// Mean pinned path `s0 + (k/K)(sK - s0) + mean(T_k)`.
    pub mean_path: Vec<f64>,
    /// Largest `|T_0|` or `|T_K|` seen in any trial.
    pub max_endpoint_abs: f64,
}

const SHARD: usize = 1024;

struct Shard {
    sum_t: Vec<f64>,
    sum_t2: Vec<f64>,
    sum_t4: Vec<f64>,
    endpoint: f64,
}

/// Draw `trials` walks `S_k = s0 + Z_1 + ... + Z_k` and accumulate moments of
/// the bridge deviation `T_k`. Trials are split into fixed shards, each with
/// its own stream, and reduced in shard order, so the result does not depend
/// on the execution mode.
pub fn bridge_simulate<S: IncrementSampler>(
    sampler: &S,
    big_k: usize,
    endpoints: (f64, f64),
    trials: usize,
    seed: u64,
    exec: Execution,
) -> Result<BridgeStats> {
    if big_k == 0 || trials == 0 {
        return Err(Error::InvalidArgument(
            "bridge needs K >= 1 and trials >= 1".into(),
        ));
    }
    let (s0, sk) = endpoints;
    let shards = trials.div_ceil(SHARD);
    let parts = exec.map(shards, |i| {
        let mut rng = rng::stream(seed, rng::domain::BRIDGE, i as u64);
        let n = SHARD.min(trials - i * SHARD);
        let mut sh = Shard {
            sum_t: vec![0.0; big_k + 1],
            sum_t2: vec![0.0; big_k + 1],
            sum_t4: vec![0.0; big_k + 1],
            endpoint: 0.0,
        };
        let mut s = vec![0.0; big_k + 1];
        for _ in 0..n {
            s[0] = s0;
            for k in 1..=big_k {
                s[k] = s[k - 1] + sampler.sample(&mut rng);
            }
            let total = s[big_k] - s[0];
            for k in 0..=big_k {
                let t = (s[k] - s[0]) - (k as f64 / big_k as f64) * total;
                let t2 = t * t;
                sh.sum_t[k] += t;
                sh.sum_t2[k] += t2;
                sh.sum_t4[k] += t2 * t2;
                if k == 0 || k == big_k {
                    sh.endpoint = sh.endpoint.max(t.abs());
                }
            }
        }
        sh
    });
    let mut sum_t = vec![0.0; big_k + 1];
    let mut sum_t2 = vec![0.0; big_k + 1];
    let mut sum_t4 = vec![0.0; big_k + 1];
    let mut endpoint = 0.0f64;
    for p in parts {
        for k in 0..=big_k {
            sum_t[k] += p.sum_t[k];
            sum_t2[k] += p.sum_t2[k];
            sum_t4[k] += p.sum_t4[k];
        }
        endpoint = endpoint.max(p.endpoint);
    }
    let n = trials as f64;
    let sigma = sampler.sigma();
    let mut stats = BridgeStats {
        k: big_k,
        trials,
        deviation_profile: Vec::with_capacity(big_k + 1),
        empirical_profile: Vec::with_capacity(big_k + 1),
        second_moment: Vec::with_capacity(big_k + 1),
        second_moment_se: Vec::with_capacity(big_k + 1),
        mean_path: Vec::with_capacity(big_k + 1),
        max_endpoint_abs: endpoint,
    };
    for k in 0..=big_k {
        let m2 = sum_t2[k] / n;
        let m4 = sum_t4[k] / n;
        stats
            .deviation_profile
            .push(bridge_deviation_theory(k, big_k, sigma)?);
        stats.empirical_profile.push(m2.sqrt());
        stats.second_moment.push(m2);
        stats
            .second_moment_se
            .push(((m4 - m2 * m2).max(0.0) / n).sqrt());
        stats
            .mean_path
            .push(s0 + (k as f64 / big_k as f64) * (sk - s0) + sum_t[k] / n);
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn theory_values() {
        assert_eq!(bridge_deviation_theory(0, 10, 2.0).unwrap(), 0.0);
        assert_eq!(bridge_deviation_theory(10, 10, 2.0).unwrap(), 0.0);
        assert_eq!(bridge_deviation_theory(50, 100, 1.0).unwrap(), 5.0);
        assert!(bridge_deviation_theory(11, 10, 1.0).is_err());
        assert!(bridge_deviation_theory(0, 0, 1.0).is_err());
        for k in 0..=37 {
            assert_eq!(
                bridge_deviation_theory(k, 37, 1.3).unwrap(),
                bridge_deviation_theory(37 - k, 37, 1.3).unwrap()
            );
        }
    }

    #[test]
    fn small_bridge_matches_theory() {
        let g = GaussianIncrements { sigma: 1.0 };
        let st = bridge_simulate(&g, 4, (0.0, 0.0), 100_000, 11, Execution::Parallel).unwrap();
        assert_eq!(st.max_endpoint_abs, 0.0);
        assert!((st.second_moment[2] - 1.0).abs() < 3.0 * st.second_moment_se[2]);
        assert_eq!(st.second_moment[0], 0.0);
        assert_eq!(st.second_moment[4], 0.0);
    }

    #[test]
    fn execution_mode_does_not_change_result() {
        let g = GaussianIncrements { sigma: 0.5 };
        let a = bridge_simulate(&g, 9, (1.0, 2.0), 3000, 5, Execution::Sequential).unwrap();
        let b = bridge_simulate(&g, 9, (1.0, 2.0), 3000, 5, Execution::Parallel).unwrap();
        assert_eq!(a.second_moment, b.second_moment);
        assert_eq!(a.mean_path, b.mean_path);
        assert_eq!(a.mean_path[0], 1.0);
    }

    #[test]
    fn invalid_counts() {
        let g = GaussianIncrements { sigma: 1.0 };
        assert!(bridge_simulate(&g, 0, (0.0, 0.0), 10, 0, Execution::Sequential).is_err());
        assert!(bridge_simulate(&g, 3, (0.0, 0.0), 0, 0, Execution::Sequential).is_err());
    }
}
