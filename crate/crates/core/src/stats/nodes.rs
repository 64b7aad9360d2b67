use statrs::distribution::{Binomial, ChiSquared, ContinuousCDF, Discrete};

use crate::error::{Error, Result};

/// Node counts compared with Binomial(m, 1/2).
#[derive(Debug, Clone)]
pub struct NodeCountCheck {
    pub n: usize,
    pub m: usize,
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
    /// `sqrt(m / 4 / n)`.
    pub mean_se: f64,
    /// Standard error of the sample variance under the binomial model.
    pub variance_se: f64,
    pub z_mean: f64,
    pub z_variance: f64,
    pub chi_square: ChiSquareTest,
}

#[derive(Debug, Clone)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    /// `(lo, hi, observed, expected)` for each pooled bin.
    pub bins: Vec<(usize, usize, usize, f64)>,
}

impl ChiSquareTest {
    pub fn rejected_at(&self, alpha: f64) -> bool {
        self.p_value < alpha
    }
}

pub fn node_count_check(counts: &[usize], m: usize) -> Result<NodeCountCheck> {
    let n = counts.len();
    if n < 2 {
        return Err(Error::InvalidArgument(
            "need at least two node counts".into(),
        ));
    }
    if m == 0 {
        return Err(Error::InvalidArgument("width must be positive".into()));
    }
    let nf = n as f64;
    let mean = counts.iter().map(|&k| k as f64).sum::<f64>() / nf;
    let variance = counts
        .iter()
        .map(|&k| (k as f64 - mean).powi(2))
        .sum::<f64>()
        / (nf - 1.0);
    let mu = m as f64 / 2.0;
    let var = m as f64 / 4.0;
    // Fourth central moment of Binomial(m, 1/2): npq (1 + 3 (n - 2) pq).
    let mu4 = var * (1.0 + 3.0 * (m as f64 - 2.0) / 4.0);
    let var_of_s2 = (mu4 - var * var * (nf - 3.0) / (nf - 1.0)) / nf;
    let mean_se = (var / nf).sqrt();
    let variance_se = var_of_s2.max(0.0).sqrt();
    Ok(NodeCountCheck {
        n,
        m,
        mean,
        variance,
        mean_se,
        variance_se,
        z_mean: (mean - mu) / mean_se,
        z_variance: if variance_se > 0.0 {
            (variance - var) / variance_se
        } else {
            0.0
        },
        chi_square: binomial_chi_square(counts, m)?,
    })
}

/// Pearson goodness of fit against Binomial(m, 1/2). Adjacent values are
/// pooled left to right until each bin expects at least 5 counts; values
/// above `m` go in the last bin.
pub fn binomial_chi_square(counts: &[usize], m: usize) -> Result<ChiSquareTest> {
    let n = counts.len() as f64;
    let binom = Binomial::new(0.5, m as u64).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut observed = vec![0usize; m + 1];
    for &k in counts {
        observed[k.min(m)] += 1;
    }
    let mut bins: Vec<(usize, usize, usize, f64)> = Vec::new();
    let mut lo = 0;
    let (mut obs, mut exp) = (0usize, 0.0f64);
    for k in 0..=m {
        obs += observed[k];
        exp += n * binom.pmf(k as u64);
        if exp >= 5.0 {
            bins.push((lo, k, obs, exp));
            lo = k + 1;
            obs = 0;
            exp = 0.0;
        }
    }
    if lo <= m {
        match bins.last_mut() {
            Some(last) => {
                last.1 = m;
                last.2 += obs;
                last.3 += exp;
            }
            None => bins.push((0, m, obs, exp)),
        }
    }
    let statistic: f64 = bins
        .iter()
        .map(|&(_, _, o, e)| (o as f64 - e).powi(2) / e)
        .sum();
    let dof = bins.len().saturating_sub(1);
    let p_value = if dof == 0 {
        1.0
    } else {
        let chi = ChiSquared::new(dof as f64).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        1.0 - chi.cdf(statistic)
    };
    Ok(ChiSquareTest {
        statistic,
        dof,
        p_value,
        bins,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    fn binomial_sample(m: usize, n: usize, seed: u64) -> Vec<usize> {
        let mut r = rng::stream(seed, 1234, 0);
        (0..n)
            .map(|_| (0..m).filter(|_| r.random::<bool>()).count())
            .collect()
    }

    #[test]
    fn variance_se_for_width_128() {
        let c = node_count_check(&binomial_sample(128, 500, 1), 128).unwrap();
        assert!((c.mean_se - (32.0f64 / 500.0).sqrt()).abs() < 1e-15);
        assert!((c.variance_se - 2.018).abs() < 0.01, "{}", c.variance_se);
    }

    #[test]
    fn exact_binomial_samples_pass() {
        for m in [1, 16, 64, 128] {
            let c = node_count_check(&binomial_sample(m, 2000, m as u64), m).unwrap();
            assert!(c.z_mean.abs() < 4.0);
            assert!(
                !c.chi_square.rejected_at(0.001),
                "m={m} p={}",
                c.chi_square.p_value
            );
            for b in &c.chi_square.bins {
                assert!(b.3 >= 5.0);
            }
            let total: usize = c.chi_square.bins.iter().map(|b| b.2).sum();
            assert_eq!(total, 2000);
        }
    }

    #[test]
    fn shifted_counts_are_rejected() {
        let counts: Vec<usize> = binomial_sample(64, 2000, 3)
            .into_iter()
            .map(|k| k + 3)
            .collect();
        let c = node_count_check(&counts, 64).unwrap();
        assert!(c.chi_square.rejected_at(0.01));
        assert!(c.z_mean > 10.0);
    }

    #[test]
    fn too_few_samples() {
        assert!(node_count_check(&[3], 8).is_err());
    }
}
