use crate::error::{Error, Result};
use crate::pathwalk::{gradient_gaps, PathProfile};

/// Predicted gap variance: `4/(m d)` for the first hidden layer, `4/m^2`
/// for deeper layers.
pub fn gap_variance_theory(layer: usize, m: usize, d: usize) -> Result<f64> {
    match layer {
        0 => Err(Error::InvalidArgument("layers are numbered from 1".into())),
        1 => Ok(4.0 / (m as f64 * d as f64)),
        _ => Ok(4.0 / (m as f64 * m as f64)),
    }
}

/// Midpoint gap deviation of a 2-layer network, stated as `1/sqrt(d)`.
///
/// Note that the product it abbreviates,
/// [`midpoint_deviation_product_2layer`], evaluates to `1/sqrt(2d)`.
pub fn midpoint_deviation_theory_2layer(_m: usize, d: usize) -> f64 {
    1.0 / (d as f64).sqrt()
}

/// `(1/2) sqrt(4/(m d)) sqrt(m/2)`: half the bridge height for `K = m/2`
/// nodes with gap variance `4/(m d)`.
pub fn midpoint_deviation_product_2layer(m: usize, d: usize) -> f64 {
    let (m, d) = (m as f64, d as f64);
    0.5 * (4.0 / (m * d)).sqrt() * (m / 2.0).sqrt()
}

/// Pooled gap sample with the zero-mean variance convention.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapDistribution {
    pub count: usize,
    /// `(1/N) sum y^2`.
    pub second_moment: f64,
    pub sigma: f64,
}

pub fn empirical_gap_sigma(gaps: &[f64]) -> Result<GapDistribution> {
    if gaps.is_empty() {
        return Err(Error::InvalidArgument("empty gap sample".into()));
    }
    let second_moment = gaps.iter().map(|y| y * y).sum::<f64>() / gaps.len() as f64;
    Ok(GapDistribution {
        count: gaps.len(),
        second_moment,
        sigma: second_moment.sqrt(),
    })
}

/// Gaps of every component of one profile, pooled. `None` when `K = 0`.
pub fn profile_gap_sigma(profile: &PathProfile) -> Result<Option<GapDistribution>> {
    if profile.node_count() == 0 {
        return Ok(None);
    }
    let mut pooled = Vec::with_capacity(profile.node_count() * profile.num_components());
    for j in 0..profile.num_components() {
        pooled.extend(gradient_gaps(profile, j)?);
    }
    empirical_gap_sigma(&pooled).map(Some)
}

/// Root mean square; `None` for an empty slice.
pub fn rms(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    Some((xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64).sqrt())
}

/// `|R_k* - [R_0 + (k*/K)(R_K - R_0)]|` with `k* = floor(K/2)`; `None` when
/// `K = 0`.
pub fn deflection_from_gradients(r: &[f64]) -> Option<f64> {
    let big_k = r.len().checked_sub(1).filter(|&k| k > 0)?;
    let k = big_k / 2;
    let chord = r[0] + (k as f64 / big_k as f64) * (r[big_k] - r[0]);
    Some((r[k] - chord).abs())
}

pub fn deflection_midpoint(profile: &PathProfile, component: usize) -> Result<Option<f64>> {
    Ok(deflection_from_gradients(&profile.gradients(component)?))
}

/// `|grad u(t) - [R_0 + t (R_K - R_0)]|` using the gradient of the segment
/// containing `t`.
pub fn deflection_at(profile: &PathProfile, component: usize, t: f64) -> Result<f64> {
    let r = profile.gradients(component)?;
    let k = profile.segment_at(t);
    let last = r[r.len() - 1];
    Ok((r[k] - (r[0] + t * (last - r[0]))).abs())
}

/// Bridge-predicted deviation at the midpoint node, RMS over profiles:
/// each profile contributes `sigma_hat sqrt(k* (1 - k*/K))` with its own
/// pooled `sigma_hat`. Profiles without nodes are skipped.
pub fn gap_deviation_empirical<'a, I>(profiles: I) -> Result<f64>
where
    I: IntoIterator<Item = &'a PathProfile>,
{
    let mut values = Vec::new();
    for p in profiles {
        if let Some(g) = profile_gap_sigma(p)? {
            values.push(midpoint_bridge(g.sigma, p.node_count()));
        }
    }
    rms(&values).ok_or_else(|| Error::InvalidArgument("no profile with nodes".into()))
}

pub(crate) fn midpoint_bridge(sigma: f64, big_k: usize) -> f64 {
    let k = big_k / 2;
    sigma * ((k * (big_k - k)) as f64 / big_k as f64).sqrt()
}
