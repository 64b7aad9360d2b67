//! Brute-force references for the walk: central finite differences and a
//! dense grid scan of activation patterns.

use ndarray::Array2;

use super::LinearPath;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::network::LayerGraph;

/// Central difference `(u(t + h) - u(t - h)) / (2 h |v|)` of the scaled
/// output, all components. Errors if the stencil does not lie inside one
/// activation region.
pub fn fd_gradient_oracle(
    net: &LayerGraph,
    path: &LinearPath,
    t: f64,
    h: f64,
    norm_scale: f64,
) -> Result<Vec<f64>> {
    if !(h > 0.0) || t - h < 0.0 || t + h > 1.0 {
        return Err(Error::InvalidArgument(format!(
            "stencil [{}, {}] outside [0, 1]",
            t - h,
            t + h
        )));
    }
    let (lo, p_lo) = net.forward_with_pattern(&path.point(t - h))?;
    let (hi, p_hi) = net.forward_with_pattern(&path.point(t + h))?;
    let p_mid = net.capture_pattern(&path.point(t))?;
    if p_lo != p_mid || p_hi != p_mid {
        return Err(Error::StraddlesNode { t });
    }
    let denom = 2.0 * h * path.direction_norm() * norm_scale;
    Ok(hi
        .values()
        .iter()
        .zip(lo.values())
        .map(|(a, b)| (a - b) / denom)
        .collect())
}

/// Result of a grid scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DenseNodeCount {
    /// Grid cells in which at least one unit changes sign.
    pub cells: usize,
    /// Total number of sign changes summed over cells.
    pub flips: usize,
}

const CHUNK: usize = 4096;
// Chunks evaluated concurrently before the sequential scan.
const GROUP: usize = 16;

/// Evaluate preactivation signs at `t = i / grid`, `i = 0..=grid`, and count
/// sign changes. A unit changes sign in cell `[t_{i-1}, t_i]` when its sign at
/// `t_i` is nonzero and differs from its last nonzero sign; exact zeros (a
/// unit with every input masked) carry no sign and never count.
pub fn dense_node_oracle(
    net: &LayerGraph,
    path: &LinearPath,
    grid: usize,
    exec: Execution,
) -> Result<DenseNodeCount> {
    if grid == 0 {
        return Err(Error::InvalidArgument("grid must be positive".into()));
    }
    let points = grid + 1;
    let chunks = points.div_ceil(CHUNK);
    let mut last: Vec<i8> = vec![0; net.num_units()];
    let mut count = DenseNodeCount::default();
    for group in (0..chunks).step_by(GROUP) {
        let n_group = GROUP.min(chunks - group);
        let signs = exec.try_map(n_group, |g| {
            let start = (group + g) * CHUNK;
            let end = (start + CHUNK).min(points);
            let mut x = Array2::zeros((end - start, path.dim()));
            for (r, mut row) in x.rows_mut().into_iter().enumerate() {
                let t = (start + r) as f64 / grid as f64;
                for ((o, a), b) in row.iter_mut().zip(path.x0()).zip(path.x1()) {
                    *o = (1.0 - t) * a + t * b;
                }
            }
            net.signs_batch(x.view())
        })?;
        for sites in &signs {
            for r in 0..sites[0].nrows() {
                let mut flips = 0;
                let mut u = 0;
                for site in sites {
                    for &s in site.row(r) {
                        if s != 0 {
                            if last[u] != 0 && last[u] != s {
                                flips += 1;
                            }
                            last[u] = s;
                        }
                        u += 1;
                    }
                }
                if flips > 0 {
                    count.cells += 1;
                    count.flips += flips;
                }
            }
        }
    }
    Ok(count)
}
