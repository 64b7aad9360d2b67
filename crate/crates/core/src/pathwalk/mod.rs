//! Exact break points of a ReLU network along a linear input path.
//!
//! With the activation pattern held fixed, every preactivation is affine in
//! the path parameter: `g(t) = b + t * a` where `b` is the fixed-pattern
//! preactivation at `x0` and `a` is `|v|` times the fixed-pattern
//! preactivation of the unit direction `xi`. The walk repeatedly finds the
//! earliest unit that reaches zero in the direction that changes its bit,
//! flips that bit, and re-evaluates only the part of the network downstream
//! of the flipped site. Each segment's pattern is checked against a fresh
//! capture at the segment midpoint; captures are batched, and on a mismatch
//! the walk rolls back to the first disagreeing segment and restarts it from
//! the captured pattern. Units whose preactivation vanishes identically on a
//! segment (every input masked) are ignored by that check.
//!
//! On segment `k` the directional derivative `R_k` of the scaled output is
//! the fixed-pattern output of `xi` divided by the pair's output scale.

mod oracle;

pub use oracle::{dense_node_oracle, fd_gradient_oracle, DenseNodeCount};

use ndarray::{Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::network::{ActivationPattern, LayerGraph, OutputVector, Trace, UnitId};

/// Segment `X(t) = (1 - t) x0 + t x1`, `t` in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearPath {
    x0: Vec<f64>,
    x1: Vec<f64>,
    v: Vec<f64>,
    v_norm: f64,
    unit_dir: Vec<f64>,
}

impl LinearPath {
    pub fn new(x0: &[f64], x1: &[f64]) -> Result<Self> {
        if x0.len() != x1.len() {
            return Err(Error::Dimension {
                expected: x0.len(),
                got: x1.len(),
            });
        }
        if x0.iter().chain(x1).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("path endpoint"));
        }
        let v: Vec<f64> = x1.iter().zip(x0).map(|(b, a)| b - a).collect();
        let v_norm = v.iter().map(|e| e * e).sum::<f64>().sqrt();
        if v_norm == 0.0 {
            return Err(Error::DegeneratePath);
        }
        let unit_dir = v.iter().map(|e| e / v_norm).collect();
        Ok(LinearPath {
            x0: x0.to_vec(),
            x1: x1.to_vec(),
            v,
            v_norm,
            unit_dir,
        })
    }

    pub fn x0(&self) -> &[f64] {
        &self.x0
    }

    pub fn x1(&self) -> &[f64] {
        &self.x1
    }

    pub fn direction(&self) -> &[f64] {
        &self.v
    }

    pub fn direction_norm(&self) -> f64 {
        self.v_norm
    }

    pub fn unit_direction(&self) -> &[f64] {
        &self.unit_dir
    }

    pub fn dim(&self) -> usize {
        self.x0.len()
    }

    /// `X(t)`; exact at both endpoints.
    pub fn point(&self, t: f64) -> Vec<f64> {
        self.x0
            .iter()
            .zip(&self.x1)
            .map(|(a, b)| (1.0 - t) * a + t * b)
            .collect()
    }

    /// The same segment traversed from `x1` to `x0`.
    pub fn reversed(&self) -> Self {
        LinearPath::new(&self.x1, &self.x0).expect("reversal of a valid path")
    }
}

/// How outputs are scaled before gradients are taken.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum OutputScale {
    /// Divide by `(|f(x0)| + |f(x1)|) / 2` along the whole path.
    #[default]
    PairMean,
    /// Raw network output.
    Unit,
}

impl OutputScale {
    pub fn scale(self, f0: &OutputVector, f1: &OutputVector) -> Result<f64> {
        match self {
            OutputScale::Unit => Ok(1.0),
            OutputScale::PairMean => {
                let s = 0.5 * (f0.norm() + f1.norm());
                if s > 0.0 && s.is_finite() {
                    Ok(s)
                } else {
                    Err(Error::ZeroOutput)
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WalkOptions {
    /// Error out beyond this many nodes.
    pub max_nodes: usize,
    /// Check every segment pattern against a fresh capture at its midpoint.
    pub verify_midpoints: bool,
    /// Re-evaluate only downstream of the flipped site (otherwise recompute
    /// the whole trace after every flip).
    pub incremental: bool,
    pub scale: OutputScale,
}

impl Default for WalkOptions {
    fn default() -> Self {
        WalkOptions {
            max_nodes: 1_000_000,
            verify_midpoints: true,
            incremental: true,
            scale: OutputScale::PairMean,
        }
    }
}

/// A break point: the path parameter and the unit whose bit flips there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    pub t: f64,
    pub unit: UnitId,
}

/// Result of walking one path: nodes, segment patterns, per-segment
/// gradients for every output component, and the output scale used.
#[derive(Debug, Clone)]
pub struct PathProfile {
    nodes: Vec<Node>,
    patterns: Vec<ActivationPattern>,
    /// `(K + 1) x c`, row `k` is `R_k` for every component.
    gradients: Array2<f64>,
    norm_scale: f64,
    endpoint_outputs: [OutputVector; 2],
    resyncs: usize,
}

impl PathProfile {
    /// Node count `K`.
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node_positions(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| n.t).collect()
    }

    /// `K + 1` segment patterns, segment `k` spanning `(t_k, t_{k+1})`.
    pub fn segment_patterns(&self) -> &[ActivationPattern] {
        &self.patterns
    }

    pub fn num_components(&self) -> usize {
        self.gradients.ncols()
    }

    pub fn gradient_matrix(&self) -> &Array2<f64> {
        &self.gradients
    }

    /// `R_0 .. R_K` for one output component.
    pub fn gradients(&self, component: usize) -> Result<Vec<f64>> {
        self.check_component(component)?;
        Ok(self.gradients.column(component).to_vec())
    }

    /// Gradient vector (all components) of segment `k`.
    pub fn segment_gradients(&self, k: usize) -> ArrayView1<'_, f64> {
        self.gradients.row(k)
    }

    pub fn norm_scale(&self) -> f64 {
        self.norm_scale
    }

    /// Unscaled outputs at `x0` and `x1`.
    pub fn endpoint_outputs(&self) -> &[OutputVector; 2] {
        &self.endpoint_outputs
    }

    /// Number of segments whose pattern had to be replaced by the
    /// midpoint capture.
    pub fn resyncs(&self) -> usize {
        self.resyncs
    }

    /// `(t_k, t_{k+1})` with `t_0 = 0`, `t_{K+1} = 1`.
    pub fn segment_bounds(&self, k: usize) -> (f64, f64) {
        let lo = if k == 0 { 0.0 } else { self.nodes[k - 1].t };
        let hi = self.nodes.get(k).map_or(1.0, |n| n.t);
        (lo, hi)
    }

    /// Index of the segment containing `t` (right-continuous at nodes).
    pub fn segment_at(&self, t: f64) -> usize {
        self.nodes.partition_point(|n| n.t <= t)
    }

    fn check_component(&self, component: usize) -> Result<()> {
        if component >= self.gradients.ncols() {
            return Err(Error::OutOfRange {
                index: component,
                limit: self.gradients.ncols(),
            });
        }
        Ok(())
    }
}

/// Gaps `Y_k = R_k - R_{k-1}`, `k = 1..K`; empty when `K = 0`.
pub fn gradient_gaps(profile: &PathProfile, component: usize) -> Result<Vec<f64>> {
    let r = profile.gradients(component)?;
    Ok(r.windows(2).map(|w| w[1] - w[0]).collect())
}

/// Walk with default options.
pub fn walk_path(net: &LayerGraph, path: &LinearPath) -> Result<PathProfile> {
    walk_path_with(net, path, &WalkOptions::default())
}

struct Crossing {
    t: f64,
    unit: UnitId,
}

// Segments shorter than this are not midpoint-verified: the preactivations of
// the bounding units at the midpoint are below rounding noise.
const MIN_VERIFY_LEN: f64 = 1e-10;

// Midpoint captures are evaluated in batches of this many segments.
const VERIFY_BATCH: usize = 64;

pub fn walk_path_with(
    net: &LayerGraph,
    path: &LinearPath,
    opts: &WalkOptions,
) -> Result<PathProfile> {
    if net.input_dim() != path.dim() {
        return Err(Error::Dimension {
            expected: net.input_dim(),
            got: path.dim(),
        });
    }
    let (f0, mut pattern) = net.forward_with_pattern(path.x0())?;
    let f1 = net.forward(path.x1())?;
    let scale = opts.scale.scale(&f0, &f1)?;
    let v_norm = path.direction_norm();

    let mut rows = Array2::zeros((2, path.dim()));
    rows.row_mut(0).assign(&ArrayView1::from(path.x0()));
    rows.row_mut(1)
        .assign(&ArrayView1::from(path.unit_direction()));
    let mut trace = net.trace_fixed(rows.clone(), &pattern)?;

    let c = net.output_dim();
    let mut nodes: Vec<Node> = Vec::new();
    let mut patterns: Vec<ActivationPattern> = Vec::new();
    let mut starts: Vec<f64> = Vec::new();
    let mut grads: Vec<f64> = Vec::new();
    let mut pending: Vec<(usize, f64)> = Vec::new();
    let mut resyncs = 0;
    let mut resynced_at: Option<f64> = None;
    let mut t_cur = 0.0;

    loop {
        let next = next_crossing(&trace, &pattern, t_cur, v_norm);
        let t_end = next.as_ref().map_or(1.0, |c| c.t);
        let out = trace.output_row(1);
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("segment gradient"));
        }
        grads.extend(out.iter().map(|v| v / scale));
        if opts.verify_midpoints && t_end - t_cur > MIN_VERIFY_LEN {
            pending.push((patterns.len(), 0.5 * (t_cur + t_end)));
        }
        patterns.push(pattern.clone());
        starts.push(t_cur);

        if !pending.is_empty() && (pending.len() == VERIFY_BATCH || next.is_none()) {
            let drift = first_drift(net, path, &rows, &patterns, &pending)?;
            pending.clear();
            if let Some((k, fresh)) = drift {
                let t_start = starts[k];
                if resynced_at == Some(t_start) {
                    return Err(Error::Drift { t: t_start });
                }
                resynced_at = Some(t_start);
                resyncs += 1;
                patterns.truncate(k);
                starts.truncate(k);
                grads.truncate(k * c);
                nodes.truncate(k);
                pattern = fresh;
                trace = net.trace_fixed(rows.clone(), &pattern)?;
                t_cur = t_start;
                continue;
            }
        }

        let Some(cross) = next else { break };
        if nodes.len() >= opts.max_nodes {
            return Err(Error::NodeCap {
                cap: opts.max_nodes,
            });
        }
        nodes.push(Node {
            t: cross.t,
            unit: cross.unit,
        });
        pattern.flip(cross.unit);
        if opts.incremental {
            net.retrace_from(&mut trace, cross.unit.site, &pattern)?;
        } else {
            trace = net.trace_fixed(rows.clone(), &pattern)?;
        }
        t_cur = cross.t;
    }

    let k1 = patterns.len();
    Ok(PathProfile {
        nodes,
        patterns,
        gradients: Array2::from_shape_vec((k1, c), grads).expect("gradient shape"),
        norm_scale: scale,
        endpoint_outputs: [f0, f1],
        resyncs,
    })
}

/// Capture the patterns at the pending midpoints in one batch and return the
/// first segment whose pattern disagrees, with the captured pattern.
fn first_drift(
    net: &LayerGraph,
    path: &LinearPath,
    rows: &Array2<f64>,
    patterns: &[ActivationPattern],
    pending: &[(usize, f64)],
) -> Result<Option<(usize, ActivationPattern)>> {
    let mut x = Array2::zeros((pending.len(), path.dim()));
    for (mut row, (_, t)) in x.rows_mut().into_iter().zip(pending) {
        row.assign(&ArrayView1::from(&path.point(*t)));
    }
    let signs = net.signs_batch(x.view())?;
    for (r, &(k, _)) in pending.iter().enumerate() {
        let bits: Vec<Vec<bool>> = signs
            .iter()
            .map(|m| m.row(r).iter().map(|&s| s >= 0).collect())
            .collect();
        let fresh = ActivationPattern::from_bools(&bits);
        let diff = fresh.diff(&patterns[k]);
        if diff.is_empty() {
            continue;
        }
        let trace = net.trace_fixed(rows.clone(), &patterns[k])?;
        if diff.into_iter().any(|id| !identically_zero(&trace, id)) {
            return Ok(Some((k, fresh)));
        }
    }
    Ok(None)
}

/// A unit whose inputs are all masked has preactivation exactly zero on the
/// whole segment; its bit has no effect on the output.
fn identically_zero(trace: &Trace, id: UnitId) -> bool {
    trace.preactivation(id, 0) == 0.0 && trace.preactivation(id, 1) == 0.0
}

/// Earliest unit that reaches zero moving in the direction that changes its
/// bit. Ties within `1e-12 (1 - t)` go to the lowest (site, unit).
fn next_crossing(
    trace: &Trace,
    pattern: &ActivationPattern,
    t_cur: f64,
    v_norm: f64,
) -> Option<Crossing> {
    let mut slope_max = 0.0f64;
    for s in 0..pattern.num_sites() {
        for a in trace.site_row(s, 1) {
            slope_max = slope_max.max((a * v_norm).abs());
        }
    }
    let slope_tol = 1e-14 * slope_max;
    let eps_adv = 1e-12 * (1.0 - t_cur);

    let mut roots: Vec<(f64, UnitId)> = Vec::new();
    let mut r_min = f64::INFINITY;
    for site in 0..pattern.num_sites() {
        let bits = pattern.site(site);
        let b_row = trace.site_row(site, 0);
        let a_row = trace.site_row(site, 1);
        for (unit, ((b, a), bit)) in b_row.iter().zip(a_row.iter()).zip(bits.iter()).enumerate() {
            let a = a * v_norm;
            if a.abs() <= slope_tol {
                continue;
            }
            let turning = if *bit { a < 0.0 } else { a > 0.0 };
            if !turning {
                continue;
            }
            let r = -b / a;
            if !(r < 1.0) {
                continue;
            }
            let r = r.max(t_cur);
            r_min = r_min.min(r);
            roots.push((r, UnitId { site, unit }));
        }
    }
    roots
        .into_iter()
        .filter(|(r, _)| *r <= r_min + eps_adv)
        .min_by_key(|(_, id)| *id)
        .map(|(t, unit)| Crossing { t, unit })
}

/// `R` for one segment: component `j` of the fixed-pattern output of the
/// unit direction, divided by `norm_scale`.
pub fn segment_gradient(
    net: &LayerGraph,
    path: &LinearPath,
    pattern: &ActivationPattern,
    component: usize,
    norm_scale: f64,
) -> Result<f64> {
    if component >= net.output_dim() {
        return Err(Error::OutOfRange {
            index: component,
            limit: net.output_dim(),
        });
    }
    let out = net.forward_fixed(path.unit_direction(), pattern)?;
    Ok(out.values()[component] / norm_scale)
}

/// Gap across a node computed directly as
/// `W_L G_L ... W_{l+1} (G_l' - G_l) W_l ... G_1 W_1 xi`, for patterns that
/// differ in exactly one unit. Returns all components, scaled.
pub fn gap_product_form(
    net: &LayerGraph,
    path: &LinearPath,
    before: &ActivationPattern,
    after: &ActivationPattern,
    norm_scale: f64,
) -> Result<Vec<f64>> {
    let diff = before.diff(after);
    let [id] = diff.as_slice() else {
        return Err(Error::InvalidArgument(format!(
            "patterns differ in {} units, expected exactly one",
            diff.len()
        )));
    };
    let rows =
        Array2::from_shape_vec((1, path.dim()), path.unit_direction().to_vec()).expect("row shape");
    let trace = net.trace_fixed(rows, before)?;
    let z = trace.preactivation(*id, 0);
    let sign = if after.get(*id) { 1.0 } else { -1.0 };
    let mut delta = Array2::zeros((1, net.widths()[id.site]));
    delta[[0, id.unit]] = sign * z;
    let out = net.propagate_from_site(id.site, delta, after, net.site_in_residual(id.site))?;
    Ok(out.row(0).iter().map(|v| v / norm_scale).collect())
}

/// Scaled output at `t` evaluated with the fixed pattern of segment `k`
/// (the affine piece of `u` on that segment, extended to any `t`).
pub fn segment_value(
    net: &LayerGraph,
    path: &LinearPath,
    profile: &PathProfile,
    k: usize,
    t: f64,
) -> Result<Vec<f64>> {
    let out = net.forward_fixed(&path.point(t), &profile.patterns[k])?;
    Ok(out
        .values()
        .iter()
        .map(|v| v / profile.norm_scale)
        .collect())
}

#[cfg(test)]
mod tests;
