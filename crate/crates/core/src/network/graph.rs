//! Layer graphs and their evaluation.
//!
//! A [`LayerGraph`] is compiled into a flat plan of steps: apply an affine
//! map, pass through a ReLU site, save the residual input, or add it back.
//! All evaluation modes (plain ReLU, pattern capture, fixed masks, traced
//! preactivations, training tape) walk the same plan with the same affine
//! kernels, so the fixed-pattern forward pass with the captured pattern
//! reproduces the plain forward pass bit for bit.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};

use super::layer::{Affine, Shape3};
use super::output::OutputVector;
use super::pattern::{ActivationPattern, UnitId};
use crate::error::{Error, Result};

/// Identity-shortcut residual block: `y = x + B_k(relu(...relu(B_1 x)))`.
///
/// Branch layers must map the block input shape back onto itself. ReLU sites
/// sit between consecutive branch layers; the one after the block belongs to
/// the enclosing graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Residual {
    branch: Vec<Affine>,
}

impl Residual {
    pub fn new(branch: Vec<Affine>) -> Result<Self> {
        if branch.is_empty() {
            return Err(Error::Architecture("empty residual branch".into()));
        }
        Ok(Residual { branch })
    }

    pub fn branch(&self) -> &[Affine] {
        &self.branch
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Affine(Affine),
    Residual(Residual),
}

impl Layer {
    pub fn in_dim(&self) -> usize {
        match self {
            Layer::Affine(a) => a.in_dim(),
            Layer::Residual(r) => r.branch[0].in_dim(),
        }
    }

    pub fn out_dim(&self) -> usize {
        match self {
            Layer::Affine(a) => a.out_dim(),
            Layer::Residual(r) => r.branch[r.branch.len() - 1].out_dim(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Step {
    /// Apply the affine map with the given parameter index.
    Apply(usize),
    Relu(usize),
    Save,
    AddSaved,
}

/// Immutable bias-free ReLU network.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGraph {
    input_dim: usize,
    layers: Vec<Layer>,
    plan: Vec<Step>,
    /// (top-level layer, branch index) for each affine parameter block.
    param_index: Vec<(usize, Option<usize>)>,
    site_widths: Vec<usize>,
    site_steps: Vec<usize>,
}

impl LayerGraph {
    /// Validate and compile a graph. A ReLU follows every top-level layer
    /// except the last.
    pub fn new(input_dim: usize, layers: Vec<Layer>) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::Architecture("zero input dimension".into()));
        }
        if layers.is_empty() {
            return Err(Error::Architecture("graph has no layers".into()));
        }
        let mut plan = Vec::new();
        let mut param_index = Vec::new();
        let mut site_widths = Vec::new();
        let mut site_steps = Vec::new();
        let mut dim = input_dim;
        let last = layers.len() - 1;
        for (li, layer) in layers.iter().enumerate() {
            if layer.in_dim() != dim {
                return Err(Error::Architecture(format!(
                    "layer {li} expects input dimension {}, previous layer produces {dim}",
                    layer.in_dim()
                )));
            }
            match layer {
                Layer::Affine(_) => {
                    plan.push(Step::Apply(param_index.len()));
                    param_index.push((li, None));
                }
                Layer::Residual(r) => {
                    plan.push(Step::Save);
                    let mut inner = dim;
                    for (bi, a) in r.branch.iter().enumerate() {
                        if a.in_dim() != inner {
                            return Err(Error::Architecture(format!(
                                "residual layer {li} branch {bi}: input {} != {inner}",
                                a.in_dim()
                            )));
                        }
                        plan.push(Step::Apply(param_index.len()));
                        param_index.push((li, Some(bi)));
                        inner = a.out_dim();
                        if bi + 1 < r.branch.len() {
                            site_steps.push(plan.len());
                            plan.push(Step::Relu(site_widths.len()));
                            site_widths.push(inner);
                        }
                    }
                    if inner != dim {
                        return Err(Error::Architecture(format!(
                            "residual layer {li} maps {dim} to {inner}; identity shortcut needs equal sizes"
                        )));
                    }
                    plan.push(Step::AddSaved);
                }
            }
            dim = layer.out_dim();
            if li < last {
                site_steps.push(plan.len());
                plan.push(Step::Relu(site_widths.len()));
                site_widths.push(dim);
            }
        }
        Ok(LayerGraph {
            input_dim,
            layers,
            plan,
            param_index,
            site_widths,
            site_steps,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    /// Number of top-level layers (residual blocks count once).
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Units per ReLU site, in evaluation order.
    pub fn widths(&self) -> &[usize] {
        &self.site_widths
    }

    pub fn num_sites(&self) -> usize {
        self.site_widths.len()
    }

    pub fn num_units(&self) -> usize {
        self.site_widths.iter().sum()
    }

    /// Affine maps in evaluation order.
    pub fn affines(&self) -> impl Iterator<Item = &Affine> {
        self.param_index
            .iter()
            .map(move |&(li, bi)| self.affine(li, bi))
    }

    fn affine(&self, li: usize, bi: Option<usize>) -> &Affine {
        match (&self.layers[li], bi) {
            (Layer::Affine(a), None) => a,
            (Layer::Residual(r), Some(b)) => &r.branch[b],
            _ => unreachable!("parameter index out of sync with layers"),
        }
    }

    fn param(&self, p: usize) -> &Affine {
        let (li, bi) = self.param_index[p];
        self.affine(li, bi)
    }

    /// Mutable weight buffers in evaluation order. Shapes cannot change.
    pub fn weights_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(self.param_index.len());
        for layer in self.layers.iter_mut() {
            match layer {
                Layer::Affine(a) => out.push(a.weights_mut()),
                Layer::Residual(r) => {
                    for a in r.branch.iter_mut() {
                        out.push(a.weights_mut());
                    }
                }
            }
        }
        out
    }

    pub fn weights(&self) -> Vec<&[f64]> {
        self.affines().map(|a| a.weights()).collect()
    }

    pub fn num_weights(&self) -> usize {
        self.affines().map(|a| a.weights().len()).sum()
    }

    /// Shape of the graph input if the first layer is a convolution.
    pub fn input_shape(&self) -> Shape3 {
        match self.affines().next() {
            Some(Affine::Conv2d(c)) => c.input_shape(),
            _ => Shape3::flat(self.input_dim),
        }
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::Dimension {
                expected: self.input_dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    pub(crate) fn check_pattern(&self, p: &ActivationPattern) -> Result<()> {
        if p.widths() != self.site_widths {
            return Err(Error::PatternShape);
        }
        Ok(())
    }

    fn row(x: &[f64]) -> Array2<f64> {
        Array2::from_shape_vec((1, x.len()), x.to_vec()).expect("row shape")
    }

    fn single_output(out: Array2<f64>) -> OutputVector {
        OutputVector::new(out.row(0).to_vec())
    }

    /// Plain forward pass `f(x)`.
    pub fn forward(&self, x: &[f64]) -> Result<OutputVector> {
        self.check_input(x)?;
        let out = self.run_from(0, Self::row(x), None, &mut ReluSites)?;
        Ok(Self::single_output(out))
    }

    /// Forward pass over a batch of rows.
    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.input_dim {
            return Err(Error::Dimension {
                expected: self.input_dim,
                got: x.ncols(),
            });
        }
        self.run_from(0, x.to_owned(), None, &mut ReluSites)
    }

    /// Activation pattern at `x` (bit set iff preactivation `>= 0`).
    pub fn capture_pattern(&self, x: &[f64]) -> Result<ActivationPattern> {
        self.check_input(x)?;
        let mut cap = CaptureSites {
            pattern: ActivationPattern::zeros(&self.site_widths),
        };
        self.run_from(0, Self::row(x), None, &mut cap)?;
        Ok(cap.pattern)
    }

    /// Forward pass and pattern in one evaluation.
    pub fn forward_with_pattern(&self, x: &[f64]) -> Result<(OutputVector, ActivationPattern)> {
        self.check_input(x)?;
        let mut cap = CaptureSites {
            pattern: ActivationPattern::zeros(&self.site_widths),
        };
        let out = self.run_from(0, Self::row(x), None, &mut cap)?;
        Ok((Self::single_output(out), cap.pattern))
    }

    /// Network with every ReLU replaced by the fixed 0/1 mask of `pattern`.
    /// Linear in `z`.
    pub fn forward_fixed(&self, z: &[f64], pattern: &ActivationPattern) -> Result<OutputVector> {
        self.check_input(z)?;
        self.check_pattern(pattern)?;
        let out = self.run_from(0, Self::row(z), None, &mut FixedSites { pattern })?;
        Ok(Self::single_output(out))
    }

    /// Preactivation signs (`-1`, `0`, `1`) of every row of a batch, one
    /// `rows x width` array per site. The activation bit is `sign >= 0`.
    pub fn signs_batch(&self, x: ArrayView2<f64>) -> Result<Vec<Array2<i8>>> {
        if x.ncols() != self.input_dim {
            return Err(Error::Dimension {
                expected: self.input_dim,
                got: x.ncols(),
            });
        }
        let mut sites = SignSites { signs: Vec::new() };
        self.run_from(0, x.to_owned(), None, &mut sites)?;
        Ok(sites.signs)
    }

    /// Fixed-pattern evaluation of several rows, recording every site's
    /// preactivations so that evaluation can later resume from any site.
    pub(crate) fn trace_fixed(
        &self,
        rows: Array2<f64>,
        pattern: &ActivationPattern,
    ) -> Result<Trace> {
        self.check_pattern(pattern)?;
        let n = rows.nrows();
        let mut trace = Trace {
            pre: self
                .site_widths
                .iter()
                .map(|&w| Array2::zeros((n, w)))
                .collect(),
            saved: vec![None; self.site_widths.len()],
            out: Array2::zeros((0, 0)),
        };
        let out = self.run_from(
            0,
            rows,
            None,
            &mut TraceSites {
                pattern,
                trace: &mut trace,
            },
        )?;
        trace.out = out;
        Ok(trace)
    }

    /// Re-evaluate everything downstream of `site` after its mask changed.
    pub(crate) fn retrace_from(
        &self,
        trace: &mut Trace,
        site: usize,
        pattern: &ActivationPattern,
    ) -> Result<()> {
        let mut cur = trace.pre[site].clone();
        apply_mask(&mut cur, pattern, site);
        let saved = trace.saved[site].clone();
        let out = self.run_from(
            self.site_steps[site] + 1,
            cur,
            saved,
            &mut TraceSites { pattern, trace },
        )?;
        trace.out = out;
        Ok(())
    }

    /// Push a perturbation of the post-activation at `site` through the rest
    /// of the network with fixed masks. The residual shortcut carries no
    /// perturbation, since it depends only on upstream values.
    pub(crate) fn propagate_from_site(
        &self,
        site: usize,
        delta: Array2<f64>,
        pattern: &ActivationPattern,
        inside_residual: bool,
    ) -> Result<Array2<f64>> {
        let saved = inside_residual.then(|| Array2::zeros(delta.raw_dim()));
        self.run_from(
            self.site_steps[site] + 1,
            delta,
            saved,
            &mut FixedSites { pattern },
        )
    }

    /// Run the plan from `start`, with `cur` the value entering that step.
    fn run_from<S: SiteHandler>(
        &self,
        start: usize,
        mut cur: Array2<f64>,
        mut saved: Option<Array2<f64>>,
        sites: &mut S,
    ) -> Result<Array2<f64>> {
        for step in &self.plan[start..] {
            match *step {
                Step::Apply(p) => cur = self.param(p).apply(cur.view()),
                Step::Relu(s) => sites.site(s, &mut cur, saved.as_ref())?,
                Step::Save => saved = Some(cur.clone()),
                Step::AddSaved => {
                    let s = saved.take().expect("residual shortcut saved");
                    cur += &s;
                }
            }
        }
        Ok(cur)
    }

    /// Forward pass recording what reverse-mode differentiation needs.
    pub(crate) fn forward_tape(&self, x: ArrayView2<f64>) -> Result<Tape> {
        if x.ncols() != self.input_dim {
            return Err(Error::Dimension {
                expected: self.input_dim,
                got: x.ncols(),
            });
        }
        let mut inputs = Vec::with_capacity(self.param_index.len());
        let mut masks = Vec::with_capacity(self.site_widths.len());
        let mut cur = x.to_owned();
        let mut saved: Option<Array2<f64>> = None;
        for step in &self.plan {
            match *step {
                Step::Apply(p) => {
                    let y = self.param(p).apply(cur.view());
                    inputs.push(std::mem::replace(&mut cur, y));
                }
                Step::Relu(_) => {
                    if cur.iter().any(|v| !v.is_finite()) {
                        return Err(Error::NonFinite("hidden activation"));
                    }
                    masks.push(cur.mapv(|v| v >= 0.0));
                    cur.mapv_inplace(relu);
                }
                Step::Save => saved = Some(cur.clone()),
                Step::AddSaved => cur += &saved.take().expect("residual shortcut saved"),
            }
        }
        Ok(Tape {
            inputs,
            masks,
            output: cur,
        })
    }

    /// Reverse pass: weight gradients for an upstream gradient on the output.
    pub(crate) fn backward_tape(&self, tape: &Tape, grad_out: Array2<f64>) -> Vec<Vec<f64>> {
        let mut grads: Vec<Vec<f64>> = self
            .affines()
            .map(|a| vec![0.0; a.weights().len()])
            .collect();
        let mut g = grad_out;
        let mut saved_grad: Option<Array2<f64>> = None;
        for step in self.plan.iter().rev() {
            match *step {
                Step::Apply(p) => {
                    let a = self.param(p);
                    a.accumulate_weight_grad(tape.inputs[p].view(), g.view(), &mut grads[p]);
                    if p > 0 {
                        g = a.apply_transpose(g.view());
                    }
                }
                Step::Relu(s) => {
                    ndarray::Zip::from(&mut g)
                        .and(&tape.masks[s])
                        .for_each(|v, &m| {
                            if !m {
                                *v = 0.0
                            }
                        });
                }
                Step::AddSaved => saved_grad = Some(g.clone()),
                Step::Save => g += &saved_grad.take().expect("residual gradient saved"),
            }
        }
        grads
    }

    /// Whether a site lies inside a residual branch.
    pub(crate) fn site_in_residual(&self, site: usize) -> bool {
        let step = self.site_steps[site];
        let mut depth = 0i32;
        for s in &self.plan[..step] {
            match s {
                Step::Save => depth += 1,
                Step::AddSaved => depth -= 1,
                _ => {}
            }
        }
        depth > 0
    }
}

#[inline]
fn relu(v: f64) -> f64 {
    if v >= 0.0 {
        v
    } else {
        0.0
    }
}

fn apply_mask(z: &mut Array2<f64>, pattern: &ActivationPattern, site: usize) {
    let bits = pattern.site(site);
    for mut row in z.rows_mut() {
        for (v, b) in row.iter_mut().zip(bits.iter()) {
            if !*b {
                *v = 0.0;
            }
        }
    }
}

trait SiteHandler {
    fn site(&mut self, site: usize, z: &mut Array2<f64>, saved: Option<&Array2<f64>>)
        -> Result<()>;
}

struct ReluSites;

impl SiteHandler for ReluSites {
    fn site(&mut self, _: usize, z: &mut Array2<f64>, _: Option<&Array2<f64>>) -> Result<()> {
        z.mapv_inplace(relu);
        Ok(())
    }
}

struct CaptureSites {
    pattern: ActivationPattern,
}

impl SiteHandler for CaptureSites {
    fn site(&mut self, site: usize, z: &mut Array2<f64>, _: Option<&Array2<f64>>) -> Result<()> {
        let bits = self.pattern.site_mut(site);
        for (i, v) in z.row(0).iter().enumerate() {
            bits.set(i, *v >= 0.0);
        }
        z.mapv_inplace(relu);
        Ok(())
    }
}

struct SignSites {
    signs: Vec<Array2<i8>>,
}

impl SiteHandler for SignSites {
    fn site(&mut self, _: usize, z: &mut Array2<f64>, _: Option<&Array2<f64>>) -> Result<()> {
        self.signs.push(z.mapv(|v| {
            if v > 0.0 {
                1
            } else if v < 0.0 {
                -1
            } else {
                0
            }
        }));
        z.mapv_inplace(relu);
        Ok(())
    }
}

struct FixedSites<'a> {
    pattern: &'a ActivationPattern,
}

impl SiteHandler for FixedSites<'_> {
    fn site(&mut self, site: usize, z: &mut Array2<f64>, _: Option<&Array2<f64>>) -> Result<()> {
        apply_mask(z, self.pattern, site);
        Ok(())
    }
}

/// Site preactivations and residual state from a fixed-pattern evaluation.
#[derive(Debug, Clone)]
pub(crate) struct Trace {
    pub pre: Vec<Array2<f64>>,
    pub saved: Vec<Option<Array2<f64>>>,
    pub out: Array2<f64>,
}

impl Trace {
    pub fn preactivation(&self, id: UnitId, row: usize) -> f64 {
        self.pre[id.site][[row, id.unit]]
    }

    pub fn site_row(&self, site: usize, row: usize) -> ArrayView1<'_, f64> {
        self.pre[site].row(row)
    }

    pub fn output_row(&self, row: usize) -> ArrayView1<'_, f64> {
        self.out.index_axis(Axis(0), row)
    }
}

struct TraceSites<'a> {
    pattern: &'a ActivationPattern,
    trace: &'a mut Trace,
}

impl SiteHandler for TraceSites<'_> {
    fn site(
        &mut self,
        site: usize,
        z: &mut Array2<f64>,
        saved: Option<&Array2<f64>>,
    ) -> Result<()> {
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("preactivation"));
        }
        self.trace.pre[site].assign(z);
        self.trace.saved[site] = saved.cloned();
        apply_mask(z, self.pattern, site);
        Ok(())
    }
}

/// Values recorded by [`LayerGraph::forward_tape`].
#[derive(Debug)]
pub(crate) struct Tape {
    /// Input to each affine map, in parameter order.
    pub inputs: Vec<Array2<f64>>,
    /// ReLU derivative (1 where preactivation `>= 0`) per site.
    pub masks: Vec<Array2<bool>>,
    pub output: Array2<f64>,
}
