//! Architecture descriptors and seeded He initialization.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

use super::graph::{Layer, LayerGraph, Residual};
use super::layer::{Affine, Conv2d, Dense, Shape3};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerSpec {
    Dense {
        out: usize,
    },
    Conv {
        out_channels: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    },
    Residual(Vec<LayerSpec>),
}

/// Layer shapes without weights.
///
/// Text form (whitespace separated): `dense:N`, `conv:C:K[:S[:P]]`, and
/// `res[ ... ]` around the branch layers, e.g.
/// `conv:4:3:1:1 res[conv:4:3:1:1 conv:4:3:1:1] dense:10`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    pub input: Shape3,
    pub layers: Vec<LayerSpec>,
}

impl Architecture {
    /// Fully connected network `d -> hidden... -> classes`.
    pub fn mlp(input_dim: usize, hidden: &[usize], classes: usize) -> Self {
        let mut layers: Vec<LayerSpec> =
            hidden.iter().map(|&out| LayerSpec::Dense { out }).collect();
        layers.push(LayerSpec::Dense { out: classes });
        Architecture {
            input: Shape3::flat(input_dim),
            layers,
        }
    }

    pub fn with_input(input: Shape3, layers: Vec<LayerSpec>) -> Self {
        Architecture { input, layers }
    }

    /// Parse the layer list for the given input shape.
    pub fn parse(input: Shape3, layers: &str) -> Result<Self> {
        let tokens = tokenize(layers);
        let mut pos = 0;
        let parsed = parse_list(&tokens, &mut pos, false)?;
        if pos != tokens.len() {
            return Err(Error::Architecture(format!("unexpected `{}`", tokens[pos])));
        }
        Ok(Architecture {
            input,
            layers: parsed,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input.len()
    }
}

fn tokenize(s: &str) -> Vec<String> {
    s.replace('[', " [ ")
        .replace(']', " ] ")
        .split_whitespace()
        .map(str::to_owned)
        .collect()
}

fn parse_list(tokens: &[String], pos: &mut usize, nested: bool) -> Result<Vec<LayerSpec>> {
    let mut out = Vec::new();
    while *pos < tokens.len() {
        let tok = tokens[*pos].as_str();
        *pos += 1;
        match tok {
            "]" if nested => return Ok(out),
            "]" => return Err(Error::Architecture("unbalanced `]`".into())),
            "res" => {
                if tokens.get(*pos).map(String::as_str) != Some("[") {
                    return Err(Error::Architecture("expected `[` after `res`".into()));
                }
                *pos += 1;
                out.push(LayerSpec::Residual(parse_list(tokens, pos, true)?));
            }
            _ => out.push(parse_layer(tok)?),
        }
    }
    if nested {
        return Err(Error::Architecture("unterminated `res[`".into()));
    }
    Ok(out)
}

fn parse_layer(tok: &str) -> Result<LayerSpec> {
    let mut parts = tok.split(':');
    let kind = parts.next().unwrap_or_default();
    let nums: Vec<usize> = parts
        .map(|p| {
            p.parse::<usize>()
                .map_err(|_| Error::Architecture(format!("bad number `{p}` in `{tok}`")))
        })
        .collect::<Result<_>>()?;
    match (kind, nums.as_slice()) {
        ("dense", [out]) => Ok(LayerSpec::Dense { out: *out }),
        ("conv", [c, k]) => Ok(LayerSpec::Conv {
            out_channels: *c,
            kernel: *k,
            stride: 1,
            pad: 0,
        }),
        ("conv", [c, k, s]) => Ok(LayerSpec::Conv {
            out_channels: *c,
            kernel: *k,
            stride: *s,
            pad: 0,
        }),
        ("conv", [c, k, s, p]) => Ok(LayerSpec::Conv {
            out_channels: *c,
            kernel: *k,
            stride: *s,
            pad: *p,
        }),
        _ => Err(Error::Architecture(format!("unrecognized layer `{tok}`"))),
    }
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerSpec::Dense { out } => write!(f, "dense:{out}"),
            LayerSpec::Conv {
                out_channels,
                kernel,
                stride,
                pad,
            } => write!(f, "conv:{out_channels}:{kernel}:{stride}:{pad}"),
            LayerSpec::Residual(branch) => {
                write!(f, "res[")?;
                for (i, l) in branch.iter().enumerate() {
                    if i > 0 {
                        write!(f, " ")?;
                    }
                    write!(f, "{l}")?;
                }
                write!(f, "]")
            }
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, l) in self.layers.iter().enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            write!(f, "{l}")?;
        }
        Ok(())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    /// `CxHxW | layers` or `D | layers`.
    fn from_str(s: &str) -> Result<Self> {
        let (shape, layers) = s
            .split_once('|')
            .ok_or_else(|| Error::Architecture("expected `input | layers`".into()))?;
        let dims: Vec<usize> = shape
            .trim()
            .split('x')
            .map(|p| {
                p.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::Architecture(format!("bad input shape `{shape}`")))
            })
            .collect::<Result<_>>()?;
        let input = match dims.as_slice() {
            [d] => Shape3::flat(*d),
            [c, h, w] => Shape3::new(*c, *h, *w),
            _ => return Err(Error::Architecture(format!("bad input shape `{shape}`"))),
        };
        Architecture::parse(input, layers)
    }
}

struct Sampler<R: Rng> {
    rng: R,
}

impl<R: Rng> Sampler<R> {
    /// `n` i.i.d. draws from N(0, 2 / fan_in).
    fn he(&mut self, n: usize, fan_in: usize) -> Result<Vec<f64>> {
        if fan_in == 0 {
            return Err(Error::Architecture("zero fan-in".into()));
        }
        let std = (2.0 / fan_in as f64).sqrt();
        Ok((0..n)
            .map(|_| {
                let z: f64 = self.rng.sample(StandardNormal);
                z * std
            })
            .collect())
    }

    fn affine(&mut self, spec: &LayerSpec, input: Shape3) -> Result<Affine> {
        match *spec {
            LayerSpec::Dense { out } => {
                let inp = input.len();
                if out == 0 {
                    return Err(Error::Architecture("dense layer of width 0".into()));
                }
                let w = self.he(out * inp, inp)?;
                Ok(Affine::Dense(Dense::new(
                    Array2::from_shape_vec((out, inp), w).expect("dense shape"),
                )?))
            }
            LayerSpec::Conv {
                out_channels,
                kernel,
                stride,
                pad,
            } => {
                Conv2d::infer_output_shape(input, out_channels, kernel, kernel, stride, pad)?;
                let fan_in = input.channels * kernel * kernel;
                let w = self.he(out_channels * fan_in, fan_in)?;
                Ok(Affine::Conv2d(Conv2d::new(
                    input,
                    out_channels,
                    kernel,
                    kernel,
                    stride,
                    pad,
                    w,
                )?))
            }
            LayerSpec::Residual(_) => Err(Error::Architecture(
                "residual blocks cannot be nested".into(),
            )),
        }
    }
}

/// Draw every weight i.i.d. from N(0, 2/fan_in) using a generator keyed by
/// `seed`. Weights are drawn layer by layer in evaluation order, row-major,
/// so the same seed always yields the same graph.
pub fn he_init(arch: &Architecture, seed: u64) -> Result<LayerGraph> {
    if arch.input.is_empty() {
        return Err(Error::Architecture("zero input dimension".into()));
    }
    if arch.layers.is_empty() {
        return Err(Error::Architecture("no layers".into()));
    }
    let mut sampler = Sampler {
        rng: rng::stream(seed, rng::domain::INIT, 0),
    };
    let mut shape = arch.input;
    let mut layers = Vec::with_capacity(arch.layers.len());
    for spec in &arch.layers {
        match spec {
            LayerSpec::Residual(branch) => {
                if branch.is_empty() {
                    return Err(Error::Architecture("empty residual branch".into()));
                }
                let mut inner = shape;
                let mut affines = Vec::with_capacity(branch.len());
                for b in branch {
                    let a = sampler.affine(b, inner)?;
                    inner = a.output_shape();
                    affines.push(a);
                }
                if inner.len() != shape.len() {
                    return Err(Error::Architecture(format!(
                        "residual branch maps {} units to {}",
                        shape.len(),
                        inner.len()
                    )));
                }
                // Shape is unchanged by an identity shortcut.
                layers.push(Layer::Residual(Residual::new(affines)?));
            }
            _ => {
                let a = sampler.affine(spec, shape)?;
                shape = a.output_shape();
                layers.push(Layer::Affine(a));
            }
        }
    }
    LayerGraph::new(arch.input.len(), layers)
}
