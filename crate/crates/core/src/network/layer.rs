//! Bias-free affine maps: dense matrices and 2-D convolutions.
//!
//! Every operation works on row batches: an input of shape `(rows, in_dim)`
//! maps to `(rows, out_dim)`. Convolution inputs and outputs are flattened
//! channel-major, `index = (channel * height + y) * width + x`.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

/// Dense layer, weights stored row-major with shape `(out, in)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    weights: Array2<f64>,
}

impl Dense {
    pub fn new(weights: Array2<f64>) -> Result<Self> {
        let (out, inp) = weights.dim();
        if out == 0 || inp == 0 {
            return Err(Error::Architecture(format!(
                "dense layer with zero dimension ({out}x{inp})"
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("dense weights"));
        }
        // Force standard (row-major) layout so `as_slice` always succeeds.
        Ok(Dense {
            weights: weights.as_standard_layout().into_owned(),
        })
    }

    /// Build from a flat row-major buffer.
    pub fn from_vec(out: usize, inp: usize, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != out * inp {
            return Err(Error::Dimension {
                expected: out * inp,
                got: weights.len(),
            });
        }
        let w = Array2::from_shape_vec((out, inp), weights)
            .map_err(|e| Error::Architecture(e.to_string()))?;
        Dense::new(w)
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }
}

/// Shape of a channel-major image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape3 {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape3 {
    pub fn new(channels: usize, height: usize, width: usize) -> Self {
        Shape3 {
            channels,
            height,
            width,
        }
    }

    /// A flat vector viewed as `1 x 1 x len`.
    pub fn flat(len: usize) -> Self {
        Shape3::new(1, 1, len)
    }

    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Zero-padded, strided 2-D convolution without bias.
///
/// Kernel layout is `[out_channels][in_channels][kernel_h][kernel_w]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    input: Shape3,
    output: Shape3,
    kernel_h: usize,
    kernel_w: usize,
    stride: usize,
    pad: usize,
    kernel: Vec<f64>,
}

impl Conv2d {
    pub fn new(
        input: Shape3,
        out_channels: usize,
        kernel_h: usize,
        kernel_w: usize,
        stride: usize,
        pad: usize,
        kernel: Vec<f64>,
    ) -> Result<Self> {
        let output =
            Self::infer_output_shape(input, out_channels, kernel_h, kernel_w, stride, pad)?;
        let expected = out_channels * input.channels * kernel_h * kernel_w;
        if kernel.len() != expected {
            return Err(Error::Dimension {
                expected,
                got: kernel.len(),
            });
        }
        if kernel.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("conv kernel"));
        }
        Ok(Conv2d {
            input,
            output,
            kernel_h,
            kernel_w,
            stride,
            pad,
            kernel,
        })
    }

    /// Output shape of a convolution, or an architecture error if degenerate.
    pub fn infer_output_shape(
        input: Shape3,
        out_channels: usize,
        kernel_h: usize,
        kernel_w: usize,
        stride: usize,
        pad: usize,
    ) -> Result<Shape3> {
        if input.is_empty() || out_channels == 0 || kernel_h == 0 || kernel_w == 0 || stride == 0 {
            return Err(Error::Architecture(format!(
                "degenerate convolution: input {input:?}, {out_channels} channels, \
                 kernel {kernel_h}x{kernel_w}, stride {stride}"
            )));
        }
        let (ph, pw) = (input.height + 2 * pad, input.width + 2 * pad);
        if ph < kernel_h || pw < kernel_w {
            return Err(Error::Architecture(format!(
                "kernel {kernel_h}x{kernel_w} larger than padded input {ph}x{pw}"
            )));
        }
        Ok(Shape3::new(
            out_channels,
            (ph - kernel_h) / stride + 1,
            (pw - kernel_w) / stride + 1,
        ))
    }

    pub fn input_shape(&self) -> Shape3 {
        self.input
    }

    pub fn output_shape(&self) -> Shape3 {
        self.output
    }

    pub fn kernel_size(&self) -> (usize, usize) {
        (self.kernel_h, self.kernel_w)
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn pad(&self) -> usize {
        self.pad
    }

    pub fn kernel(&self) -> &[f64] {
        &self.kernel
    }

    /// Visit every (output index, input index, kernel index) triple that
    /// contributes to the convolution, in a fixed order.
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize, usize)) {
        let (ic_n, ih, iw) = (self.input.channels, self.input.height, self.input.width);
        let (oc_n, oh, ow) = (self.output.channels, self.output.height, self.output.width);
        for oc in 0..oc_n {
            for oy in 0..oh {
                for ox in 0..ow {
                    let o = (oc * oh + oy) * ow + ox;
                    for ic in 0..ic_n {
                        for ky in 0..self.kernel_h {
                            let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                            if iy < 0 || iy >= ih as isize {
                                continue;
                            }
                            for kx in 0..self.kernel_w {
                                let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                                if ix < 0 || ix >= iw as isize {
                                    continue;
                                }
                                let i = (ic * ih + iy as usize) * iw + ix as usize;
                                let k =
                                    ((oc * ic_n + ic) * self.kernel_h + ky) * self.kernel_w + kx;
                                f(o, i, k);
                            }
                        }
                    }
                }
            }
        }
    }
}

/// A single bias-free linear map between hidden representations.
#[derive(Debug, Clone, PartialEq)]
pub enum Affine {
    Dense(Dense),
    Conv2d(Conv2d),
}

impl Affine {
    pub fn in_dim(&self) -> usize {
        match self {
            Affine::Dense(d) => d.weights.ncols(),
            Affine::Conv2d(c) => c.input.len(),
        }
    }

    pub fn out_dim(&self) -> usize {
        match self {
            Affine::Dense(d) => d.weights.nrows(),
            Affine::Conv2d(c) => c.output.len(),
        }
    }

    /// Number of inputs feeding each output unit.
    pub fn fan_in(&self) -> usize {
        match self {
            Affine::Dense(d) => d.weights.ncols(),
            Affine::Conv2d(c) => c.input.channels * c.kernel_h * c.kernel_w,
        }
    }

    /// Shape of the output when viewed as an image.
    pub fn output_shape(&self) -> Shape3 {
        match self {
            Affine::Dense(d) => Shape3::flat(d.weights.nrows()),
            Affine::Conv2d(c) => c.output,
        }
    }

    /// Weights as a flat row-major slice.
    pub fn weights(&self) -> &[f64] {
        match self {
            Affine::Dense(d) => d.weights.as_slice().expect("standard layout"),
            Affine::Conv2d(c) => &c.kernel,
        }
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        match self {
            Affine::Dense(d) => d.weights.as_slice_mut().expect("standard layout"),
            Affine::Conv2d(c) => &mut c.kernel,
        }
    }

    /// `rows x in` to `rows x out`.
    pub fn apply(&self, x: ArrayView2<f64>) -> Array2<f64> {
        match self {
            Affine::Dense(d) => x.dot(&d.weights.t()),
            Affine::Conv2d(c) => {
                let mut y = Array2::zeros((x.nrows(), c.output.len()));
                for (xr, mut yr) in x.rows().into_iter().zip(y.rows_mut()) {
                    c.for_each_tap(|o, i, k| yr[o] += c.kernel[k] * xr[i]);
                }
                y
            }
        }
    }

    /// Vector-Jacobian product: `rows x out` to `rows x in`.
    pub fn apply_transpose(&self, g: ArrayView2<f64>) -> Array2<f64> {
        match self {
            Affine::Dense(d) => g.dot(&d.weights),
            Affine::Conv2d(c) => {
                let mut x = Array2::zeros((g.nrows(), c.input.len()));
                for (gr, mut xr) in g.rows().into_iter().zip(x.rows_mut()) {
                    c.for_each_tap(|o, i, k| xr[i] += c.kernel[k] * gr[o]);
                }
                x
            }
        }
    }

    /// Accumulate `sum_rows g_r^T x_r` into a flat weight-shaped buffer.
    pub fn accumulate_weight_grad(&self, x: ArrayView2<f64>, g: ArrayView2<f64>, acc: &mut [f64]) {
        match self {
            Affine::Dense(_) => {
                let gw = g.t().dot(&x);
                for (a, v) in acc.iter_mut().zip(gw.iter()) {
                    *a += v;
                }
            }
            Affine::Conv2d(c) => {
                for (xr, gr) in x.rows().into_iter().zip(g.rows()) {
                    c.for_each_tap(|o, i, k| acc[k] += gr[o] * xr[i]);
                }
            }
        }
    }
}
