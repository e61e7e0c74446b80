//! Convolution and cosine-similarity kernels with exact gradients.
//!
//! Buffers are row-major `channels x time`.

use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    None,
}

/// Shape and activation of a 1-D convolution. Weights live elsewhere
/// (in the model's flat parameter vector) and are passed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvShape {
    pub in_channels: usize,
    pub filters: usize,
    pub width: usize,
    pub dilation: usize,
    pub activation: Activation,
}

impl ConvShape {
    pub fn n_weights(&self) -> usize {
        self.filters * self.in_channels * self.width
    }

    pub fn receptive_field(&self) -> usize {
        (self.width - 1) * self.dilation + 1
    }

    /// Output length of a valid convolution, if the input is long enough.
    pub fn out_len(&self, t: usize) -> Option<usize> {
        (t >= self.receptive_field()).then(|| t - (self.width - 1) * self.dilation)
    }

    /// `out[f, t] = act(bias[f] + sum_{c,k} w[f,c,k] * x[c, t + k * dilation])`.
    pub fn forward(&self, weight: &[f64], bias: &[f64], x: &[f64], t_in: usize, out: &mut Vec<f64>) -> usize {
        let t_out = self.out_len(t_in).expect("input shorter than receptive field");
        out.clear();
        out.resize(self.filters * t_out, 0.0);
        for f in 0..self.filters {
            let o = &mut out[f * t_out..(f + 1) * t_out];
            o.iter_mut().for_each(|v| *v = bias[f]);
            for c in 0..self.in_channels {
                let xc = &x[c * t_in..(c + 1) * t_in];
                for k in 0..self.width {
                    let w = weight[(f * self.in_channels + c) * self.width + k];
                    let src = &xc[k * self.dilation..k * self.dilation + t_out];
                    for (ov, xv) in o.iter_mut().zip(src) {
                        *ov += w * xv;
                    }
                }
            }
            if self.activation == Activation::Relu {
                o.iter_mut().for_each(|v| *v = v.max(0.0));
            }
        }
        t_out
    }

    /// Backpropagates `grad_out` (gradient w.r.t. the activated output,
    /// modified in place into the pre-activation gradient). Weight and bias
    /// gradients are accumulated; the input gradient is written when
    /// requested.
    #[allow(clippy::too_many_arguments)]
    pub fn backward(
        &self,
        weight: &[f64],
        x: &[f64],
        t_in: usize,
        out: &[f64],
        grad_out: &mut [f64],
        grad_weight: &mut [f64],
        grad_bias: &mut [f64],
        grad_x: Option<&mut [f64]>,
    ) {
        let t_out = t_in - (self.width - 1) * self.dilation;
        if self.activation == Activation::Relu {
            for (g, o) in grad_out.iter_mut().zip(out) {
                if *o <= 0.0 {
                    *g = 0.0;
                }
            }
        }
        for f in 0..self.filters {
            let g = &grad_out[f * t_out..(f + 1) * t_out];
            grad_bias[f] += g.iter().sum::<f64>();
            for c in 0..self.in_channels {
                let xc = &x[c * t_in..(c + 1) * t_in];
                for k in 0..self.width {
                    let src = &xc[k * self.dilation..k * self.dilation + t_out];
                    grad_weight[(f * self.in_channels + c) * self.width + k] +=
                        g.iter().zip(src).map(|(a, b)| a * b).sum::<f64>();
                }
            }
        }
        if let Some(gx) = grad_x {
            gx.iter_mut().for_each(|v| *v = 0.0);
            for f in 0..self.filters {
                let g = &grad_out[f * t_out..(f + 1) * t_out];
                for c in 0..self.in_channels {
                    let gxc = &mut gx[c * t_in..(c + 1) * t_in];
                    for k in 0..self.width {
                        let w = weight[(f * self.in_channels + c) * self.width + k];
                        let dst = &mut gxc[k * self.dilation..k * self.dilation + t_out];
                        for (d, gv) in dst.iter_mut().zip(g) {
                            *d += w * gv;
                        }
                    }
                }
            }
        }
    }
}

/// A convolution layer with its own weights, for standalone use.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1DLayer {
    pub shape: ConvShape,
    /// `filters x in_channels x width`
    pub kernel: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Conv1DLayer {
    pub fn new(shape: ConvShape, kernel: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if shape.dilation == 0 || shape.width == 0 {
            return Err(Error::InvalidArgument("kernel width and dilation must be at least 1".into()));
        }
        if kernel.len() != shape.n_weights() || bias.len() != shape.filters {
            return Err(Error::Shape(format!(
                "expected {} weights and {} biases, got {} and {}",
                shape.n_weights(),
                shape.filters,
                kernel.len(),
                bias.len()
            )));
        }
        Ok(Self { shape, kernel, bias })
    }
}

/// Valid (unpadded) dilated convolution of a `channels x time` tensor.
pub fn conv1d_forward(input: &Tensor, layer: &Conv1DLayer) -> Result<Tensor> {
    let (c, t) = input.dims2()?;
    if c != layer.shape.in_channels {
        return Err(Error::Shape(format!(
            "layer expects {} input channels, got {c}",
            layer.shape.in_channels
        )));
    }
    if layer.shape.out_len(t).is_none() {
        return Err(Error::Shape(format!(
            "input length {t} shorter than receptive field {}",
            layer.shape.receptive_field()
        )));
    }
    let mut out = Vec::new();
    let t_out = layer.shape.forward(&layer.kernel, &layer.bias, input.data(), t, &mut out);
    Tensor::new(vec![layer.shape.filters, t_out], out)
}

/// Per-row cosine similarity; rows with zero norm give 0.
pub(crate) fn cosine_rows(a: &[f64], b: &[f64], rows: usize, t: usize, sims: &mut [f64]) {
    for f in 0..rows {
        let ra = &a[f * t..(f + 1) * t];
        let rb = &b[f * t..(f + 1) * t];
        let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
        for (x, y) in ra.iter().zip(rb) {
            ab += x * y;
            aa += x * x;
            bb += y * y;
        }
        sims[f] = if aa > 0.0 && bb > 0.0 { ab / (aa.sqrt() * bb.sqrt()) } else { 0.0 };
    }
}

/// Accumulates d(sim_f)/da_f * g_f and d(sim_f)/db_f * g_f.
pub(crate) fn cosine_rows_backward(
    a: &[f64],
    b: &[f64],
    rows: usize,
    t: usize,
    grad_sims: &[f64],
    grad_a: &mut [f64],
    grad_b: &mut [f64],
) {
    for f in 0..rows {
        let g = grad_sims[f];
        if g == 0.0 {
            continue;
        }
        let ra = &a[f * t..(f + 1) * t];
        let rb = &b[f * t..(f + 1) * t];
        let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
        for (x, y) in ra.iter().zip(rb) {
            ab += x * y;
            aa += x * x;
            bb += y * y;
        }
        if !(aa > 0.0 && bb > 0.0) {
            continue;
        }
        let (na, nb) = (aa.sqrt(), bb.sqrt());
        let sim = ab / (na * nb);
        let inv = 1.0 / (na * nb);
        // d sim / d a = b / (|a||b|) - sim * a / |a|^2
        let ca = sim / aa;
        let cb = sim / bb;
        let ga = &mut grad_a[f * t..(f + 1) * t];
        for ((d, x), y) in ga.iter_mut().zip(ra).zip(rb) {
            *d += g * (y * inv - ca * x);
        }
        let gb = &mut grad_b[f * t..(f + 1) * t];
        for ((d, x), y) in gb.iter_mut().zip(ra).zip(rb) {
            *d += g * (x * inv - cb * y);
        }
    }
}

/// Cosine similarity between matching rows of two `F x T` tensors.
pub fn cosine_similarity(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    let (f, t) = a.dims2()?;
    let mut sims = vec![0.0; f];
    cosine_rows(a.data(), b.data(), f, t, &mut sims);
    Tensor::new(vec![f], sims)
}
