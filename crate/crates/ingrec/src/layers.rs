//! The layer zoo: dense, conv2d (valid padding), maxpool 2x2, relu, flatten.
//!
//! Forward passes operate on batch tensors shaped `[B, ...]`; backward passes
//! take the cached layer input plus the upstream gradient and return the
//! gradient with respect to the input and, for parameterized layers, the
//! parameter gradients.

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};

/// Gradients for one parameterized layer, shaped like the parameters.
#[derive(Clone, Debug)]
pub struct ParamGrads {
    pub weight: Tensor,
    pub bias: Tensor,
}

/// Serializable architecture description of a single layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense {
        in_dim: usize,
        out_dim: usize,
        trainable: bool,
    },
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel_h: usize,
        kernel_w: usize,
        stride: usize,
        trainable: bool,
    },
    MaxPool2x2,
    Relu,
    Flatten,
}

#[derive(Clone, Debug)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    /// `[out_dim, in_dim]`
    pub weight: Tensor,
    /// `[out_dim]`
    pub bias: Tensor,
    pub trainable: bool,
}

#[derive(Clone, Debug)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    /// `[out_channels, in_channels, kernel_h, kernel_w]`
    pub weight: Tensor,
    /// `[out_channels]`
    pub bias: Tensor,
    pub trainable: bool,
}

#[derive(Clone, Debug)]
pub enum Layer {
    Dense(Dense),
    Conv2d(Conv2d),
    MaxPool2x2,
    Relu,
    Flatten,
}

/// Glorot-uniform bound for the given fan-in/fan-out.
fn glorot_limit(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

impl Dense {
    pub fn seeded(in_dim: usize, out_dim: usize, rng: &mut Rng) -> Self {
        let limit = glorot_limit(in_dim, out_dim);
        let data = (0..in_dim * out_dim)
            .map(|_| rng.range_f64(-limit, limit))
            .collect();
        Dense {
            in_dim,
            out_dim,
            weight: Tensor::new(vec![out_dim, in_dim], data).unwrap(),
            bias: Tensor::zeros(&[out_dim]),
            trainable: true,
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut weight = Tensor::zeros(&[dim, dim]);
        for i in 0..dim {
            weight.data_mut()[i * dim + i] = 1.0;
        }
        Dense {
            in_dim: dim,
            out_dim: dim,
            weight,
            bias: Tensor::zeros(&[dim]),
            trainable: true,
        }
    }
}

impl Conv2d {
    pub fn seeded(
        in_channels: usize,
        out_channels: usize,
        kernel_h: usize,
        kernel_w: usize,
        stride: usize,
        rng: &mut Rng,
    ) -> Self {
        let fan_in = in_channels * kernel_h * kernel_w;
        let fan_out = out_channels * kernel_h * kernel_w;
        let limit = glorot_limit(fan_in, fan_out);
        let n = out_channels * in_channels * kernel_h * kernel_w;
        let data = (0..n).map(|_| rng.range_f64(-limit, limit)).collect();
        Conv2d {
            in_channels,
            out_channels,
            kernel_h,
            kernel_w,
            stride,
            weight: Tensor::new(vec![out_channels, in_channels, kernel_h, kernel_w], data)
                .unwrap(),
            bias: Tensor::zeros(&[out_channels]),
            trainable: true,
        }
    }

    fn out_hw(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        if h < self.kernel_h || w < self.kernel_w {
            return None;
        }
        Some((
            (h - self.kernel_h) / self.stride + 1,
            (w - self.kernel_w) / self.stride + 1,
        ))
    }
}

impl Layer {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Layer::Dense(_) => "dense",
            Layer::Conv2d(_) => "conv2d",
            Layer::MaxPool2x2 => "maxpool2x2",
            Layer::Relu => "relu",
            Layer::Flatten => "flatten",
        }
    }

    pub fn spec(&self) -> LayerSpec {
        match self {
            Layer::Dense(d) => LayerSpec::Dense {
                in_dim: d.in_dim,
                out_dim: d.out_dim,
                trainable: d.trainable,
            },
            Layer::Conv2d(c) => LayerSpec::Conv2d {
                in_channels: c.in_channels,
                out_channels: c.out_channels,
                kernel_h: c.kernel_h,
                kernel_w: c.kernel_w,
                stride: c.stride,
                trainable: c.trainable,
            },
            Layer::MaxPool2x2 => LayerSpec::MaxPool2x2,
            Layer::Relu => LayerSpec::Relu,
            Layer::Flatten => LayerSpec::Flatten,
        }
    }

    /// Rebuild a layer from its spec with zeroed parameters (filled in later
    /// from a checkpoint payload) .
    pub fn from_spec(spec: &LayerSpec) -> Layer {
        match *spec {
            LayerSpec::Dense {
                in_dim,
                out_dim,
                trainable,
            } => Layer::Dense(Dense {
                in_dim,
                out_dim,
                weight: Tensor::zeros(&[out_dim, in_dim]),
                bias: Tensor::zeros(&[out_dim]),
                trainable,
            }),
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel_h,
                kernel_w,
                stride,
                trainable,
            } => Layer::Conv2d(Conv2d {
                in_channels,
                out_channels,
                kernel_h,
                kernel_w,
                stride,
                weight: Tensor::zeros(&[out_channels, in_channels, kernel_h, kernel_w]),
                bias: Tensor::zeros(&[out_channels]),
                trainable,
            }),
            LayerSpec::MaxPool2x2 => Layer::MaxPool2x2,
            LayerSpec::Relu => Layer::Relu,
            LayerSpec::Flatten => Layer::Flatten,
        }
    }

    /// Per-sample output shape as a pure function of the per-sample input
    /// shape. `layer_index` only feeds error messages.
    pub fn output_shape(&self, input: &[usize], layer_index: usize) -> Result<Vec<usize>> {
        let mismatch = |expected: Vec<usize>| Error::ShapeMismatch {
            layer: layer_index,
            expected,
            found: input.to_vec(),
        };
        match self {
            Layer::Dense(d) => {
                if input != [d.in_dim] {
                    return Err(mismatch(vec![d.in_dim]));
                }
                Ok(vec![d.out_dim])
            }
            Layer::Conv2d(c) => {
                if input.len() != 3 || input[0] != c.in_channels {
                    return Err(mismatch(vec![c.in_channels, c.kernel_h, c.kernel_w]));
                }
                let (oh, ow) = c
                    .out_hw(input[1], input[2])
                    .ok_or_else(|| mismatch(vec![c.in_channels, c.kernel_h, c.kernel_w]))?;
                Ok(vec![c.out_channels, oh, ow])
            }
            Layer::MaxPool2x2 => {
                if input.len() != 3 {
                    return Err(mismatch(input.to_vec()));
                }
                let (h, w) = (input[1], input[2]);
                if h % 2 != 0 || w % 2 != 0 {
                    return Err(Error::OddPoolInput { h, w });
                }
                Ok(vec![input[0], h / 2, w / 2])
            }
            Layer::Relu => Ok(input.to_vec()),
            Layer::Flatten => Ok(vec![input.iter().product()]),
        }
    }

    pub fn forward(&self, input: &Tensor, layer_index: usize) -> Result<Tensor> {
        let out_sample = self.output_shape(input.sample_shape(), layer_index)?;
        let batch = input.batch();
        match self {
            Layer::Dense(d) => {
                let mut out = Tensor::zeros(&[batch, d.out_dim]);
                let w = d.weight.data();
                let bias = d.bias.data();
                for b in 0..batch {
                    let x = input.sample(b);
                    let y = out.sample_mut(b);
                    for (o, y_o) in y.iter_mut().enumerate() {
                        let row = &w[o * d.in_dim..(o + 1) * d.in_dim];
                        let mut acc = bias[o];
                        for (wi, xi) in row.iter().zip(x.iter()) {
                            acc += wi * xi;
                        }
                        *y_o = acc;
                    }
                }
                Ok(out)
            }
            Layer::Conv2d(c) => {
                let (h, w) = (input.sample_shape()[1], input.sample_shape()[2]);
                let (oh, ow) = (out_sample[1], out_sample[2]);
                let mut out = Tensor::zeros(&[batch, c.out_channels, oh, ow]);
                let weights = c.weight.data();
                let bias = c.bias.data();
                let in_spatial = h * w;
                let k_spatial = c.kernel_h * c.kernel_w;
                for b in 0..batch {
                    let x = input.sample(b);
                    let y = out.sample_mut(b);
                    for oc in 0..c.out_channels {
                        let y_c = &mut y[oc * oh * ow..(oc + 1) * oh * ow];
                        for oy in 0..oh {
                            for ox in 0..ow {
                                let mut acc = bias[oc];
                                let iy0 = oy * c.stride;
                                let ix0 = ox * c.stride;
                                for ic in 0..c.in_channels {
                                    let x_c = &x[ic * in_spatial..(ic + 1) * in_spatial];
                                    let w_c = &weights[(oc * c.in_channels + ic) * k_spatial..];
                                    for ky in 0..c.kernel_h {
                                        let x_row = &x_c[(iy0 + ky) * w + ix0..];
                                        let w_row = &w_c[ky * c.kernel_w..];
                                        for kx in 0..c.kernel_w {
                                            acc += x_row[kx] * w_row[kx];
                                        }
                                    }
                                }
                                y_c[oy * ow + ox] = acc;
                            }
                        }
                    }
                }
                Ok(out)
            }
            Layer::MaxPool2x2 => {
                let [c, h, w] = [
                    input.sample_shape()[0],
                    input.sample_shape()[1],
                    input.sample_shape()[2],
                ];
                let (oh, ow) = (h / 2, w / 2);
                let mut out = Tensor::zeros(&[batch, c, oh, ow]);
                for b in 0..batch {
                    let x = input.sample(b);
                    let y = out.sample_mut(b);
                    for ch in 0..c {
                        let x_c = &x[ch * h * w..(ch + 1) * h * w];
                        let y_c = &mut y[ch * oh * ow..(ch + 1) * oh * ow];
                        for py in 0..oh {
                            for px in 0..ow {
                                // Strict > keeps the first (row-major) element on ties.
                                let mut best = f64::NEG_INFINITY;
                                for dy in 0..2 {
                                    for dx in 0..2 {
                                        let v = x_c[(py * 2 + dy) * w + px * 2 + dx];
                                        if v > best {
                                            best = v;
                                        }
                                    }
                                }
                                y_c[py * ow + px] = best;
                            }
                        }
                    }
                }
                Ok(out)
            }
            Layer::Relu => Ok(input.map(|v| if v > 0.0 { v } else { 0.0 })),
            Layer::Flatten => {
                let mut shape = vec![batch];
                shape.extend_from_slice(&out_sample);
                input.reshape(shape)
            }
        }
    }

    /// Gradient with respect to the layer input, plus parameter gradients for
    /// dense/conv2d layers. `input` must be the tensor the matching forward
    /// pass consumed.
    pub fn backward(
        &self,
        input: &Tensor,
        grad_out: &Tensor,
        layer_index: usize,
    ) -> Result<(Tensor, Option<ParamGrads>)> {
        let expected_out = self.output_shape(input.sample_shape(), layer_index)?;
        if grad_out.sample_shape() != expected_out.as_slice()
            || grad_out.batch() != input.batch()
        {
            return Err(Error::StaleCache(format!(
                "layer {layer_index} ({}) expected upstream gradient shaped {:?} for batch {}, got {:?}",
                self.kind_name(),
                expected_out,
                input.batch(),
                grad_out.shape(),
            )));
        }
        let batch = input.batch();
        match self {
            Layer::Dense(d) => {
                let mut grad_in = Tensor::zeros(input.shape());
                let mut dw = Tensor::zeros(&[d.out_dim, d.in_dim]);
                let mut db = Tensor::zeros(&[d.out_dim]);
                let w = d.weight.data();
                for b in 0..batch {
                    let x = input.sample(b);
                    let g = grad_out.sample(b);
                    let gx = grad_in.sample_mut(b);
                    for (o, &g_o) in g.iter().enumerate() {
                        db.data_mut()[o] += g_o;
                        let w_row = &w[o * d.in_dim..(o + 1) * d.in_dim];
                        let dw_row = &mut dw.data_mut()[o * d.in_dim..(o + 1) * d.in_dim];
                        for i in 0..d.in_dim {
                            dw_row[i] += g_o * x[i];
                            gx[i] += g_o * w_row[i];
                        }
                    }
                }
                Ok((grad_in, Some(ParamGrads {
                    weight: dw,
                    bias: db,
                })))
            }
            Layer::Conv2d(c) => {
                let (h, w) = (input.sample_shape()[1], input.sample_shape()[2]);
                let (oh, ow) = (expected_out[1], expected_out[2]);
                let mut grad_in = Tensor::zeros(input.shape());
                let mut dw = Tensor::zeros(c.weight.shape());
                let mut db = Tensor::zeros(&[c.out_channels]);
                let weights = c.weight.data();
                let in_spatial = h * w;
                let k_spatial = c.kernel_h * c.kernel_w;
                for b in 0..batch {
                    let x = input.sample(b);
                    let g = grad_out.sample(b);
                    let gx = grad_in.sample_mut(b);
                    for oc in 0..c.out_channels {
                        let g_c = &g[oc * oh * ow..(oc + 1) * oh * ow];
                        for oy in 0..oh {
                            for ox in 0..ow {
                                let g_o = g_c[oy * ow + ox];
                                if g_o == 0.0 {
                                    continue;
                                }
                                db.data_mut()[oc] += g_o;
                                let iy0 = oy * c.stride;
                                let ix0 = ox * c.stride;
                                for ic in 0..c.in_channels {
                                    let base_x = ic * in_spatial;
                                    let base_w = (oc * c.in_channels + ic) * k_spatial;
                                    for ky in 0..c.kernel_h {
                                        for kx in 0..c.kernel_w {
                                            let xi = base_x + (iy0 + ky) * w + ix0 + kx;
                                            let wi = base_w + ky * c.kernel_w + kx;
                                            dw.data_mut()[wi] += g_o * x[xi];
                                            gx[xi] += g_o * weights[wi];
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                Ok((grad_in, Some(ParamGrads {
                    weight: dw,
                    bias: db,
                })))
            }
            Layer::MaxPool2x2 => {
                let [c, h, w] = [
                    input.sample_shape()[0],
                    input.sample_shape()[1],
                    input.sample_shape()[2],
                ];
                let (oh, ow) = (h / 2, w / 2);
                let mut grad_in = Tensor::zeros(input.shape());
                for b in 0..batch {
                    let x = input.sample(b);
                    let g = grad_out.sample(b);
                    let gx = grad_in.sample_mut(b);
                    for ch in 0..c {
                        let x_c = &x[ch * h * w..(ch + 1) * h * w];
                        for py in 0..oh {
                            for px in 0..ow {
                                let mut best = f64::NEG_INFINITY;
                                let mut best_at = 0;
                                for dy in 0..2 {
                                    for dx in 0..2 {
                                        let at = (py * 2 + dy) * w + px * 2 + dx;
                                        if x_c[at] > best {
                                            best = x_c[at];
                                            best_at = at;
                                        }
                                    }
                                }
                                gx[ch * h * w + best_at] += g[ch * oh * ow + py * ow + px];
                            }
                        }
                    }
                }
                Ok((grad_in, None))
            }
            Layer::Relu => {
                let mut grad_in = grad_out.reshape(input.shape().to_vec())?;
                for (g, &x) in grad_in.data_mut().iter_mut().zip(input.data()) {
                    if x <= 0.0 {
                        *g = 0.0;
                    }
                }
                Ok((grad_in, None))
            }
            Layer::Flatten => Ok((grad_out.reshape(input.shape().to_vec())?, None)),
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Layer::Dense(d) => d.weight.len() + d.bias.len(),
            Layer::Conv2d(c) => c.weight.len() + c.bias.len(),
            _ => 0,
        }
    }

    pub fn trainable(&self) -> bool {
        match self {
            Layer::Dense(d) => d.trainable,
            Layer::Conv2d(c) => c.trainable,
            _ => false,
        }
    }

    pub fn set_trainable(&mut self, trainable: bool) {
        match self {
            Layer::Dense(d) => d.trainable = trainable,
            Layer::Conv2d(c) => c.trainable = trainable,
            _ => {}
        }
    }

    /// Append parameters in canonical order (weight, then bias).
    pub fn append_params(&self, out: &mut Vec<f64>) {
        match self {
            Layer::Dense(d) => {
                out.extend_from_slice(d.weight.data());
                out.extend_from_slice(d.bias.data());
            }
            Layer::Conv2d(c) => {
                out.extend_from_slice(c.weight.data());
                out.extend_from_slice(c.bias.data());
            }
            _ => {}
        }
    }

    /// Load parameters from a flat slice; returns how many were consumed.
    pub fn load_params(&mut self, flat: &[f64]) -> usize {
        match self {
            Layer::Dense(d) => {
                let (nw, nb) = (d.weight.len(), d.bias.len());
                d.weight.data_mut().copy_from_slice(&flat[..nw]);
                d.bias.data_mut().copy_from_slice(&flat[nw..nw + nb]);
                nw + nb
            }
            Layer::Conv2d(c) => {
                let (nw, nb) = (c.weight.len(), c.bias.len());
                c.weight.data_mut().copy_from_slice(&flat[..nw]);
                c.bias.data_mut().copy_from_slice(&flat[nw..nw + nb]);
                nw + nb
            }
            _ => 0,
        }
    }
}
