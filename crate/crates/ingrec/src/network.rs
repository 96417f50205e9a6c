//! Ordered layer stack with forward cache and exact backpropagation.

use crate::error::{Error, Result};
use crate::layers::{Conv2d, Dense, Layer, LayerSpec, ParamGrads};
use crate::rng::Rng;
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};

/// Output head: how logits are turned into probabilities and paired with a
/// loss during training.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    SigmoidMultilabel,
    SoftmaxSinglelabel,
}

impl std::str::FromStr for Head {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "sigmoid" | "sigmoid_multilabel" => Ok(Head::SigmoidMultilabel),
            "softmax" | "softmax_singlelabel" => Ok(Head::SoftmaxSinglelabel),
            other => Err(format!("unknown head {other:?}")),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Network {
    pub layers: Vec<Layer>,
    pub head: Head,
    /// Constant subtracted from every input entry before layer 0; pixel
    /// networks use 0.5 so the gray background contributes nothing to the
    /// first convolution.
    pub input_offset: f64,
}

/// Every intermediate activation of one forward pass:
/// `activations[0]` is the input batch, `activations[i + 1]` the output of
/// layer `i`.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    pub activations: Vec<Tensor>,
}

impl ForwardCache {
    pub fn logits(&self) -> &Tensor {
        self.activations.last().expect("cache never empty")
    }

    /// Output of layer `index`.
    pub fn layer_output(&self, index: usize) -> &Tensor {
        &self.activations[index + 1]
    }
}

/// One entry per layer; `None` for parameterless layers.
#[derive(Clone, Debug)]
pub struct Gradients {
    pub layers: Vec<Option<ParamGrads>>,
}

impl Gradients {
    /// Flatten in the canonical parameter order (per layer: weight, bias),
    /// matching `Network::flat_params`.
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for grads in self.layers.iter().flatten() {
            out.extend_from_slice(grads.weight.data());
            out.extend_from_slice(grads.bias.data());
        }
        out
    }
}

impl Network {
    pub fn new(layers: Vec<Layer>, head: Head) -> Self {
        Network {
            layers,
            head,
            input_offset: 0.0,
        }
    }

    pub fn with_input_offset(mut self, offset: f64) -> Self {
        self.input_offset = offset;
        self
    }

    /// Check that consecutive layer shapes compose for the given per-sample
    /// input shape and return the final (logit) shape.
    pub fn validate(&self, input_sample_shape: &[usize]) -> Result<Vec<usize>> {
        let mut shape = input_sample_shape.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            shape = layer.output_shape(&shape, i)?;
        }
        Ok(shape)
    }

    /// Output dimension of the final dense layer, i.e. the label count N.
    pub fn out_dim(&self) -> Option<usize> {
        match self.layers.last() {
            Some(Layer::Dense(d)) => Some(d.out_dim),
            _ => None,
        }
    }

    pub fn forward(&self, batch: &Tensor) -> Result<(Tensor, ForwardCache)> {
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        let offset = self.input_offset;
        activations.push(if offset == 0.0 {
            batch.clone()
        } else {
            batch.map(|v| v - offset)
        });
        for (i, layer) in self.layers.iter().enumerate() {
            let out = layer.forward(activations.last().unwrap(), i)?;
            activations.push(out);
        }
        let logits = activations.last().unwrap().clone();
        Ok((logits, ForwardCache { activations }))
    }

    /// Backpropagate `dloss_dlogits` through the stack. Returns one gradient
    /// record per layer plus the gradient with respect to the input batch.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        dloss_dlogits: &Tensor,
    ) -> Result<(Gradients, Tensor)> {
        if cache.activations.len() != self.layers.len() + 1 {
            return Err(Error::StaleCache(format!(
                "cache holds {} activations for {} layers",
                cache.activations.len(),
                self.layers.len()
            )));
        }
        if dloss_dlogits.shape() != cache.logits().shape() {
            return Err(Error::StaleCache(format!(
                "upstream gradient shaped {:?} does not match logits {:?}",
                dloss_dlogits.shape(),
                cache.logits().shape()
            )));
        }
        let mut grads = vec![None; self.layers.len()];
        let mut upstream = dloss_dlogits.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let input = &cache.activations[i];
            let (grad_in, param_grads) = layer.backward(input, &upstream, i)?;
            grads[i] = param_grads;
            upstream = grad_in;
        }
        Ok((Gradients { layers: grads }, upstream))
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.param_count()).sum()
    }

    /// All parameters flattened in canonical layer order.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            layer.append_params(&mut out);
        }
        out
    }

    pub fn load_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::LengthMismatch(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                flat.len()
            )));
        }
        let mut offset = 0;
        for layer in &mut self.layers {
            offset += layer.load_params(&flat[offset..]);
        }
        Ok(())
    }

    pub fn layer_specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec()).collect()
    }

    pub fn from_specs(specs: &[LayerSpec], head: Head, input_offset: f64) -> Network {
        Network {
            layers: specs.iter().map(Layer::from_spec).collect(),
            head,
            input_offset,
        }
    }
}

/// Shape of the small configurable conv net used throughout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvNetConfig {
    pub in_channels: usize,
    pub image_h: usize,
    pub image_w: usize,
    /// One (kernel, out_channels) pair per conv → relu → maxpool block.
    pub conv_blocks: Vec<(usize, usize)>,
    /// Width of the hidden dense layer before the head; 0 disables it.
    pub hidden_dim: usize,
    pub n_labels: usize,
    /// Input centering constant (0.5 for pixel inputs).
    pub input_offset: f64,
}

impl ConvNetConfig {
    /// Default desk-scale backbone for `image` = (channels, h, w).
    pub fn desk_default(in_channels: usize, image_h: usize, image_w: usize, n_labels: usize) -> Self {
        ConvNetConfig {
            in_channels,
            image_h,
            image_w,
            conv_blocks: vec![(5, 16), (3, 32), (3, 64), (1, 64)],
            hidden_dim: 0,
            n_labels,
            input_offset: 0.5,
        }
    }

    /// Build the seeded network: conv → relu → maxpool per block, then
    /// flatten → (hidden dense → relu →) dense head.
    pub fn build(&self, seed: u64) -> Result<Network> {
        if self.n_labels == 0 {
            return Err(Error::BadTrainConfig("n_labels must be positive".into()));
        }
        let mut rng = Rng::seed_from(seed);
        let mut layers = Vec::new();
        let mut channels = self.in_channels;
        for &(kernel, out_channels) in &self.conv_blocks {
            layers.push(Layer::Conv2d(Conv2d::seeded(
                channels,
                out_channels,
                kernel,
                kernel,
                1,
                &mut rng,
            )));
            layers.push(Layer::Relu);
            layers.push(Layer::MaxPool2x2);
            channels = out_channels;
        }
        layers.push(Layer::Flatten);
        // Probe shapes so far to size the dense layers.
        let probe = Network::new(layers.clone(), Head::SigmoidMultilabel);
        let flat = probe.validate(&[self.in_channels, self.image_h, self.image_w])?;
        let mut dense_in = flat[0];
        if self.hidden_dim > 0 {
            layers.push(Layer::Dense(Dense::seeded(dense_in, self.hidden_dim, &mut rng)));
            layers.push(Layer::Relu);
            dense_in = self.hidden_dim;
        }
        layers.push(Layer::Dense(Dense::seeded(dense_in, self.n_labels, &mut rng)));
        let net = Network::new(layers, Head::SigmoidMultilabel).with_input_offset(self.input_offset);
        net.validate(&[self.in_channels, self.image_h, self.image_w])?;
        Ok(net)
    }
}
