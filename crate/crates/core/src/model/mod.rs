//! Network configurations: toy spatial/temporal nets, symbolic full-size
//! layouts, cross-modality first-layer adaptation, and checkpoints.

mod adapt;
mod checkpoint;
mod layout;

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub use adapt::adapt_first_layer;
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use layout::{toy_layout, vgg16_layout, ActShape, LayerDesc, LayerLayout, ParamCount};

use crate::augment::InputKind;
use crate::error::{Error, Result};
use crate::ops::{
    self, ConvParams, DropoutMode, DropoutState, MaskKey, PoolIndices,
};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stream {
    Spatial,
    Temporal,
}

impl Stream {
    /// RGB frame for the spatial net, 10 stacked `(u, v)` flow fields for the
    /// temporal net.
    pub fn in_channels(self) -> usize {
        match self {
            Stream::Spatial => 3,
            Stream::Temporal => 20,
        }
    }

    /// Dropout ratios before the last two fully connected layers.
    pub fn default_dropout(self) -> [f64; 2] {
        match self {
            Stream::Spatial => [0.9, 0.9],
            Stream::Temporal => [0.9, 0.8],
        }
    }

    pub fn input_kind(self) -> InputKind {
        match self {
            Stream::Spatial => InputKind::Rgb,
            Stream::Temporal => InputKind::FlowStack,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Stream::Spatial => "spatial",
            Stream::Temporal => "temporal",
        }
    }
}

impl fmt::Display for Stream {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stream {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spatial" => Ok(Stream::Spatial),
            "temporal" => Ok(Stream::Temporal),
            _ => Err(Error::invalid(format!("unknown stream {s:?}"))),
        }
    }
}

/// Map raw `0..=255` pixel or quantized-flow values to network inputs.
pub fn preprocess(raw: &Tensor) -> Tensor {
    raw.map(|q| (q - 128.0) / 64.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub stream: Stream,
    pub in_channels: usize,
    pub num_classes: usize,
    /// Spatial extent `(h, w)` of network inputs.
    pub input_hw: (usize, usize),
    pub layout: LayerLayout,
    pub seed: u64,
}

impl ModelConfig {
    /// Toy network with the stream's default dropout ratios.
    pub fn toy(
        stream: Stream,
        num_classes: usize,
        input_hw: (usize, usize),
        hidden: usize,
        seed: u64,
    ) -> Result<Self> {
        Self::toy_with_dropout(stream, num_classes, input_hw, hidden, &stream.default_dropout(), seed)
    }

    pub fn toy_with_dropout(
        stream: Stream,
        num_classes: usize,
        input_hw: (usize, usize),
        hidden: usize,
        dropout: &[f64],
        seed: u64,
    ) -> Result<Self> {
        let in_channels = stream.in_channels();
        Ok(ModelConfig {
            stream,
            in_channels,
            num_classes,
            input_hw,
            layout: toy_layout(in_channels, input_hw, hidden, num_classes, dropout)?,
            seed,
        })
    }

    fn input_shape(&self) -> ActShape {
        ActShape::Spatial {
            c: self.in_channels,
            h: self.input_hw.0,
            w: self.input_hw.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels != self.stream.in_channels() {
            return Err(Error::invalid(format!(
                "{} stream requires {} input channels, got {}",
                self.stream,
                self.stream.in_channels(),
                self.in_channels
            )));
        }
        if self.num_classes == 0 {
            return Err(Error::invalid("num_classes must be positive"));
        }
        let shapes = self.layout.chain(self.input_shape())?;
        match shapes.last() {
            Some(&ActShape::Flat(n)) if n == self.num_classes => Ok(()),
            other => Err(Error::invalid(format!(
                "layout ends in {other:?}, expected {} class scores",
                self.num_classes
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weights: Tensor,
    pub bias: Tensor,
}

/// Per-layer parameter tensors aligned with a layout; also used for
/// gradients and momentum buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub layers: Vec<Option<LayerParams>>,
}

impl Params {
    pub fn zeros_like(other: &Params) -> Params {
        Params {
            layers: other
                .layers
                .iter()
                .map(|l| {
                    l.as_ref().map(|p| LayerParams {
                        weights: Tensor::zeros(p.weights.shape()),
                        bias: Tensor::zeros(p.bias.shape()),
                    })
                })
                .collect(),
        }
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Tensor> {
        self.layers
            .iter()
            .flatten()
            .flat_map(|p| [&p.weights, &p.bias])
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.layers
            .iter_mut()
            .flatten()
            .flat_map(|p| [&mut p.weights, &mut p.bias])
    }

    pub fn numel(&self) -> usize {
        self.tensors().map(Tensor::numel).sum()
    }

    /// `self += scale * other`, element by element.
    pub fn add_scaled(&mut self, other: &Params, scale: f64) -> Result<()> {
        if self.layers.len() != other.layers.len() {
            return Err(Error::invalid("parameter sets have different layer counts"));
        }
        for (a, b) in self.tensors_mut().zip(other.tensors()) {
            if a.shape() != b.shape() {
                return Err(Error::shape("params add_scaled", a.shape(), b.shape()));
            }
            for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
                *x += scale * y;
            }
        }
        Ok(())
    }

    pub fn max_abs_diff(&self, other: &Params) -> f64 {
        self.tensors()
            .zip(other.tensors())
            .map(|(a, b)| a.max_abs_diff(b))
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().all(|t| t.data().iter().all(|v| v.is_finite()))
    }
}

/// How dropout behaves during a forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForwardMode {
    Inference,
    /// Masks keyed by `(seed, layer index, iteration, first_sample + row)`.
    Train {
        seed: u64,
        iteration: u64,
        first_sample: u64,
    },
}

/// Saved state from a forward pass needed by the matching backward pass.
#[derive(Debug, Clone)]
pub enum LayerCache {
    Conv { input: Tensor },
    Pool { indices: PoolIndices },
    Relu { input: Tensor },
    Dropout { mask: Option<Tensor> },
    Linear { input: Tensor, input_shape: Vec<usize> },
    Identity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub stream: Stream,
    pub num_classes: usize,
    pub input_hw: (usize, usize),
    pub layout: LayerLayout,
    pub params: Params,
    /// Per-sample activation shape after each layer.
    shapes: Vec<ActShape>,
}

/// Build a toy model and initialize weights from `N(0, 2/fan_in)`, biases zero.
pub fn build_toy_model(cfg: &ModelConfig) -> Result<Model> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut layers = Vec::with_capacity(cfg.layout.len());
    for layer in &cfg.layout.layers {
        let (wshape, fan_in, out) = match *layer {
            LayerDesc::Conv { in_ch, out_ch, k, .. } => (vec![out_ch, in_ch, k, k], in_ch * k * k, out_ch),
            LayerDesc::Linear { in_dim, out_dim } => (vec![in_dim, out_dim], in_dim, out_dim),
            _ => {
                layers.push(None);
                continue;
            }
        };
        let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
        let weights = Tensor::from_fn(&wshape, |_| normal.sample(&mut rng));
        layers.push(Some(LayerParams {
            weights,
            bias: Tensor::zeros(&[out]),
        }));
    }
    Model::from_parts(cfg.stream, cfg.num_classes, cfg.input_hw, cfg.layout.clone(), Params { layers })
}

impl Model {
    pub fn from_parts(
        stream: Stream,
        num_classes: usize,
        input_hw: (usize, usize),
        layout: LayerLayout,
        params: Params,
    ) -> Result<Model> {
        let cfg = ModelConfig {
            stream,
            in_channels: stream.in_channels(),
            num_classes,
            input_hw,
            layout,
            seed: 0,
        };
        cfg.validate()?;
        if params.layers.len() != cfg.layout.len() {
            return Err(Error::invalid(format!(
                "{} parameter slots for {} layers",
                params.layers.len(),
                cfg.layout.len()
            )));
        }
        for (index, (desc, p)) in cfg.layout.layers.iter().zip(&params.layers).enumerate() {
            let expect = match *desc {
                LayerDesc::Conv { in_ch, out_ch, k, .. } => Some((vec![out_ch, in_ch, k, k], out_ch)),
                LayerDesc::Linear { in_dim, out_dim } => Some((vec![in_dim, out_dim], out_dim)),
                _ => None,
            };
            let ok = match (expect, p) {
                (None, None) => true,
                (Some((w, b)), Some(p)) => p.weights.shape() == w.as_slice() && p.bias.shape() == [b],
                _ => false,
            };
            if !ok {
                return Err(Error::Layout {
                    index,
                    reason: "parameter shapes do not match the layer".into(),
                });
            }
        }
        let shapes = cfg.layout.chain(cfg.input_shape())?;
        Ok(Model {
            stream,
            num_classes,
            input_hw,
            layout: cfg.layout,
            params,
            shapes,
        })
    }

    pub fn in_channels(&self) -> usize {
        self.stream.in_channels()
    }

    /// Per-sample width of the activations entering the fc block.
    pub fn head_input_dim(&self) -> usize {
        match self.layout.head_start() {
            0 => self.in_channels() * self.input_hw.0 * self.input_hw.1,
            i => self.shapes[i - 1].numel(),
        }
    }

    fn conv_params(&self, index: usize) -> Result<ConvParams> {
        let (LayerDesc::Conv { stride, pad, .. }, Some(p)) = (self.layout.layers[index], &self.params.layers[index]) else {
            unreachable!("validated layout")
        };
        ConvParams::new(p.weights.clone(), p.bias.clone(), stride, pad)
    }

    fn linear_params(&self, index: usize) -> &LayerParams {
        self.params.layers[index].as_ref().expect("validated layout")
    }

    pub fn check_input(&self, input: &Tensor) -> Result<()> {
        let (h, w) = self.input_hw;
        match *input.shape() {
            [_, c, ih, iw] if c == self.in_channels() && (ih, iw) == (h, w) => Ok(()),
            _ => Err(Error::shape("model input", input.shape(), &[0, self.in_channels(), h, w])),
        }
    }

    /// Run layers `range` on `input`, returning the output and per-layer caches.
    pub fn forward_range(
        &self,
        range: Range<usize>,
        input: &Tensor,
        mode: ForwardMode,
    ) -> Result<(Tensor, Vec<LayerCache>)> {
        let mut x = input.clone();
        let mut caches = Vec::with_capacity(range.len());
        for index in range {
            let (y, cache) = match self.layout.layers[index] {
                LayerDesc::Conv { .. } => {
                    let y = ops::conv2d_forward(&x, &self.conv_params(index)?)?;
                    (y, LayerCache::Conv { input: x })
                }
                LayerDesc::Pool { window, stride } => {
                    let (y, indices) = ops::maxpool_forward(&x, window, stride)?;
                    (y, LayerCache::Pool { indices })
                }
                LayerDesc::Relu => (ops::relu(&x), LayerCache::Relu { input: x }),
                LayerDesc::Dropout { ratio } => {
                    let mode = match mode {
                        ForwardMode::Inference => DropoutMode::Inference,
                        ForwardMode::Train {
                            seed,
                            iteration,
                            first_sample,
                        } => DropoutMode::Train(MaskKey {
                            seed,
                            layer: index as u64,
                            iteration,
                            first_sample,
                        }),
                    };
                    let (y, mask) = ops::dropout_apply(&x, &DropoutState { ratio, mode })?;
                    (y, LayerCache::Dropout { mask })
                }
                LayerDesc::Linear { in_dim, .. } => {
                    let input_shape = x.shape().to_vec();
                    let flat = x.reshape(vec![input_shape[0], in_dim])?;
                    let p = self.linear_params(index);
                    let y = ops::linear_forward(&flat, &p.weights, &p.bias)?;
                    (y, LayerCache::Linear { input: flat, input_shape })
                }
                LayerDesc::Softmax => (x, LayerCache::Identity),
            };
            x = y;
            caches.push(cache);
        }
        Ok((x, caches))
    }

    /// Backward through layers `range` given the caches of the matching
    /// forward call. Returns the input gradient and parameter gradients for
    /// every layer of the model (layers outside `range` are `None`).
    pub fn backward_range(
        &self,
        range: Range<usize>,
        caches: &[LayerCache],
        grad_out: &Tensor,
    ) -> Result<(Tensor, Params)> {
        if caches.len() != range.len() {
            return Err(Error::invalid("cache count does not match layer range"));
        }
        let mut grads = Params {
            layers: vec![None; self.layout.len()],
        };
        let mut g = grad_out.clone();
        for (index, cache) in range.clone().rev().zip(caches.iter().rev()) {
            g = match cache {
                LayerCache::Conv { input } => {
                    let cg = ops::conv2d_backward(input, &self.conv_params(index)?, &g)?;
                    grads.layers[index] = Some(LayerParams {
                        weights: cg.weights,
                        bias: cg.bias,
                    });
                    cg.input
                }
                LayerCache::Pool { indices } => ops::maxpool_backward(indices, &g)?,
                LayerCache::Relu { input } => ops::relu_backward(input, &g)?,
                LayerCache::Dropout { mask } => ops::dropout_backward(mask.as_ref(), &g)?,
                LayerCache::Linear { input, input_shape } => {
                    let p = self.linear_params(index);
                    let lg = ops::linear_backward(input, &p.weights, &p.bias, &g)?;
                    grads.layers[index] = Some(LayerParams {
                        weights: lg.weights,
                        bias: lg.bias,
                    });
                    lg.input.reshape(input_shape.clone())?
                }
                LayerCache::Identity => g,
            };
        }
        Ok((g, grads))
    }

    pub fn logits(&self, input: &Tensor, mode: ForwardMode) -> Result<Tensor> {
        self.check_input(input)?;
        Ok(self.forward_range(0..self.layout.len(), input, mode)?.0)
    }

    /// Mean softmax cross-entropy over the batch and its parameter gradients.
    pub fn loss_and_grads(&self, input: &Tensor, labels: &[usize], mode: ForwardMode) -> Result<(f64, Params)> {
        self.check_input(input)?;
        let n = self.layout.len();
        let (logits, caches) = self.forward_range(0..n, input, mode)?;
        let (loss, grad) = ops::softmax_cross_entropy(&logits, labels)?;
        let (_, grads) = self.backward_range(0..n, &caches, &grad)?;
        Ok((loss, grads))
    }

    /// Inference-mode class probabilities, `N × num_classes`.
    pub fn probabilities(&self, input: &Tensor) -> Result<Tensor> {
        ops::softmax_rows(&self.logits(input, ForwardMode::Inference)?)
    }
}
