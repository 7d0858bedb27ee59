//! Symbolic layer layouts: dimension chaining and parameter counting.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::ops::conv_output_dim;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LayerDesc {
    Conv {
        in_ch: usize,
        out_ch: usize,
        k: usize,
        stride: usize,
        pad: usize,
    },
    Pool {
        window: usize,
        stride: usize,
    },
    Relu,
    Dropout {
        ratio: f64,
    },
    /// A 4-D input is flattened per sample before the affine map.
    Linear {
        in_dim: usize,
        out_dim: usize,
    },
    /// Marks the output as class probabilities; only allowed last.
    Softmax,
}

impl LayerDesc {
    pub fn kind(&self) -> &'static str {
        match self {
            LayerDesc::Conv { .. } => "conv",
            LayerDesc::Pool { .. } => "pool",
            LayerDesc::Relu => "relu",
            LayerDesc::Dropout { .. } => "dropout",
            LayerDesc::Linear { .. } => "linear",
            LayerDesc::Softmax => "softmax",
        }
    }

    pub fn param_count(&self) -> u64 {
        match *self {
            LayerDesc::Conv { in_ch, out_ch, k, .. } => (k * k * in_ch * out_ch + out_ch) as u64,
            LayerDesc::Linear { in_dim, out_dim } => (in_dim * out_dim + out_dim) as u64,
            _ => 0,
        }
    }

    pub fn has_params(&self) -> bool {
        matches!(self, LayerDesc::Conv { .. } | LayerDesc::Linear { .. })
    }
}

impl fmt::Display for LayerDesc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            LayerDesc::Conv {
                in_ch,
                out_ch,
                k,
                stride,
                pad,
            } => write!(f, "conv {in_ch} {out_ch} {k} {stride} {pad}"),
            LayerDesc::Pool { window, stride } => write!(f, "pool {window} {stride}"),
            LayerDesc::Relu => f.write_str("relu"),
            LayerDesc::Dropout { ratio } => write!(f, "dropout {ratio}"),
            LayerDesc::Linear { in_dim, out_dim } => write!(f, "linear {in_dim} {out_dim}"),
            LayerDesc::Softmax => f.write_str("softmax"),
        }
    }
}

impl FromStr for LayerDesc {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut it = s.split_whitespace();
        let kind = it.next().unwrap_or_default();
        let args: Vec<&str> = it.collect();
        let bad = || Error::invalid(format!("malformed layer descriptor {s:?}"));
        let ints = |n: usize| -> Result<Vec<usize>> {
            if args.len() != n {
                return Err(bad());
            }
            args.iter().map(|a| a.parse().map_err(|_| bad())).collect()
        };
        Ok(match kind {
            "conv" => {
                let v = ints(5)?;
                LayerDesc::Conv {
                    in_ch: v[0],
                    out_ch: v[1],
                    k: v[2],
                    stride: v[3],
                    pad: v[4],
                }
            }
            "pool" => {
                let v = ints(2)?;
                LayerDesc::Pool {
                    window: v[0],
                    stride: v[1],
                }
            }
            "linear" => {
                let v = ints(2)?;
                LayerDesc::Linear {
                    in_dim: v[0],
                    out_dim: v[1],
                }
            }
            "relu" if args.is_empty() => LayerDesc::Relu,
            "softmax" if args.is_empty() => LayerDesc::Softmax,
            "dropout" if args.len() == 1 => LayerDesc::Dropout {
                ratio: args[0].parse().map_err(|_| bad())?,
            },
            _ => return Err(bad()),
        })
    }
}

/// Activation geometry flowing between layers (per sample).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActShape {
    Spatial { c: usize, h: usize, w: usize },
    Flat(usize),
}

impl ActShape {
    pub fn numel(&self) -> usize {
        match *self {
            ActShape::Spatial { c, h, w } => c * h * w,
            ActShape::Flat(d) => d,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LayerLayout {
    pub layers: Vec<LayerDesc>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamCount {
    pub per_layer: Vec<u64>,
    pub total: u64,
}

impl LayerLayout {
    pub fn new(layers: Vec<LayerDesc>) -> Self {
        LayerLayout { layers }
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    /// Walk the layout from `input`, returning the activation shape after every
    /// layer. Fails with the index of the first layer that does not chain.
    pub fn chain(&self, input: ActShape) -> Result<Vec<ActShape>> {
        let mut cur = input;
        let mut shapes = Vec::with_capacity(self.layers.len());
        for (index, layer) in self.layers.iter().enumerate() {
            let err = |reason: String| Error::Layout { index, reason };
            cur = match (*layer, cur) {
                (
                    LayerDesc::Conv {
                        in_ch,
                        out_ch,
                        k,
                        stride,
                        pad,
                    },
                    ActShape::Spatial { c, h, w },
                ) => {
                    if in_ch != c {
                        return Err(err(format!("conv expects {in_ch} channels, receives {c}")));
                    }
                    if out_ch == 0 || in_ch == 0 {
                        return Err(err("conv channel counts must be positive".into()));
                    }
                    match (conv_output_dim(h, k, stride, pad), conv_output_dim(w, k, stride, pad)) {
                        (Some(oh), Some(ow)) => ActShape::Spatial { c: out_ch, h: oh, w: ow },
                        _ => return Err(err(format!("kernel {k} does not fit {h}x{w} input"))),
                    }
                }
                (LayerDesc::Pool { window, stride }, ActShape::Spatial { c, h, w }) => {
                    if window == 0 || stride == 0 || window > h || window > w {
                        return Err(err(format!("pool window {window} does not fit {h}x{w} input")));
                    }
                    ActShape::Spatial {
                        c,
                        h: (h - window) / stride + 1,
                        w: (w - window) / stride + 1,
                    }
                }
                (LayerDesc::Conv { .. } | LayerDesc::Pool { .. }, ActShape::Flat(_)) => {
                    return Err(err("spatial layer after flattening".into()));
                }
                (LayerDesc::Relu, s) => s,
                (LayerDesc::Dropout { ratio }, s) => {
                    if !(0.0..1.0).contains(&ratio) {
                        return Err(err(format!("dropout ratio {ratio} outside [0, 1)")));
                    }
                    s
                }
                (LayerDesc::Linear { in_dim, out_dim }, s) => {
                    if s.numel() != in_dim {
                        return Err(err(format!("linear expects {in_dim} inputs, receives {}", s.numel())));
                    }
                    if out_dim == 0 {
                        return Err(err("linear output must be non-empty".into()));
                    }
                    ActShape::Flat(out_dim)
                }
                (LayerDesc::Softmax, s) => {
                    if index + 1 != self.layers.len() {
                        return Err(err("softmax must be the final layer".into()));
                    }
                    s
                }
            };
            shapes.push(cur);
        }
        Ok(shapes)
    }

    pub fn param_count(&self) -> ParamCount {
        let per_layer: Vec<u64> = self.layers.iter().map(LayerDesc::param_count).collect();
        let total = per_layer.iter().sum();
        ParamCount { per_layer, total }
    }

    /// Parameters held by linear layers.
    pub fn fc_param_count(&self) -> u64 {
        self.layers
            .iter()
            .filter(|l| matches!(l, LayerDesc::Linear { .. }))
            .map(LayerDesc::param_count)
            .sum()
    }

    pub fn conv_param_count(&self) -> u64 {
        self.param_count().total - self.fc_param_count()
    }

    /// Index of the first layer after the last conv/pool; activations entering
    /// this layer are what data-parallel workers gather before the fc block.
    pub fn head_start(&self) -> usize {
        self.layers
            .iter()
            .rposition(|l| matches!(l, LayerDesc::Conv { .. } | LayerDesc::Pool { .. }))
            .map_or(0, |i| i + 1)
    }
}

/// Expand linear `(in, out)` dims into linear/relu layers, inserting dropout
/// before the last `ratios.len()` linear layers.
fn place_dropout(fc: &[(usize, usize)], ratios: &[f64]) -> Result<Vec<LayerDesc>> {
    if ratios.len() > fc.len() {
        return Err(Error::invalid(format!(
            "{} dropout ratios given for {} linear layers",
            ratios.len(),
            fc.len()
        )));
    }
    let first_dropped = fc.len() - ratios.len();
    let mut out = Vec::new();
    for (i, &(in_dim, out_dim)) in fc.iter().enumerate() {
        if i >= first_dropped {
            let ratio = ratios[i - first_dropped];
            if ratio > 0.0 {
                out.push(LayerDesc::Dropout { ratio });
            }
        }
        out.push(LayerDesc::Linear { in_dim, out_dim });
        if i + 1 < fc.len() {
            out.push(LayerDesc::Relu);
        }
    }
    Ok(out)
}

/// Desk-scale stand-in network:
/// `conv(in->8,k3)-relu-pool2-conv(8->16,k3)-relu-pool2-flatten-[dropout]-linear-relu-[dropout]-linear`.
///
/// Dropout ratios attach to the last `ratios.len()` linear layers; a zero
/// ratio omits that dropout layer.
pub fn toy_layout(
    in_channels: usize,
    input_hw: (usize, usize),
    hidden: usize,
    num_classes: usize,
    ratios: &[f64],
) -> Result<LayerLayout> {
    let mut layers = vec![
        LayerDesc::Conv {
            in_ch: in_channels,
            out_ch: 8,
            k: 3,
            stride: 1,
            pad: 0,
        },
        LayerDesc::Relu,
        LayerDesc::Pool { window: 2, stride: 2 },
        LayerDesc::Conv {
            in_ch: 8,
            out_ch: 16,
            k: 3,
            stride: 1,
            pad: 0,
        },
        LayerDesc::Relu,
        LayerDesc::Pool { window: 2, stride: 2 },
    ];
    let trunk = LayerLayout::new(layers.clone()).chain(ActShape::Spatial {
        c: in_channels,
        h: input_hw.0,
        w: input_hw.1,
    })?;
    let flat = trunk.last().unwrap().numel();
    layers.extend(place_dropout(&[(flat, hidden), (hidden, num_classes)], ratios)?);
    Ok(LayerLayout::new(layers))
}

/// VGG-16 geometry (13 convs, 3 fc) for parameter and traffic accounting.
pub fn vgg16_layout(in_channels: usize, num_classes: usize, ratios: &[f64]) -> Result<LayerLayout> {
    let stages: [&[usize]; 5] = [&[64, 64], &[128, 128], &[256, 256, 256], &[512, 512, 512], &[512, 512, 512]];
    let mut layers = Vec::new();
    let mut c = in_channels;
    for stage in stages {
        for &out_ch in stage {
            layers.push(LayerDesc::Conv {
                in_ch: c,
                out_ch,
                k: 3,
                stride: 1,
                pad: 1,
            });
            layers.push(LayerDesc::Relu);
            c = out_ch;
        }
        layers.push(LayerDesc::Pool { window: 2, stride: 2 });
    }
    layers.extend(place_dropout(
        &[(512 * 7 * 7, 4096), (4096, 4096), (4096, num_classes)],
        ratios,
    )?);
    layers.push(LayerDesc::Softmax);
    Ok(LayerLayout::new(layers))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_linear_count() {
        let l = LayerLayout::new(vec![LayerDesc::Linear {
            in_dim: 4096,
            out_dim: 101,
        }]);
        assert_eq!(l.param_count().total, 413_797);
        assert_eq!(LayerLayout::default().param_count().total, 0);
    }

    #[test]
    fn vgg16_counts() {
        let l = vgg16_layout(3, 101, &[0.9, 0.9]).unwrap();
        let shapes = l.chain(ActShape::Spatial { c: 3, h: 224, w: 224 }).unwrap();
        assert_eq!(*shapes.last().unwrap(), ActShape::Flat(101));
        let convs = l.layers.iter().filter(|d| matches!(d, LayerDesc::Conv { .. })).count();
        let fcs = l.layers.iter().filter(|d| matches!(d, LayerDesc::Linear { .. })).count();
        assert_eq!((convs, fcs), (13, 3));
        let counts = l.param_count();
        assert!(counts.per_layer.contains(&102_764_544));
        assert_eq!(l.conv_param_count(), 14_714_688);
        assert_eq!(l.fc_param_count(), 119_959_653);
        assert_eq!(counts.total, 134_674_341);
        assert!(l.fc_param_count() as f64 / counts.total as f64 > 0.85);
        assert_eq!(shapes[l.head_start() - 1].numel(), 25_088);
    }

    #[test]
    fn toy_layout_shapes() {
        let l = toy_layout(3, (224, 224), 64, 101, &[0.9, 0.9]).unwrap();
        let shapes = l.chain(ActShape::Spatial { c: 3, h: 224, w: 224 }).unwrap();
        assert_eq!(*shapes.last().unwrap(), ActShape::Flat(101));
        let kinds: Vec<&str> = l.layers.iter().map(LayerDesc::kind).collect();
        assert_eq!(
            kinds,
            ["conv", "relu", "pool", "conv", "relu", "pool", "dropout", "linear", "relu", "dropout", "linear"]
        );
        let one = toy_layout(20, (16, 16), 32, 4, &[0.5]).unwrap();
        assert_eq!(one.layers.iter().filter(|d| d.kind() == "dropout").count(), 1);
        assert!(toy_layout(3, (16, 16), 32, 4, &[0.1, 0.2, 0.3]).is_err());
    }

    #[test]
    fn broken_chain_names_layer() {
        let l = LayerLayout::new(vec![
            LayerDesc::Conv {
                in_ch: 3,
                out_ch: 4,
                k: 3,
                stride: 1,
                pad: 1,
            },
            LayerDesc::Linear { in_dim: 10, out_dim: 2 },
        ]);
        match l.chain(ActShape::Spatial { c: 3, h: 5, w: 5 }) {
            Err(Error::Layout { index, .. }) => assert_eq!(index, 1),
            other => panic!("expected layout error, got {other:?}"),
        }
        let l = LayerLayout::new(vec![LayerDesc::Softmax, LayerDesc::Relu]);
        assert!(l.chain(ActShape::Flat(3)).is_err());
    }

    #[test]
    fn descriptor_text_round_trip() {
        let l = vgg16_layout(20, 101, &[0.9, 0.8]).unwrap();
        for d in &l.layers {
            assert_eq!(d.to_string().parse::<LayerDesc>().unwrap(), *d);
        }
        assert!("conv 1 2 3".parse::<LayerDesc>().is_err());
        assert!("maxout 2".parse::<LayerDesc>().is_err());
    }
}
