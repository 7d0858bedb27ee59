//! Training-time crop sampling: four corners plus center, independent
//! width/height jitter from a fixed scale set, and horizontal flips.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CanvasSpec {
    pub width: usize,
    pub height: usize,
    pub scale_set: Vec<usize>,
    pub out_size: usize,
}

impl Default for CanvasSpec {
    fn default() -> Self {
        CanvasSpec {
            width: 340,
            height: 256,
            scale_set: vec![256, 224, 192, 168],
            out_size: 224,
        }
    }
}

impl CanvasSpec {
    pub fn validate(&self) -> Result<()> {
        let max = self
            .scale_set
            .iter()
            .copied()
            .max()
            .ok_or_else(|| Error::invalid("scale set is empty"))?;
        if self.scale_set.contains(&0) {
            return Err(Error::invalid("scale set entries must be positive"));
        }
        if max > self.width.min(self.height) {
            return Err(Error::invalid(format!(
                "crop extent {max} does not fit a {}x{} canvas",
                self.width, self.height
            )));
        }
        if self.out_size == 0 {
            return Err(Error::invalid("out_size must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Position {
    TopLeft,
    TopRight,
    BottomLeft,
    BottomRight,
    Center,
}

impl Position {
    pub const ALL: [Position; 5] = [
        Position::TopLeft,
        Position::TopRight,
        Position::BottomLeft,
        Position::BottomRight,
        Position::Center,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Position::TopLeft => "top-left",
            Position::TopRight => "top-right",
            Position::BottomLeft => "bottom-left",
            Position::BottomRight => "bottom-right",
            Position::Center => "center",
        }
    }

    pub fn index(self) -> usize {
        Position::ALL.iter().position(|&p| p == self).unwrap()
    }
}

impl FromStr for Position {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Position::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown crop position {s:?}")))
    }
}

/// One sampled augmentation decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CropSpec {
    pub crop_w: usize,
    pub crop_h: usize,
    pub position: Position,
    pub flip: bool,
}

/// Single-line record `w,h,position,flip`.
impl fmt::Display for CropSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{},{},{}",
            self.crop_w,
            self.crop_h,
            self.position.name(),
            self.flip
        )
    }
}

impl FromStr for CropSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(',').collect();
        let [w, h, pos, flip] = parts.as_slice() else {
            return Err(Error::invalid(format!("malformed crop record {s:?}")));
        };
        let num = |v: &str| {
            v.parse::<usize>()
                .map_err(|_| Error::invalid(format!("bad crop extent {v:?}")))
        };
        Ok(CropSpec {
            crop_w: num(w)?,
            crop_h: num(h)?,
            position: pos.parse()?,
            flip: flip
                .parse()
                .map_err(|_| Error::invalid(format!("bad flip flag {flip:?}")))?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputKind {
    Rgb,
    /// Interleaved quantized `u, v` channel pairs.
    FlowStack,
}

/// Offsets `(x, y)` in the order top-left, top-right, bottom-left,
/// bottom-right, center.
pub fn corner_offsets(
    canvas_w: usize,
    canvas_h: usize,
    crop_w: usize,
    crop_h: usize,
) -> Result<[(usize, usize); 5]> {
    if crop_w == 0 || crop_h == 0 || crop_w > canvas_w || crop_h > canvas_h {
        return Err(Error::invalid(format!(
            "crop {crop_w}x{crop_h} does not fit canvas {canvas_w}x{canvas_h}"
        )));
    }
    let dx = canvas_w - crop_w;
    let dy = canvas_h - crop_h;
    Ok([(0, 0), (dx, 0), (0, dy), (dx, dy), (dx / 2, dy / 2)])
}

pub fn sample_crop_with<R: Rng + ?Sized>(spec: &CanvasSpec, rng: &mut R) -> CropSpec {
    let n = spec.scale_set.len();
    let crop_w = spec.scale_set[rng.random_range(0..n)];
    let crop_h = spec.scale_set[rng.random_range(0..n)];
    let position = Position::ALL[rng.random_range(0..5)];
    let flip = rng.random::<bool>();
    CropSpec {
        crop_w,
        crop_h,
        position,
        flip,
    }
}

/// Deterministic draw for a given seed.
pub fn sample_crop(spec: &CanvasSpec, seed: u64) -> CropSpec {
    sample_crop_with(spec, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Every configuration `sample_crop` can produce, in a fixed order.
pub fn crop_space(spec: &CanvasSpec) -> Vec<CropSpec> {
    let mut out = Vec::new();
    for &crop_w in &spec.scale_set {
        for &crop_h in &spec.scale_set {
            for position in Position::ALL {
                for flip in [false, true] {
                    out.push(CropSpec {
                        crop_w,
                        crop_h,
                        position,
                        flip,
                    });
                }
            }
        }
    }
    out.sort();
    out.dedup();
    out
}

fn chw(input: &Tensor) -> Result<(usize, usize, usize)> {
    match *input.shape() {
        [c, h, w] => Ok((c, h, w)),
        _ => Err(Error::invalid(format!(
            "expected a C×H×W tensor, got {:?}",
            input.shape()
        ))),
    }
}

/// Window `[x, x+w) × [y, y+h)` of every channel.
pub fn extract_window(input: &Tensor, x: usize, y: usize, w: usize, h: usize) -> Result<Tensor> {
    let (c, ih, iw) = chw(input)?;
    if x + w > iw || y + h > ih || w == 0 || h == 0 {
        return Err(Error::shape("extract_window", &[c, y + h, x + w], input.shape()));
    }
    let src = input.data();
    let mut out = Vec::with_capacity(c * h * w);
    for ch in 0..c {
        for row in y..y + h {
            let start = (ch * ih + row) * iw + x;
            out.extend_from_slice(&src[start..start + w]);
        }
    }
    Tensor::new(vec![c, h, w], out)
}

fn axis_taps(input: usize, output: usize) -> Vec<(usize, usize, f64)> {
    let scale = input as f64 / output as f64;
    (0..output)
        .map(|d| {
            let src = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (input - 1) as f64);
            let lo = src.floor() as usize;
            let hi = (lo + 1).min(input - 1);
            (lo, hi, src - lo as f64)
        })
        .collect()
}

/// Bilinear resize with half-pixel centers and clamp-at-border.
pub fn resize_bilinear(input: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    let (c, h, w) = chw(input)?;
    if out_h == 0 || out_w == 0 {
        return Err(Error::invalid("resize target must be non-empty"));
    }
    if (h, w) == (out_h, out_w) {
        return Ok(input.clone());
    }
    let ys = axis_taps(h, out_h);
    let xs = axis_taps(w, out_w);
    let src = input.data();
    let mut out = Vec::with_capacity(c * out_h * out_w);
    for ch in 0..c {
        let plane = &src[ch * h * w..(ch + 1) * h * w];
        for &(y0, y1, fy) in &ys {
            for &(x0, x1, fx) in &xs {
                let top = plane[y0 * w + x0] * (1.0 - fx) + plane[y0 * w + x1] * fx;
                let bot = plane[y1 * w + x0] * (1.0 - fx) + plane[y1 * w + x1] * fx;
                out.push(top * (1.0 - fy) + bot * fy);
            }
        }
    }
    Tensor::new(vec![c, out_h, out_w], out)
}

/// Mirror the width axis. Flow stacks additionally map every horizontal
/// channel value `q -> 255 - q`, negating the quantized x-displacement.
pub fn flip_input(input: &Tensor, kind: InputKind) -> Result<Tensor> {
    let (c, h, w) = chw(input)?;
    if kind == InputKind::FlowStack && c % 2 != 0 {
        return Err(Error::invalid(format!(
            "flow stack needs an even channel count, got {c}"
        )));
    }
    let mut out = input.clone();
    let data = out.data_mut();
    for ch in 0..c {
        let negate = kind == InputKind::FlowStack && ch % 2 == 0;
        for row in data[ch * h * w..(ch + 1) * h * w].chunks_exact_mut(w) {
            row.reverse();
            if negate {
                row.iter_mut().for_each(|q| *q = 255.0 - *q);
            }
        }
    }
    Ok(out)
}

/// Cut the crop described by `cs` out of a canvas-sized image, resize to
/// `out_size × out_size`, then flip if requested.
pub fn apply_crop(image: &Tensor, cs: &CropSpec, spec: &CanvasSpec, kind: InputKind) -> Result<Tensor> {
    let (c, h, w) = chw(image)?;
    if (h, w) != (spec.height, spec.width) {
        return Err(Error::shape("apply_crop image vs canvas", image.shape(), &[c, spec.height, spec.width]));
    }
    let offsets = corner_offsets(spec.width, spec.height, cs.crop_w, cs.crop_h)?;
    let (x, y) = offsets[cs.position.index()];
    let window = extract_window(image, x, y, cs.crop_w, cs.crop_h)?;
    let resized = resize_bilinear(&window, spec.out_size, spec.out_size)?;
    if cs.flip {
        flip_input(&resized, kind)
    } else {
        Ok(resized)
    }
}
