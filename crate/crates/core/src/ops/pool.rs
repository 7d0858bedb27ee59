use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Argmax positions recorded by [`maxpool_forward`]; each entry is an offset
/// inside its `H×W` input plane.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolIndices {
    pub input_shape: Vec<usize>,
    pub indices: Vec<usize>,
}

/// Max pooling over NCHW input. Output extents are floor-divided, so windows
/// that would overrun the right or bottom edge are dropped. Ties go to the
/// first element in row-major scan order.
pub fn maxpool_forward(input: &Tensor, window: usize, stride: usize) -> Result<(Tensor, PoolIndices)> {
    let s = input.shape();
    if s.len() != 4 {
        return Err(Error::invalid(format!("maxpool expects NCHW input, got {s:?}")));
    }
    if window == 0 || stride == 0 {
        return Err(Error::invalid("maxpool window and stride must be positive"));
    }
    let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
    if window > h || window > w {
        return Err(Error::invalid(format!(
            "pool window {window} larger than input plane {h}x{w}"
        )));
    }
    let oh = (h - window) / stride + 1;
    let ow = (w - window) / stride + 1;
    let x = input.data();
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut idx = Vec::with_capacity(n * c * oh * ow);
    for plane in x.chunks_exact(h * w) {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = f64::NEG_INFINITY;
                let mut best_at = usize::MAX;
                for ky in 0..window {
                    for kx in 0..window {
                        let at = (oy * stride + ky) * w + ox * stride + kx;
                        if best_at == usize::MAX || plane[at] > best {
                            best = plane[at];
                            best_at = at;
                        }
                    }
                }
                out.push(best);
                idx.push(best_at);
            }
        }
    }
    Ok((
        Tensor::new(vec![n, c, oh, ow], out)?,
        PoolIndices {
            input_shape: s.to_vec(),
            indices: idx,
        },
    ))
}

pub fn maxpool_backward(indices: &PoolIndices, grad_out: &Tensor) -> Result<Tensor> {
    let s = &indices.input_shape;
    if grad_out.numel() != indices.indices.len()
        || grad_out.rank() != 4
        || grad_out.shape()[..2] != s[..2]
    {
        return Err(Error::shape("maxpool grad_out", grad_out.shape(), s));
    }
    let plane_in = s[2] * s[3];
    let plane_out = grad_out.shape()[2] * grad_out.shape()[3];
    let mut gx = vec![0.0; s.iter().product()];
    for (i, (&g, &at)) in grad_out.data().iter().zip(&indices.indices).enumerate() {
        gx[(i / plane_out) * plane_in + at] += g;
    }
    Tensor::new(s.clone(), gx)
}
