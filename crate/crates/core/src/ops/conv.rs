use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Weights `(out_ch, in_ch, kh, kw)`, bias `(out_ch)`, symmetric zero padding.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams {
    pub weights: Tensor,
    pub bias: Tensor,
    pub stride: usize,
    pub pad: usize,
}

impl ConvParams {
    pub fn new(weights: Tensor, bias: Tensor, stride: usize, pad: usize) -> Result<Self> {
        if weights.rank() != 4 {
            return Err(Error::invalid(format!(
                "conv weights must be rank 4, got {:?}",
                weights.shape()
            )));
        }
        bias.ensure_shape("conv bias", &[weights.shape()[0]])?;
        if stride == 0 {
            return Err(Error::invalid("conv stride must be positive"));
        }
        Ok(ConvParams {
            weights,
            bias,
            stride,
            pad,
        })
    }

    pub fn out_channels(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weights.shape()[1]
    }

    fn kernel(&self) -> (usize, usize) {
        (self.weights.shape()[2], self.weights.shape()[3])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads {
    pub input: Tensor,
    pub weights: Tensor,
    pub bias: Tensor,
}

/// Output extent along one spatial axis, or `None` when the kernel does not fit.
pub fn conv_output_dim(size: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = size + 2 * pad;
    if kernel == 0 || stride == 0 || padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

struct Geometry {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    o: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
}

fn geometry(input: &Tensor, p: &ConvParams) -> Result<Geometry> {
    let s = input.shape();
    if s.len() != 4 || s[1] != p.in_channels() {
        return Err(Error::shape("conv2d input vs weights", s, p.weights.shape()));
    }
    let (kh, kw) = p.kernel();
    let (oh, ow) = match (
        conv_output_dim(s[2], kh, p.stride, p.pad),
        conv_output_dim(s[3], kw, p.stride, p.pad),
    ) {
        (Some(oh), Some(ow)) => (oh, ow),
        _ => return Err(Error::shape("conv2d input vs weights", s, p.weights.shape())),
    };
    Ok(Geometry {
        n: s[0],
        c: s[1],
        h: s[2],
        w: s[3],
        o: p.out_channels(),
        kh,
        kw,
        oh,
        ow,
    })
}

/// Range of output coordinates whose receptive field touches input row/col
/// `k - pad + out * stride` inside `[0, size)`.
fn valid_range(k: usize, pad: usize, stride: usize, size: usize, out: usize) -> (usize, usize) {
    // smallest o with o*stride + k >= pad
    let lo = if k >= pad {
        0
    } else {
        (pad - k).div_ceil(stride)
    };
    // largest o with o*stride + k - pad < size
    let hi = if size + pad > k {
        ((size + pad - k - 1) / stride + 1).min(out)
    } else {
        0
    };
    (lo.min(hi), hi)
}

pub fn conv2d_forward(input: &Tensor, p: &ConvParams) -> Result<Tensor> {
    let g = geometry(input, p)?;
    let x = input.data();
    let wt = p.weights.data();
    let mut out = vec![0.0; g.n * g.o * g.oh * g.ow];
    for n in 0..g.n {
        for o in 0..g.o {
            let plane = &mut out[(n * g.o + o) * g.oh * g.ow..][..g.oh * g.ow];
            plane.fill(p.bias.data()[o]);
            for c in 0..g.c {
                let xin = &x[(n * g.c + c) * g.h * g.w..][..g.h * g.w];
                for ky in 0..g.kh {
                    let (y0, y1) = valid_range(ky, p.pad, p.stride, g.h, g.oh);
                    for kx in 0..g.kw {
                        let wv = wt[((o * g.c + c) * g.kh + ky) * g.kw + kx];
                        let (x0, x1) = valid_range(kx, p.pad, p.stride, g.w, g.ow);
                        for oy in y0..y1 {
                            let iy = oy * p.stride + ky - p.pad;
                            let row = &xin[iy * g.w..][..g.w];
                            let orow = &mut plane[oy * g.ow..][..g.ow];
                            for ox in x0..x1 {
                                orow[ox] += wv * row[ox * p.stride + kx - p.pad];
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![g.n, g.o, g.oh, g.ow], out)
}

pub fn conv2d_backward(input: &Tensor, p: &ConvParams, grad_out: &Tensor) -> Result<ConvGrads> {
    let g = geometry(input, p)?;
    grad_out.ensure_shape("conv2d grad_out", &[g.n, g.o, g.oh, g.ow])?;
    let x = input.data();
    let wt = p.weights.data();
    let go = grad_out.data();
    let mut gx = vec![0.0; x.len()];
    let mut gw = vec![0.0; wt.len()];
    let mut gb = vec![0.0; g.o];
    for n in 0..g.n {
        for o in 0..g.o {
            let gplane = &go[(n * g.o + o) * g.oh * g.ow..][..g.oh * g.ow];
            gb[o] += gplane.iter().sum::<f64>();
            for c in 0..g.c {
                let base = (n * g.c + c) * g.h * g.w;
                for ky in 0..g.kh {
                    let (y0, y1) = valid_range(ky, p.pad, p.stride, g.h, g.oh);
                    for kx in 0..g.kw {
                        let widx = ((o * g.c + c) * g.kh + ky) * g.kw + kx;
                        let wv = wt[widx];
                        let (x0, x1) = valid_range(kx, p.pad, p.stride, g.w, g.ow);
                        let mut acc = 0.0;
                        for oy in y0..y1 {
                            let iy = oy * p.stride + ky - p.pad;
                            let row = base + iy * g.w;
                            for ox in x0..x1 {
                                let gval = gplane[oy * g.ow + ox];
                                let ix = row + ox * p.stride + kx - p.pad;
                                acc += gval * x[ix];
                                gx[ix] += gval * wv;
                            }
                        }
                        gw[widx] += acc;
                    }
                }
            }
        }
    }
    Ok(ConvGrads {
        input: Tensor::new(input.shape().to_vec(), gx)?,
        weights: Tensor::new(p.weights.shape().to_vec(), gw)?,
        bias: Tensor::new(vec![g.o], gb)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(w: Tensor, stride: usize, pad: usize) -> ConvParams {
        let o = w.shape()[0];
        ConvParams::new(w, Tensor::zeros(&[o]), stride, pad).unwrap()
    }

    #[test]
    fn ones_kernel_sums_window() {
        let p = params(Tensor::full(&[1, 1, 3, 3], 1.0), 1, 0);
        let y = conv2d_forward(&Tensor::full(&[1, 1, 3, 3], 1.0), &p).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1, 1]);
        assert_eq!(y.data(), &[9.0]);
    }

    #[test]
    fn diagonal_kernel() {
        let x = Tensor::new(vec![1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let w = Tensor::new(vec![1, 1, 2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let y = conv2d_forward(&x, &params(w, 1, 0)).unwrap();
        assert_eq!(y.data(), &[5.0]);
    }

    #[test]
    fn delta_kernel_is_identity_for_odd_sizes() {
        for k in [1usize, 3, 5] {
            let mut w = Tensor::zeros(&[1, 1, k, k]);
            w.set(&[0, 0, k / 2, k / 2], 1.0);
            let x = Tensor::from_fn(&[2, 1, 6, 7], |i| (i as f64 * 0.37).sin());
            let y = conv2d_forward(&x, &params(w, 1, (k - 1) / 2)).unwrap();
            assert_eq!(y, x);
        }
    }

    #[test]
    fn strided_padded_shape() {
        let p = params(Tensor::full(&[4, 2, 3, 3], 0.1), 2, 1);
        let y = conv2d_forward(&Tensor::zeros(&[1, 2, 7, 8]), &p).unwrap();
        assert_eq!(y.shape(), &[1, 4, 4, 4]);
    }

    #[test]
    fn scalar_chain_rule() {
        let x = Tensor::new(vec![1, 1, 1, 1], vec![1.5]).unwrap();
        let w = Tensor::new(vec![1, 1, 1, 1], vec![-2.0]).unwrap();
        let p = ConvParams::new(w, Tensor::new(vec![1], vec![0.25]).unwrap(), 1, 0).unwrap();
        let g = Tensor::new(vec![1, 1, 1, 1], vec![3.0]).unwrap();
        let grads = conv2d_backward(&x, &p, &g).unwrap();
        assert_eq!(grads.input.data(), &[-6.0]);
        assert_eq!(grads.weights.data(), &[4.5]);
        assert_eq!(grads.bias.data(), &[3.0]);
    }

    #[test]
    fn zero_upstream_gradient() {
        let x = Tensor::from_fn(&[1, 2, 5, 5], |i| i as f64);
        let p = params(Tensor::full(&[3, 2, 3, 3], 0.5), 1, 1);
        let grads = conv2d_backward(&x, &p, &Tensor::zeros(&[1, 3, 5, 5])).unwrap();
        assert!(grads.input.data().iter().all(|&v| v == 0.0));
        assert!(grads.weights.data().iter().all(|&v| v == 0.0));
        assert!(grads.bias.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mismatches_name_both_shapes() {
        let p = params(Tensor::full(&[1, 3, 3, 3], 1.0), 1, 0);
        let err = conv2d_forward(&Tensor::zeros(&[1, 2, 5, 5]), &p).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[1, 2, 5, 5]") && msg.contains("[1, 3, 3, 3]"), "{msg}");
        assert!(conv2d_forward(&Tensor::zeros(&[1, 3, 2, 2]), &p).is_err());
        let x = Tensor::zeros(&[1, 3, 4, 4]);
        assert!(conv2d_backward(&x, &p, &Tensor::zeros(&[1, 1, 3, 3])).is_err());
    }
}
