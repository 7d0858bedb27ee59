use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearGrads {
    pub input: Tensor,
    pub weights: Tensor,
    pub bias: Tensor,
}

fn dims(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<(usize, usize, usize)> {
    if input.rank() != 2 || weights.rank() != 2 || input.shape()[1] != weights.shape()[0] {
        return Err(Error::shape("linear input vs weights", input.shape(), weights.shape()));
    }
    let (n, d, m) = (input.shape()[0], input.shape()[1], weights.shape()[1]);
    bias.ensure_shape("linear bias", &[m])?;
    Ok((n, d, m))
}

/// `input (N×D) · weights (D×M) + bias (M)`.
pub fn linear_forward(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (n, d, m) = dims(input, weights, bias)?;
    let x = input.data();
    let w = weights.data();
    let mut out = Vec::with_capacity(n * m);
    for row in x.chunks_exact(d) {
        let mut acc = bias.data().to_vec();
        for (k, &xv) in row.iter().enumerate() {
            for (a, &wv) in acc.iter_mut().zip(&w[k * m..(k + 1) * m]) {
                *a += xv * wv;
            }
        }
        out.extend_from_slice(&acc);
    }
    Tensor::new(vec![n, m], out)
}

pub fn linear_backward(
    input: &Tensor,
    weights: &Tensor,
    bias: &Tensor,
    grad_out: &Tensor,
) -> Result<LinearGrads> {
    let (n, d, m) = dims(input, weights, bias)?;
    grad_out.ensure_shape("linear grad_out", &[n, m])?;
    let x = input.data();
    let w = weights.data();
    let go = grad_out.data();
    let mut gx = vec![0.0; n * d];
    let mut gw = vec![0.0; d * m];
    let mut gb = vec![0.0; m];
    for i in 0..n {
        let grow = &go[i * m..(i + 1) * m];
        for (b, &g) in gb.iter_mut().zip(grow) {
            *b += g;
        }
        for k in 0..d {
            let xv = x[i * d + k];
            let wrow = &w[k * m..(k + 1) * m];
            let mut acc = 0.0;
            for ((gwv, &wv), &g) in gw[k * m..(k + 1) * m].iter_mut().zip(wrow).zip(grow) {
                *gwv += xv * g;
                acc += wv * g;
            }
            gx[i * d + k] = acc;
        }
    }
    Ok(LinearGrads {
        input: Tensor::new(vec![n, d], gx)?,
        weights: Tensor::new(vec![d, m], gw)?,
        bias: Tensor::new(vec![m], gb)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_bias() {
        let eye = Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let x = Tensor::new(vec![1, 2], vec![1.0, 2.0]).unwrap();
        assert_eq!(linear_forward(&x, &eye, &Tensor::zeros(&[2])).unwrap(), x);
        let b = Tensor::new(vec![2], vec![10.0, 20.0]).unwrap();
        assert_eq!(linear_forward(&x, &eye, &b).unwrap().data(), &[11.0, 22.0]);
    }

    #[test]
    fn inner_dimension_mismatch() {
        let x = Tensor::zeros(&[2, 3]);
        let w = Tensor::zeros(&[4, 2]);
        assert!(linear_forward(&x, &w, &Tensor::zeros(&[2])).is_err());
        let w = Tensor::zeros(&[3, 2]);
        assert!(linear_forward(&x, &w, &Tensor::zeros(&[3])).is_err());
    }
}
