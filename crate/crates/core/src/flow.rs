//! Optical-flow quantization and 10-frame stacking for the temporal stream.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Flow fields per temporal-net input.
pub const STACK_FRAMES: usize = 10;
/// Default saturation bound in pixels per frame.
pub const DEFAULT_BOUND: f64 = 20.0;

/// Per-pixel displacement between consecutive frames, in pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub u: Tensor,
    pub v: Tensor,
}

impl FlowField {
    pub fn new(u: Tensor, v: Tensor) -> Result<Self> {
        if u.rank() != 2 {
            return Err(Error::invalid(format!("flow planes must be H×W, got {:?}", u.shape())));
        }
        v.ensure_shape("flow v vs u", u.shape())?;
        Ok(FlowField { u, v })
    }

    /// From the on-disk `2×H×W` layout.
    pub fn from_planes(t: &Tensor) -> Result<Self> {
        match *t.shape() {
            [2, _, _] => FlowField::new(t.index_outer(0)?, t.index_outer(1)?),
            _ => Err(Error::invalid(format!("flow field must be 2×H×W, got {:?}", t.shape()))),
        }
    }

    pub fn to_planes(&self) -> Tensor {
        Tensor::stack(&[self.u.clone(), self.v.clone()]).expect("u and v share a shape")
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.u.shape()[0], self.u.shape()[1])
    }
}

fn check_bound(bound: f64) -> Result<()> {
    if !bound.is_finite() || bound <= 0.0 {
        return Err(Error::invalid(format!("flow bound must be positive, got {bound}")));
    }
    Ok(())
}

/// Linear map `[-B, B] -> [0, 255]`, rounded half away from zero and saturated.
pub fn quantize_value(val: f64, bound: f64) -> u8 {
    ((val + bound) * 255.0 / (2.0 * bound)).round().clamp(0.0, 255.0) as u8
}

pub fn dequantize_value(q: f64, bound: f64) -> f64 {
    q * (2.0 * bound) / 255.0 - bound
}

/// Quantized `(u, v)` planes, values in `0..=255`.
pub fn quantize_flow(field: &FlowField, bound: f64) -> Result<(Tensor, Tensor)> {
    check_bound(bound)?;
    let q = |t: &Tensor| t.map(|v| quantize_value(v, bound) as f64);
    Ok((q(&field.u), q(&field.v)))
}

pub fn dequantize_flow(u: &Tensor, v: &Tensor, bound: f64) -> Result<FlowField> {
    check_bound(bound)?;
    FlowField::new(u.map(|q| dequantize_value(q, bound)), v.map(|q| dequantize_value(q, bound)))
}

/// Quantized temporal-net input with channels `[u_t, v_t, ..., u_{t+9}, v_{t+9}]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowStack {
    pub data: Tensor,
    pub bound: f64,
    pub frame_span: usize,
}

pub fn build_stack(fields: &[FlowField], bound: f64, t: usize) -> Result<FlowStack> {
    if fields.len() != STACK_FRAMES {
        return Err(Error::invalid(format!(
            "a flow stack needs exactly {STACK_FRAMES} fields, got {}",
            fields.len()
        )));
    }
    check_bound(bound)?;
    let (h, w) = fields[0].dims();
    let mut planes = Vec::with_capacity(2 * STACK_FRAMES);
    for f in fields {
        if f.dims() != (h, w) {
            return Err(Error::shape("build_stack field dims", f.u.shape(), &[h, w]));
        }
        let (u, v) = quantize_flow(f, bound)?;
        planes.push(u);
        planes.push(v);
    }
    Ok(FlowStack {
        data: Tensor::stack(&planes)?,
        bound,
        frame_span: t,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_and_midpoint() {
        assert_eq!(quantize_value(-20.0, 20.0), 0);
        assert_eq!(quantize_value(20.0, 20.0), 255);
        assert_eq!(quantize_value(0.0, 20.0), 128);
        assert_eq!(quantize_value(-25.0, 20.0), 0);
        assert_eq!(quantize_value(31.0, 20.0), 255);
        assert_eq!(quantize_value(2.0, 20.0), 140);
    }

    #[test]
    fn dequantize_examples() {
        assert_eq!(dequantize_value(0.0, 7.5), -7.5);
        assert_eq!(dequantize_value(255.0, 7.5), 7.5);
        assert!((dequantize_value(128.0, 20.0) - 0.078_431_372_549).abs() < 1e-10);
    }

    #[test]
    fn bad_bound_rejected() {
        let f = FlowField::new(Tensor::zeros(&[2, 2]), Tensor::zeros(&[2, 2])).unwrap();
        assert!(quantize_flow(&f, 0.0).is_err());
        assert!(quantize_flow(&f, -1.0).is_err());
        assert!(quantize_flow(&f, f64::NAN).is_err());
    }

    #[test]
    fn zero_flow_stack_is_128() {
        let f = FlowField::new(Tensor::zeros(&[3, 4]), Tensor::zeros(&[3, 4])).unwrap();
        let s = build_stack(&vec![f; 10], 20.0, 0).unwrap();
        assert_eq!(s.data.shape(), &[20, 3, 4]);
        assert!(s.data.data().iter().all(|&q| q == 128.0));
    }

    #[test]
    fn channel_interleaving() {
        let fields: Vec<FlowField> = (0..10)
            .map(|k| {
                FlowField::new(
                    Tensor::full(&[2, 2], k as f64),
                    Tensor::full(&[2, 2], -(k as f64)),
                )
                .unwrap()
            })
            .collect();
        let s = build_stack(&fields, 20.0, 5).unwrap();
        assert_eq!(s.frame_span, 5);
        for k in 0..10 {
            let u = s.data.index_outer(2 * k).unwrap();
            let v = s.data.index_outer(2 * k + 1).unwrap();
            assert_eq!(u.data()[0], quantize_value(k as f64, 20.0) as f64);
            assert_eq!(v.data()[0], quantize_value(-(k as f64), 20.0) as f64);
        }
    }

    #[test]
    fn wrong_count_or_dims() {
        let f = FlowField::new(Tensor::zeros(&[2, 2]), Tensor::zeros(&[2, 2])).unwrap();
        assert!(build_stack(&vec![f.clone(); 9], 20.0, 0).is_err());
        let mut fields = vec![f; 10];
        fields[4] = FlowField::new(Tensor::zeros(&[3, 2]), Tensor::zeros(&[3, 2])).unwrap();
        assert!(build_stack(&fields, 20.0, 0).is_err());
        assert!(FlowField::new(Tensor::zeros(&[2, 2]), Tensor::zeros(&[2, 3])).is_err());
    }
}
