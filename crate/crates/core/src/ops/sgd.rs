use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdConfig {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

/// `v <- momentum*v - lr*(g + weight_decay*p); p <- p + v`
pub fn sgd_step(
    params: &mut Tensor,
    grads: &Tensor,
    velocity: &mut Tensor,
    cfg: SgdConfig,
) -> Result<()> {
    if grads.shape() != params.shape() {
        return Err(Error::shape("sgd grads vs params", grads.shape(), params.shape()));
    }
    if velocity.shape() != params.shape() {
        return Err(Error::shape("sgd velocity vs params", velocity.shape(), params.shape()));
    }
    for ((p, &g), v) in params
        .data_mut()
        .iter_mut()
        .zip(grads.data())
        .zip(velocity.data_mut())
    {
        *v = cfg.momentum * *v - cfg.lr * (g + cfg.weight_decay * *p);
        *p += *v;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(lr: f64, momentum: f64) -> SgdConfig {
        SgdConfig {
            lr,
            momentum,
            weight_decay: 0.0,
        }
    }

    #[test]
    fn zero_lr_leaves_params() {
        let mut p = Tensor::from_fn(&[3], |i| i as f64);
        let before = p.clone();
        let mut v = Tensor::zeros(&[3]);
        sgd_step(&mut p, &Tensor::full(&[3], 9.0), &mut v, cfg(0.0, 0.9)).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn plain_step() {
        let mut p = Tensor::scalar(1.0);
        let mut v = Tensor::scalar(0.0);
        sgd_step(&mut p, &Tensor::scalar(0.5), &mut v, cfg(0.1, 0.0)).unwrap();
        assert!((p.data()[0] - 0.95).abs() < 1e-15);
    }

    #[test]
    fn momentum_recurrence() {
        let mut p = Tensor::scalar(0.0);
        let mut v = Tensor::scalar(0.0);
        let g = Tensor::scalar(1.0);
        sgd_step(&mut p, &g, &mut v, cfg(0.1, 0.9)).unwrap();
        assert!((p.data()[0] + 0.1).abs() < 1e-15);
        sgd_step(&mut p, &g, &mut v, cfg(0.1, 0.9)).unwrap();
        assert!((p.data()[0] + 0.29).abs() < 1e-15);
    }

    #[test]
    fn weight_decay_pulls_toward_zero() {
        let mut p = Tensor::scalar(2.0);
        let mut v = Tensor::scalar(0.0);
        let c = SgdConfig {
            lr: 0.5,
            momentum: 0.0,
            weight_decay: 0.1,
        };
        sgd_step(&mut p, &Tensor::scalar(0.0), &mut v, c).unwrap();
        assert!((p.data()[0] - 1.9).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch() {
        let mut p = Tensor::zeros(&[2]);
        let mut v = Tensor::zeros(&[2]);
        assert!(sgd_step(&mut p, &Tensor::zeros(&[3]), &mut v, cfg(0.1, 0.0)).is_err());
        let mut v3 = Tensor::zeros(&[3]);
        assert!(sgd_step(&mut p, &Tensor::zeros(&[2]), &mut v3, cfg(0.1, 0.0)).is_err());
    }
}
