use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Identifies the mask stream for one dropout layer at one iteration.
///
/// Row `i` of the input draws from a generator keyed by
/// `(seed, layer, iteration, first_sample + i)`, so a batch split across
/// workers reproduces exactly the masks of the undivided batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaskKey {
    pub seed: u64,
    pub layer: u64,
    pub iteration: u64,
    pub first_sample: u64,
}

impl MaskKey {
    fn rng_for_row(&self, row: u64) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&self.layer.to_le_bytes());
        key[16..24].copy_from_slice(&self.iteration.to_le_bytes());
        key[24..].copy_from_slice(&(self.first_sample + row).to_le_bytes());
        ChaCha8Rng::from_seed(key)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropoutMode {
    Train(MaskKey),
    Inference,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DropoutState {
    pub ratio: f64,
    pub mode: DropoutMode,
}

/// Inverted dropout. Returns the output and, in train mode, the scaled mask
/// (entries `0` or `1/(1-ratio)`) needed by [`dropout_backward`].
pub fn dropout_apply(input: &Tensor, state: &DropoutState) -> Result<(Tensor, Option<Tensor>)> {
    if !(0.0..1.0).contains(&state.ratio) {
        return Err(Error::invalid(format!(
            "dropout ratio must lie in [0, 1), got {}",
            state.ratio
        )));
    }
    let key = match state.mode {
        DropoutMode::Inference => return Ok((input.clone(), None)),
        DropoutMode::Train(_) if state.ratio == 0.0 => return Ok((input.clone(), None)),
        DropoutMode::Train(key) => key,
    };
    let scale = 1.0 / (1.0 - state.ratio);
    let rows = input.shape()[0];
    let per_row = input.numel() / rows;
    let mut mask = Vec::with_capacity(input.numel());
    for r in 0..rows {
        let mut rng = key.rng_for_row(r as u64);
        mask.extend((0..per_row).map(|_| {
            if rng.random::<f64>() < state.ratio {
                0.0
            } else {
                scale
            }
        }));
    }
    let mask = Tensor::new(input.shape().to_vec(), mask)?;
    let out = input
        .data()
        .iter()
        .zip(mask.data())
        .map(|(x, m)| x * m)
        .collect();
    Ok((Tensor::new(input.shape().to_vec(), out)?, Some(mask)))
}

pub fn dropout_backward(mask: Option<&Tensor>, grad_out: &Tensor) -> Result<Tensor> {
    match mask {
        None => Ok(grad_out.clone()),
        Some(m) => {
            grad_out.ensure_shape("dropout grad_out", m.shape())?;
            let data = grad_out.data().iter().zip(m.data()).map(|(g, m)| g * m).collect();
            Tensor::new(m.shape().to_vec(), data)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn train(ratio: f64, seed: u64) -> DropoutState {
        DropoutState {
            ratio,
            mode: DropoutMode::Train(MaskKey {
                seed,
                layer: 3,
                iteration: 11,
                first_sample: 0,
            }),
        }
    }

    #[test]
    fn zero_ratio_and_inference_are_identity() {
        let x = Tensor::from_fn(&[4, 5], |i| i as f64 - 3.0);
        assert_eq!(dropout_apply(&x, &train(0.0, 1)).unwrap().0, x);
        let inf = DropoutState {
            ratio: 0.9,
            mode: DropoutMode::Inference,
        };
        let (y, mask) = dropout_apply(&x, &inf).unwrap();
        assert_eq!(y, x);
        assert!(mask.is_none());
    }

    #[test]
    fn ratio_one_is_rejected() {
        let x = Tensor::zeros(&[1, 3]);
        assert!(dropout_apply(&x, &train(1.0, 0)).is_err());
        assert!(dropout_apply(&x, &train(-0.1, 0)).is_err());
    }

    #[test]
    fn large_sample_statistics() {
        let x = Tensor::full(&[1, 1_000_000], 1.0);
        let (y, _) = dropout_apply(&x, &train(0.8, 42)).unwrap();
        let zeros = y.data().iter().filter(|&&v| v == 0.0).count() as f64 / 1e6;
        assert!((zeros - 0.8).abs() < 0.005, "zero fraction {zeros}");
        assert!((y.mean() - 1.0).abs() < 0.02, "mean {}", y.mean());
    }

    #[test]
    fn masks_are_keyed_per_row() {
        let x = Tensor::full(&[6, 50], 1.0);
        let (full, _) = dropout_apply(&x, &train(0.5, 9)).unwrap();
        let tail = x.slice_outer(4, 6).unwrap();
        let mut st = train(0.5, 9);
        if let DropoutMode::Train(ref mut k) = st.mode {
            k.first_sample = 4;
        }
        let (part, _) = dropout_apply(&tail, &st).unwrap();
        assert_eq!(part, full.slice_outer(4, 6).unwrap());
        assert_eq!(dropout_apply(&x, &train(0.5, 9)).unwrap().0, full);
        assert_ne!(dropout_apply(&x, &train(0.5, 10)).unwrap().0, full);
    }

    #[test]
    fn backward_applies_mask() {
        let x = Tensor::full(&[2, 8], 1.0);
        let (y, mask) = dropout_apply(&x, &train(0.5, 3)).unwrap();
        let g = dropout_backward(mask.as_ref(), &Tensor::full(&[2, 8], 1.0)).unwrap();
        assert_eq!(g, y);
    }
}
