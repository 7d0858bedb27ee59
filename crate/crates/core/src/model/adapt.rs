use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Initialize a `target_channels`-input first layer from a pretrained one:
/// average each filter across its input channels, then repeat that mean
/// slice `target_channels` times. No magnitude rescaling is applied, so the
/// response to a constant input grows by `target_channels / C`. Filters whose
/// channel slices are already equal come back unchanged.
pub fn adapt_first_layer(weights: &Tensor, target_channels: usize) -> Result<Tensor> {
    let [k, c, h, w] = *weights.shape() else {
        return Err(Error::invalid(format!(
            "first-layer weights must be K×C×h×w, got {:?}",
            weights.shape()
        )));
    };
    if target_channels == 0 {
        return Err(Error::invalid("target channel count must be positive"));
    }
    let slice = h * w;
    let mut out = Vec::with_capacity(k * target_channels * slice);
    for filter in weights.data().chunks_exact(c * slice) {
        let mean: Vec<f64> = (0..slice)
            .map(|i| {
                (0..c).fold(0.0, |m, ch| m + (filter[ch * slice + i] - m) / (ch + 1) as f64)
            })
            .collect();
        for _ in 0..target_channels {
            out.extend_from_slice(&mean);
        }
    }
    Tensor::new(vec![k, target_channels, h, w], out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_slices_are_preserved() {
        let x = [0.5, -1.0, 2.0, 0.25];
        let w = Tensor::from_fn(&[1, 3, 2, 2], |i| x[i % 4]);
        let a = adapt_first_layer(&w, 20).unwrap();
        assert_eq!(a.shape(), &[1, 20, 2, 2]);
        for c in 0..20 {
            for (i, &v) in x.iter().enumerate() {
                assert_eq!(a.get(&[0, c, i / 2, i % 2]), v);
            }
        }
        assert_eq!(adapt_first_layer(&w, 3).unwrap(), w);
    }

    #[test]
    fn averages_channels() {
        let w = Tensor::new(vec![1, 3, 1, 1], vec![0.3, 0.6, 0.9]).unwrap();
        let a = adapt_first_layer(&w, 20).unwrap();
        assert!(a.data().iter().all(|&v| (v - 0.6).abs() < 1e-15));
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(adapt_first_layer(&Tensor::zeros(&[3, 3, 3]), 20).is_err());
        assert!(adapt_first_layer(&Tensor::zeros(&[1, 3, 3, 3]), 0).is_err());
    }
}
