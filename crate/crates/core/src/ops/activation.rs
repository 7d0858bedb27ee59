use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub fn relu(input: &Tensor) -> Tensor {
    input.map(|v| v.max(0.0))
}

/// Gradient is passed only where `input > 0`; exactly zero gets zero.
pub fn relu_backward(input: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    grad_out.ensure_shape("relu grad_out", input.shape())?;
    let data = input
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::new(input.shape().to_vec(), data)
}

/// Row-wise softmax of an `N×C` tensor, max-subtracted.
pub fn softmax_rows(logits: &Tensor) -> Result<Tensor> {
    if logits.rank() != 2 {
        return Err(Error::invalid(format!(
            "softmax expects N×C logits, got {:?}",
            logits.shape()
        )));
    }
    let c = logits.shape()[1];
    let mut out = Vec::with_capacity(logits.numel());
    for row in logits.data().chunks_exact(c) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|&v| (v - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        out.extend(exps.into_iter().map(|e| e / z));
    }
    Tensor::new(logits.shape().to_vec(), out)
}

/// Mean cross-entropy over the batch and its gradient `(softmax - onehot) / N`.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    if logits.rank() != 2 || logits.shape()[0] != labels.len() {
        return Err(Error::shape("softmax_cross_entropy", logits.shape(), &[labels.len()]));
    }
    let (n, c) = (logits.shape()[0], logits.shape()[1]);
    if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
        return Err(Error::invalid(format!("label {bad} out of range for {c} classes")));
    }
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(n * c);
    for (row, &label) in logits.data().chunks_exact(c).zip(labels) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = row.iter().map(|&v| (v - max).exp()).sum();
        let log_z = z.ln();
        loss += log_z - (row[label] - max);
        for (j, &v) in row.iter().enumerate() {
            let p = (v - max - log_z).exp();
            let onehot = if j == label { 1.0 } else { 0.0 };
            grad.push((p - onehot) / n as f64);
        }
    }
    Ok((loss / n as f64, Tensor::new(vec![n, c], grad)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_clamps_and_masks() {
        let x = Tensor::new(vec![3], vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(relu(&x).data(), &[0.0, 0.0, 2.0]);
        let g = relu_backward(&x, &Tensor::full(&[3], 5.0)).unwrap();
        assert_eq!(g.data(), &[0.0, 0.0, 5.0]);
    }

    #[test]
    fn relu_positive_is_identity() {
        let x = Tensor::from_fn(&[4], |i| i as f64 + 0.5);
        assert_eq!(relu(&x), x);
        let g = Tensor::from_fn(&[4], |i| -(i as f64));
        assert_eq!(relu_backward(&x, &g).unwrap(), g);
    }

    #[test]
    fn uniform_logits_give_log_classes() {
        let (loss, _) = softmax_cross_entropy(&Tensor::zeros(&[1, 101]), &[7]).unwrap();
        assert!((loss - 101f64.ln()).abs() < 1e-12);
        assert!((loss - 4.61512).abs() < 1e-5);
    }

    #[test]
    fn confident_correct_logit_has_near_zero_loss() {
        let mut logits = Tensor::zeros(&[1, 5]);
        logits.set(&[0, 2], 1000.0);
        let (loss, grad) = softmax_cross_entropy(&logits, &[2]).unwrap();
        assert!(loss.abs() < 1e-12);
        assert!(grad.data().iter().all(|g| g.abs() < 1e-12));
    }

    #[test]
    fn shift_invariance() {
        let logits = Tensor::from_fn(&[3, 4], |i| (i as f64 * 1.3).cos() * 3.0);
        let shifted = logits.map(|v| v + 123.456);
        let (a, ga) = softmax_cross_entropy(&logits, &[0, 3, 1]).unwrap();
        let (b, gb) = softmax_cross_entropy(&shifted, &[0, 3, 1]).unwrap();
        assert!((a - b).abs() < 1e-12);
        assert!(ga.max_abs_diff(&gb) < 1e-12);
    }

    #[test]
    fn label_out_of_range() {
        assert!(softmax_cross_entropy(&Tensor::zeros(&[1, 3]), &[3]).is_err());
        assert!(softmax_cross_entropy(&Tensor::zeros(&[2, 3]), &[0]).is_err());
    }
}
