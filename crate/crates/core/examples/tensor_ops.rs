//! Forward a tiny conv/pool/linear stack and check the conv weight gradient
//! against central finite differences.

use twostream::ops::{
    conv2d_backward, conv2d_forward, finite_diff_grad, linear_forward, maxpool_forward, relative_error, relu,
    softmax_rows, ConvParams,
};
use twostream::{Result, Tensor};

fn main() -> Result<()> {
    let input = Tensor::from_fn(&[1, 2, 6, 6], |i| ((i * 37) % 17) as f64 / 8.0 - 1.0);
    let weights = Tensor::from_fn(&[3, 2, 3, 3], |i| ((i * 13) % 11) as f64 / 20.0 - 0.25);
    let conv = ConvParams::new(weights.clone(), Tensor::zeros(&[3]), 1, 1)?;

    let features = relu(&conv2d_forward(&input, &conv)?);
    let (pooled, _) = maxpool_forward(&features, 2, 2)?;
    let flat = pooled.clone().reshape(vec![1, 27])?;
    let w_fc = Tensor::from_fn(&[27, 4], |i| ((i * 7) % 5) as f64 / 10.0 - 0.2);
    let probs = softmax_rows(&linear_forward(&flat, &w_fc, &Tensor::zeros(&[4]))?)?;
    println!("conv {:?} -> pool {:?} -> probs {:?}", features.shape(), pooled.shape(), probs.data());

    // loss = sum of conv outputs weighted by a fixed pattern
    let pattern = Tensor::from_fn(&[1, 3, 6, 6], |i| (i % 5) as f64 - 2.0);
    let loss = |w: &Tensor| {
        let p = ConvParams::new(w.clone(), Tensor::zeros(&[3]), 1, 1).unwrap();
        let out = conv2d_forward(&input, &p).unwrap();
        out.data().iter().zip(pattern.data()).map(|(a, b)| a * b).sum::<f64>()
    };
    let analytic = conv2d_backward(&input, &conv, &pattern)?.weights;
    let numeric = finite_diff_grad(loss, &weights, 1e-5);
    println!("conv weight gradient relative error {:.3e}", relative_error(&analytic, &numeric));
    Ok(())
}
