//! Turn a 3-channel first layer into a 20-channel one by averaging over
//! input channels and replicating the mean.

use twostream::model::adapt_first_layer;
use twostream::ops::{conv2d_forward, ConvParams};
use twostream::{Result, Tensor};

fn main() -> Result<()> {
    let rgb = Tensor::from_fn(&[4, 3, 3, 3], |i| ((i * 31) % 19) as f64 / 19.0 - 0.5);
    let flow = adapt_first_layer(&rgb, 20)?;
    println!("{:?} -> {:?}", rgb.shape(), flow.shape());

    let respond = |w: &Tensor, c: usize| -> Result<f64> {
        let p = ConvParams::new(w.clone(), Tensor::zeros(&[4]), 1, 0)?;
        Ok(conv2d_forward(&Tensor::full(&[1, c, 5, 5], 1.0), &p)?.data()[0])
    };
    let (a, b) = (respond(&rgb, 3)?, respond(&flow, 20)?);
    println!("constant-input response {a:.6} -> {b:.6}, ratio {:.6}", b / a);
    Ok(())
}
