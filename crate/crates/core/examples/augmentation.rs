//! Corner cropping with scale jitter at the full 340×256 geometry, and the
//! ten-crop test-time view.

use std::collections::HashMap;

use twostream::augment::{apply_crop, crop_space, sample_crop, CanvasSpec, InputKind};
use twostream::eval::ten_crop;
use twostream::{Result, Tensor};

fn main() -> Result<()> {
    let canvas = CanvasSpec::default();
    println!("{} distinct training crops", crop_space(&canvas).len());

    let mut widths = HashMap::new();
    for seed in 0..10_000 {
        *widths.entry(sample_crop(&canvas, seed).crop_w).or_insert(0) += 1;
    }
    let mut widths: Vec<_> = widths.into_iter().collect();
    widths.sort();
    println!("crop width histogram over 10k draws: {widths:?}");

    let image = Tensor::from_fn(&[3, canvas.height, canvas.width], |i| (i % 256) as f64);
    for seed in 0..3 {
        let cs = sample_crop(&canvas, seed);
        let out = apply_crop(&image, &cs, &canvas, InputKind::Rgb)?;
        println!("{cs} -> {:?}", out.shape());
    }
    let views = ten_crop(&image, &canvas, InputKind::Rgb)?;
    println!("ten-crop: {} views of {:?}", views.len(), views[0].shape());
    Ok(())
}
