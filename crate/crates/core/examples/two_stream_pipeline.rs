//! End to end at desk scale: synthesize moving-bar clips where half the
//! classes differ only in appearance and half only in motion, train one toy
//! network per stream, then fuse their ten-crop scores.

use twostream::augment::CanvasSpec;
use twostream::dataset::ClipSampler;
use twostream::eval::{evaluate, EvalOptions, ModelScorer, ScoreSpace, VideoPair};
use twostream::model::{build_toy_model, Model, ModelConfig, Stream};
use twostream::schedule::StepSchedule;
use twostream::synth::{generate, SynthConfig, Variant};
use twostream::trainer::{run_training, SyncPolicy, TrainConfig};
use twostream::Result;

fn train(stream: Stream, videos: Vec<twostream::dataset::Video>, canvas: &CanvasSpec, classes: usize) -> Result<Model> {
    let mut sampler = ClipSampler::new(videos, stream, canvas.clone(), 20.0, true, 7)?;
    let mc = ModelConfig::toy_with_dropout(stream, classes, (16, 16), 32, &[0.5, 0.5], 3)?;
    let mut model = build_toy_model(&mc)?;
    let cfg = TrainConfig {
        schedule: StepSchedule {
            base_lr: 0.01,
            decay_factor: 0.1,
            step_iters: 200,
            stop_iter: 300,
        },
        batch: 16,
        workers: 2,
        policy: SyncPolicy::default(),
        momentum: 0.9,
        weight_decay: 0.0,
        seed: 11,
        wall_clock: false,
    };
    let records = run_training(&cfg, &mut model, &mut sampler, |_| Ok(()))?;
    println!("{stream}: final loss {:.4}", records.last().map_or(f64::NAN, |r| r.loss));
    Ok(model)
}

fn main() -> Result<()> {
    let data = SynthConfig {
        classes: 4,
        variant: Variant::Complementary,
        ..Default::default()
    };
    let pairs = generate(&data)?;
    let canvas = CanvasSpec {
        width: 32,
        height: 24,
        scale_set: vec![24, 21, 18, 15],
        out_size: 16,
    };
    let spatial = train(Stream::Spatial, pairs.iter().map(|p| p.0.clone()).collect(), &canvas, 4)?;
    let temporal = train(Stream::Temporal, pairs.iter().map(|p| p.1.clone()).collect(), &canvas, 4)?;

    let opts = EvalOptions {
        canvas,
        ..Default::default()
    };
    let s = ModelScorer { model: &spatial, space: ScoreSpace::Probability };
    let t = ModelScorer { model: &temporal, space: ScoreSpace::Probability };
    let videos = pairs.into_iter().map(|(rgb, flow)| Ok(VideoPair { rgb, flow }));
    let report = evaluate(&s, &t, videos, &opts)?;
    let sum = report.summary;
    println!(
        "accuracy over {} videos: spatial {:.3} temporal {:.3} fused {:.3}",
        sum.videos, sum.spatial_acc, sum.temporal_acc, sum.fused_acc
    );
    Ok(())
}
