//! Four simulated workers against a single process on the same batch, and
//! the traffic each sync mode would move at VGG-16 scale.

use twostream::config::RunConfig;
use twostream::cli::cmd_comm_report;
use twostream::model::{build_toy_model, ModelConfig, Stream};
use twostream::trainer::{data_parallel_step, split_batch, train_step, Batch, Optimizer, SyncMode, SyncPolicy};
use twostream::{Result, Tensor};

fn main() -> Result<()> {
    let cfg = ModelConfig::toy_with_dropout(Stream::Spatial, 5, (12, 12), 32, &[], 1)?;
    let single = build_toy_model(&cfg)?;
    let inputs = Tensor::from_fn(&[32, 3, 12, 12], |i| ((i * 7919) % 211) as f64 / 105.0 - 1.0);
    let batch = Batch::new(inputs, (0..32).map(|i| i % 5).collect())?;

    let mut reference = single.clone();
    let mut ref_opt = Optimizer::new(&reference, 0.9, 0.0);
    let mut runs = Vec::new();
    for mode in [SyncMode::FullParamSync, SyncMode::ActivationGather] {
        let policy = SyncPolicy { mode, ..Default::default() };
        runs.push((mode, single.clone(), Optimizer::new(&single, 0.9, 0.0), policy));
    }
    let shards = split_batch(&batch, 4)?;
    for iter in 0..20 {
        train_step(&mut reference, &mut ref_opt, &batch, 0.01, 0, iter)?;
        for (_, model, opt, policy) in &mut runs {
            data_parallel_step(model, opt, &shards, 0.01, 0, iter, *policy)?;
        }
    }
    for (mode, model, _, _) in &runs {
        println!(
            "{mode}: max |param diff| vs single process after 20 steps = {:.3e}",
            model.params.max_abs_diff(&reference.params)
        );
    }
    println!(
        "modes bit-identical: {}",
        runs[0].1.params == runs[1].1.params
    );

    print!("{}", cmd_comm_report(&RunConfig::default())?.to_text());
    Ok(())
}
