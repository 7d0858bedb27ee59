//! Single-process SGD, a simulated K-worker data-parallel step, and the
//! training loop that drives them from a step schedule.

mod comm;

use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use comm::{
    activation_traffic_bytes, break_even_batch, comm_volume, fc_sync_bytes, CommVolume, CostFactor,
    SyncMode, SyncPolicy, TRANSFER_ELEM_BYTES,
};

use crate::error::{Error, Result};
use crate::model::{ForwardMode, Model, Params};
use crate::ops::{self, SgdConfig};
use crate::schedule::StepSchedule;
use crate::tensor::Tensor;

/// Preprocessed inputs `N×C×H×W` with one label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub inputs: Tensor,
    pub labels: Vec<usize>,
}

impl Batch {
    pub fn new(inputs: Tensor, labels: Vec<usize>) -> Result<Self> {
        if inputs.rank() == 0 || inputs.shape()[0] != labels.len() || labels.is_empty() {
            return Err(Error::shape("batch inputs vs labels", inputs.shape(), &[labels.len()]));
        }
        Ok(Batch { inputs, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// One worker's slice of a global batch. Dropout masks are keyed by the
/// global sample index `first_sample + row`, so splitting never changes them.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkerShard {
    pub worker_id: usize,
    pub first_sample: u64,
    pub batch: Batch,
}

/// Cut `batch` into `k` equal, contiguous shards ordered by worker id.
pub fn split_batch(batch: &Batch, k: usize) -> Result<Vec<WorkerShard>> {
    if k == 0 || !batch.len().is_multiple_of(k) {
        return Err(Error::invalid(format!(
            "batch of {} cannot be split evenly across {k} workers",
            batch.len()
        )));
    }
    let per = batch.len() / k;
    (0..k)
        .map(|w| {
            Ok(WorkerShard {
                worker_id: w,
                first_sample: (w * per) as u64,
                batch: Batch::new(
                    batch.inputs.slice_outer(w * per, (w + 1) * per)?,
                    batch.labels[w * per..(w + 1) * per].to_vec(),
                )?,
            })
        })
        .collect()
}

/// Momentum SGD state owned by the training loop.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer {
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: Params,
}

impl Optimizer {
    pub fn new(model: &Model, momentum: f64, weight_decay: f64) -> Self {
        Optimizer {
            momentum,
            weight_decay,
            velocity: Params::zeros_like(&model.params),
        }
    }

    pub fn apply(&mut self, model: &mut Model, grads: &Params, lr: f64) -> Result<()> {
        let cfg = SgdConfig {
            lr,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
        };
        let slots = model
            .params
            .tensors_mut()
            .zip(grads.tensors())
            .zip(self.velocity.tensors_mut());
        for ((p, g), v) in slots {
            ops::sgd_step(p, g, v, cfg)?;
        }
        Ok(())
    }
}

fn check_loss(loss: f64, iter: u64) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::Divergence { iter, loss })
    }
}

/// Forward, backward and one SGD update on a single batch. Dropout masks are
/// keyed by `(seed, layer, iter, sample)`. A non-finite loss aborts before the
/// update, leaving the model untouched.
pub fn train_step(
    model: &mut Model,
    opt: &mut Optimizer,
    batch: &Batch,
    lr: f64,
    seed: u64,
    iter: u64,
) -> Result<f64> {
    let mode = ForwardMode::Train {
        seed,
        iteration: iter,
        first_sample: 0,
    };
    let (loss, grads) = model.loss_and_grads(&batch.inputs, &batch.labels, mode)?;
    check_loss(loss, iter)?;
    opt.apply(model, &grads, lr)?;
    Ok(loss)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub loss: f64,
    pub synced_bytes: u64,
}

/// One worker's contribution to a synchronous step.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkerGrads {
    pub worker_id: usize,
    pub loss: f64,
    pub grads: Params,
}

/// Mean loss and mean gradient over all workers. Contributions are reduced
/// in ascending worker id whatever order they arrive in, so the result is
/// independent of completion order.
pub fn average_gradients(mut parts: Vec<WorkerGrads>) -> Result<(f64, Params)> {
    parts.sort_by_key(|p| p.worker_id);
    let first = parts
        .first()
        .ok_or_else(|| Error::invalid("no worker gradients to average"))?;
    for (i, p) in parts.iter().enumerate() {
        if p.worker_id != i {
            return Err(Error::invalid(format!("worker ids must be 0..{}, found {}", parts.len(), p.worker_id)));
        }
    }
    let k = parts.len() as f64;
    let mut avg = Params::zeros_like(&first.grads);
    let mut loss_sum = 0.0;
    for p in &parts {
        avg.add_scaled(&p.grads, 1.0 / k)?;
        loss_sum += p.loss;
    }
    Ok((loss_sum / k, avg))
}

fn shard_mode(seed: u64, iter: u64, shard: &WorkerShard) -> ForwardMode {
    ForwardMode::Train {
        seed,
        iteration: iter,
        first_sample: shard.first_sample,
    }
}

fn merge(mut trunk: Params, head: Params) -> Params {
    for (t, h) in trunk.layers.iter_mut().zip(head.layers) {
        if h.is_some() {
            *t = h;
        }
    }
    trunk
}

/// Each worker runs the whole network on its shard.
fn full_sync_shards(model: &Model, shards: &[WorkerShard], seed: u64, iter: u64) -> Result<Vec<WorkerGrads>> {
    shards
        .iter()
        .map(|s| {
            let (loss, grads) = model.loss_and_grads(&s.batch.inputs, &s.batch.labels, shard_mode(seed, iter, s))?;
            Ok(WorkerGrads {
                worker_id: s.worker_id,
                loss,
                grads,
            })
        })
        .collect()
}

/// Workers run the conv trunk, a central worker gathers the fc-input
/// activations and runs the fc head block by block, then scatters the
/// activation gradients back for the trunk backward pass.
fn gather_shards(model: &Model, shards: &[WorkerShard], seed: u64, iter: u64) -> Result<Vec<WorkerGrads>> {
    let head = model.layout.head_start();
    let n = model.layout.len();

    let mut trunk_caches = Vec::with_capacity(shards.len());
    let mut gathered = Vec::with_capacity(shards.len());
    for s in shards {
        model.check_input(&s.batch.inputs)?;
        let (features, caches) = model.forward_range(0..head, &s.batch.inputs, shard_mode(seed, iter, s))?;
        trunk_caches.push(caches);
        gathered.push(features);
    }

    let mut scattered = Vec::with_capacity(shards.len());
    for (s, features) in shards.iter().zip(&gathered) {
        let (logits, caches) = model.forward_range(head..n, features, shard_mode(seed, iter, s))?;
        let (loss, grad) = ops::softmax_cross_entropy(&logits, &s.batch.labels)?;
        let (grad_features, head_grads) = model.backward_range(head..n, &caches, &grad)?;
        scattered.push((loss, grad_features, head_grads));
    }

    shards
        .iter()
        .zip(trunk_caches.iter().zip(scattered))
        .map(|(s, (caches, (loss, grad_features, head_grads)))| {
            let (_, trunk_grads) = model.backward_range(0..head, caches, &grad_features)?;
            Ok(WorkerGrads {
                worker_id: s.worker_id,
                loss,
                grads: merge(trunk_grads, head_grads),
            })
        })
        .collect()
}

/// Synchronous data-parallel SGD over `shards`, which must be equally sized
/// and ordered by worker id. Gradients are averaged by accumulating
/// `grad_k / K` in ascending worker order, so the result does not depend on
/// which worker finishes first. The sync mode changes the simulated traffic
/// pattern and the reported bytes, never the arithmetic.
pub fn data_parallel_step(
    model: &mut Model,
    opt: &mut Optimizer,
    shards: &[WorkerShard],
    lr: f64,
    seed: u64,
    iter: u64,
    policy: SyncPolicy,
) -> Result<StepOutcome> {
    let first = shards
        .first()
        .ok_or_else(|| Error::invalid("data-parallel step needs at least one shard"))?;
    let per = first.batch.len();
    for (i, s) in shards.iter().enumerate() {
        if s.worker_id != i {
            return Err(Error::invalid(format!("shard {i} carries worker id {}", s.worker_id)));
        }
        if s.batch.len() != per {
            return Err(Error::invalid(format!(
                "unequal shard sizes: worker 0 has {per}, worker {i} has {}",
                s.batch.len()
            )));
        }
    }
    let k = shards.len();
    let results = match policy.mode {
        SyncMode::FullParamSync => full_sync_shards(model, shards, seed, iter)?,
        SyncMode::ActivationGather => gather_shards(model, shards, seed, iter)?,
    };

    let (loss, avg) = average_gradients(results)?;
    check_loss(loss, iter)?;
    opt.apply(model, &avg, lr)?;

    let fc_input_dim = model.head_input_dim();
    let synced_bytes = comm_volume(&model.layout, k, policy, per, fc_input_dim).total();
    Ok(StepOutcome { loss, synced_bytes })
}

/// Supplies training batches. Implementations must be deterministic in
/// `(iteration, size)` given their construction seed.
pub trait BatchSource {
    fn next_batch(&mut self, iteration: u64, size: usize) -> Result<Batch>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub iter: u64,
    pub loss: f64,
    pub lr: f64,
    pub synced_bytes: u64,
    pub elapsed_ms: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub schedule: StepSchedule,
    pub batch: usize,
    pub workers: usize,
    pub policy: SyncPolicy,
    pub momentum: f64,
    pub weight_decay: f64,
    pub seed: u64,
    /// Record wall-clock time; when false `elapsed_ms` is always zero so
    /// record streams are byte-reproducible.
    pub wall_clock: bool,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        if self.batch == 0 || self.workers == 0 || !self.batch.is_multiple_of(self.workers) {
            return Err(Error::Config(format!(
                "batch {} must be a positive multiple of workers {}",
                self.batch, self.workers
            )));
        }
        Ok(())
    }
}

/// Returned by a training hook to keep going or end the run early.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

/// Iterate data-parallel steps until the schedule stops, calling `on_record`
/// after every iteration.
pub fn run_training(
    cfg: &TrainConfig,
    model: &mut Model,
    data: &mut dyn BatchSource,
    mut on_record: impl FnMut(&TrainRecord) -> Result<()>,
) -> Result<Vec<TrainRecord>> {
    run_training_with(cfg, model, data, |r, _| on_record(r).map(|_| Control::Continue))
}

/// Like [`run_training`], but the hook also sees the updated model and may
/// end the run before the schedule does.
pub fn run_training_with(
    cfg: &TrainConfig,
    model: &mut Model,
    data: &mut dyn BatchSource,
    mut hook: impl FnMut(&TrainRecord, &Model) -> Result<Control>,
) -> Result<Vec<TrainRecord>> {
    cfg.validate()?;
    let mut opt = Optimizer::new(model, cfg.momentum, cfg.weight_decay);
    let start = Instant::now();
    let mut records = Vec::with_capacity(cfg.schedule.stop_iter as usize);
    let mut iter = 0;
    while let Some(lr) = cfg.schedule.lr_at(iter) {
        let batch = data.next_batch(iter, cfg.batch)?;
        let shards = split_batch(&batch, cfg.workers)?;
        let out = data_parallel_step(model, &mut opt, &shards, lr, cfg.seed, iter, cfg.policy)?;
        let record = TrainRecord {
            iter,
            loss: out.loss,
            lr,
            synced_bytes: out.synced_bytes,
            elapsed_ms: if cfg.wall_clock {
                start.elapsed().as_millis() as u64
            } else {
                0
            },
        };
        let control = hook(&record, model)?;
        records.push(record);
        if control == Control::Stop {
            break;
        }
        iter += 1;
    }
    Ok(records)
}
