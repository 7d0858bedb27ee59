//! Command implementations behind the `twostream` binary. Each command takes
//! an already validated [`RunConfig`] and explicit paths, so the same code
//! paths are reachable from tests and examples.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::augment::{self, CropSpec};
use crate::config::RunConfig;
use crate::dataset::{load_video, stream_kind, ClipSampler};
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalReport, ModelScorer, VideoPair};
use crate::flow::quantize_value;
use crate::manifest::{check_labels, read_manifest, ManifestRecord};
use crate::model::{
    adapt_first_layer, build_toy_model, load_checkpoint, save_checkpoint, vgg16_layout, Model, ModelConfig,
    Stream,
};
use crate::synth::{write_dataset, SynthConfig, SynthOutput};
use crate::tensor::Tensor;
use crate::trainer::{break_even_batch, comm_volume, run_training, CostFactor, SyncMode, SyncPolicy, TrainRecord};
use crate::tsr::{self, Dtype};

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn write_json_line(out: &mut impl Write, path: &Path, value: &impl Serialize) -> Result<()> {
    let line = serde_json::to_string(value).map_err(|e| Error::Format(e.to_string()))?;
    writeln!(out, "{line}").map_err(|e| Error::io(path, e))
}

pub fn cmd_synth(cfg: &SynthConfig, out_dir: &Path) -> Result<SynthOutput> {
    write_dataset(cfg, out_dir)
}

/// Quantize every element of a real-valued TSR1 tensor to bytes.
pub fn cmd_flow_encode(input: &Path, output: &Path, bound: f64) -> Result<Tensor> {
    if !(bound.is_finite() && bound > 0.0) {
        return Err(Error::Config(format!("flow bound must be positive, got {bound}")));
    }
    let (field, _) = tsr::read(input)?;
    let encoded = field.map(|v| quantize_value(v, bound) as f64);
    tsr::write(output, &encoded, Dtype::U8)?;
    Ok(encoded)
}

/// Read `K×C×h×w` first-layer weights and write them adapted to `target`
/// input channels.
pub fn cmd_adapt(input: &Path, output: &Path, target: usize) -> Result<Tensor> {
    let (weights, _) = tsr::read(input)?;
    let adapted = adapt_first_layer(&weights, target)?;
    tsr::write(output, &adapted, Dtype::F64)?;
    Ok(adapted)
}

/// Draw `n` crops from the config seed, apply each to `image` (or a
/// coordinate ramp when none is given) and write `crops.txt` plus one TSR1
/// per crop.
pub fn cmd_augment_preview(cfg: &RunConfig, n: usize, image: Option<&Path>, out_dir: &Path) -> Result<Vec<CropSpec>> {
    cfg.validate()?;
    let canvas = &cfg.canvas;
    let image = match image {
        Some(p) => tsr::read(p)?.0,
        None => {
            let c = cfg.stream.in_channels();
            let (h, w) = (canvas.height, canvas.width);
            Tensor::from_fn(&[c, h, w], |i| ((i % w) * 255 / (w - 1).max(1)) as f64)
        }
    };
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut listing = String::new();
    let mut specs = Vec::with_capacity(n);
    for i in 0..n {
        let cs = augment::sample_crop_with(canvas, &mut rng);
        let crop = augment::apply_crop(&image, &cs, canvas, cfg.stream.input_kind())?;
        tsr::write(out_dir.join(format!("crop_{i:04}.tsr")), &crop, Dtype::F64)?;
        listing.push_str(&format!("{i}\t{cs}\n"));
        specs.push(cs);
    }
    let path = out_dir.join("crops.txt");
    fs::write(&path, listing).map_err(|e| Error::io(path, e))?;
    Ok(specs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutput {
    pub records: Vec<TrainRecord>,
    pub model: Model,
    pub records_path: PathBuf,
    pub checkpoint: PathBuf,
}

fn load_stream_records(path: &Path, cfg: &RunConfig) -> Result<Vec<ManifestRecord>> {
    let records = read_manifest(path)?;
    check_labels(&records, cfg.num_classes)?;
    let kind = stream_kind(cfg.stream);
    if let Some((i, r)) = records.iter().enumerate().find(|(_, r)| r.kind != kind) {
        return Err(Error::Manifest {
            line: i + 1,
            reason: format!("{} record in a {} training manifest", r.kind, cfg.stream),
        });
    }
    if records.is_empty() {
        return Err(Error::Manifest {
            line: 0,
            reason: "manifest lists no videos".into(),
        });
    }
    Ok(records)
}

/// Train a toy network for `cfg.stream` on the clips in `manifest`, writing
/// `records.jsonl` and a `checkpoint/` directory under `out_dir`.
pub fn cmd_train(cfg: &RunConfig, manifest: &Path, out_dir: &Path) -> Result<TrainOutput> {
    cfg.validate()?;
    let records = load_stream_records(manifest, cfg)?;
    let videos = records.iter().map(load_video).collect::<Result<Vec<_>>>()?;
    let augment = cfg.stream == Stream::Spatial || cfg.augment_flow;
    let mut sampler = ClipSampler::new(videos, cfg.stream, cfg.canvas.clone(), cfg.flow_bound, augment, cfg.seed)?;
    let size = cfg.canvas.out_size;
    let mc = ModelConfig::toy_with_dropout(
        cfg.stream,
        cfg.num_classes,
        (size, size),
        cfg.hidden,
        &cfg.dropout_ratios(),
        cfg.seed,
    )?;
    let mut model = build_toy_model(&mc)?;

    let records_path = out_dir.join("records.jsonl");
    let mut out = create(&records_path)?;
    let train = cfg.train_config();
    let records = run_training(&train, &mut model, &mut sampler, |r| write_json_line(&mut out, &records_path, r))?;
    out.flush().map_err(|e| Error::io(&records_path, e))?;
    let checkpoint = out_dir.join("checkpoint");
    save_checkpoint(&model, &checkpoint)?;
    Ok(TrainOutput {
        records,
        model,
        records_path,
        checkpoint,
    })
}

#[derive(Serialize)]
struct FailureLine<'a> {
    index: usize,
    error: &'a str,
}

#[derive(Serialize)]
struct SummaryLine {
    summary: crate::eval::EvalSummary,
}

/// Where [`cmd_eval`] writes its outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalPaths {
    pub report: PathBuf,
    /// Optional `N×3×num_classes` tensor of spatial, temporal and fused scores.
    pub scores: Option<PathBuf>,
}

/// Evaluate two checkpoints over paired manifests: the k-th rgb record is
/// scored together with the k-th flow record.
pub fn cmd_eval(
    cfg: &RunConfig,
    rgb_manifest: &Path,
    flow_manifest: &Path,
    spatial_ckpt: &Path,
    temporal_ckpt: &Path,
    paths: &EvalPaths,
) -> Result<EvalReport> {
    cfg.validate()?;
    let rgb = read_manifest(rgb_manifest)?;
    let flow = read_manifest(flow_manifest)?;
    check_labels(&rgb, cfg.num_classes)?;
    check_labels(&flow, cfg.num_classes)?;
    if rgb.len() != flow.len() {
        return Err(Error::Manifest {
            line: rgb.len().min(flow.len()) + 1,
            reason: format!("{} rgb records but {} flow records", rgb.len(), flow.len()),
        });
    }
    let spatial = load_checkpoint(spatial_ckpt)?;
    let temporal = load_checkpoint(temporal_ckpt)?;
    for (model, stream) in [(&spatial, Stream::Spatial), (&temporal, Stream::Temporal)] {
        if model.stream != stream {
            return Err(Error::invalid(format!("expected a {stream} checkpoint, got {}", model.stream)));
        }
    }
    let s = ModelScorer {
        model: &spatial,
        space: cfg.score_space,
    };
    let t = ModelScorer {
        model: &temporal,
        space: cfg.score_space,
    };
    let pairs = rgb.iter().zip(&flow).map(|(r, f)| {
        Ok(VideoPair {
            rgb: load_video(r)?,
            flow: load_video(f)?,
        })
    });
    let report = evaluate(&s, &t, pairs, &cfg.eval_options())?;

    let mut out = create(&paths.report)?;
    let mut failures = report.failures.iter().peekable();
    for r in &report.results {
        while let Some(f) = failures.next_if(|f| f.index < r.index) {
            write_json_line(&mut out, &paths.report, &FailureLine { index: f.index, error: &f.reason })?;
        }
        write_json_line(&mut out, &paths.report, r)?;
    }
    for f in failures {
        write_json_line(&mut out, &paths.report, &FailureLine { index: f.index, error: &f.reason })?;
    }
    write_json_line(&mut out, &paths.report, &SummaryLine { summary: report.summary })?;
    out.flush().map_err(|e| Error::io(&paths.report, e))?;

    if let Some(scores) = &paths.scores {
        let c = spatial.num_classes;
        let mut data = Vec::with_capacity(report.results.len() * 3 * c);
        for r in &report.results {
            data.extend_from_slice(&r.spatial_scores);
            data.extend_from_slice(&r.temporal_scores);
            data.extend_from_slice(&r.fused_scores);
        }
        tsr::write(scores, &Tensor::new(vec![report.results.len(), 3, c], data)?, Dtype::F64)?;
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CommRow {
    pub workers: usize,
    pub mode: String,
    pub batch_per_worker: usize,
    pub param_sync_bytes: u64,
    pub activation_bytes: u64,
    pub total_bytes: u64,
    /// Smallest per-worker batch at which gathering stops paying off.
    pub break_even_batch: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CommReport {
    pub conv_params: u64,
    pub fc_params: u64,
    pub total_params: u64,
    pub fc_fraction: f64,
    pub fc_input_dim: usize,
    pub rows: Vec<CommRow>,
}

impl CommReport {
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "params total {} conv {} fc {} (fc fraction {:.4}), fc input dim {}\n",
            self.total_params, self.conv_params, self.fc_params, self.fc_fraction, self.fc_input_dim
        );
        s.push_str("workers\tmode\tbatch_per_worker\tparam_sync_bytes\tactivation_bytes\ttotal_bytes\tbreak_even_batch\n");
        for r in &self.rows {
            let be = r.break_even_batch.map_or_else(|| "-".to_string(), |b| b.to_string());
            s.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{be}\n",
                r.workers, r.mode, r.batch_per_worker, r.param_sync_bytes, r.activation_bytes, r.total_bytes
            ));
        }
        s
    }
}

pub const COMM_WORKERS: [usize; 4] = [1, 2, 4, 8];

/// Per-iteration traffic of the VGG-16 geometry for K in {1, 2, 4, 8} and
/// both sync modes, with `cfg.batch` samples on every worker.
pub fn cmd_comm_report(cfg: &RunConfig) -> Result<CommReport> {
    cfg.validate()?;
    let layout = vgg16_layout(cfg.stream.in_channels(), cfg.num_classes, &cfg.dropout_ratios())?;
    let counts = layout.param_count();
    let fc_params = layout.fc_param_count();
    let fc_input_dim = layout
        .layers
        .iter()
        .find_map(|l| match l {
            crate::model::LayerDesc::Linear { in_dim, .. } => Some(*in_dim),
            _ => None,
        })
        .ok_or_else(|| Error::invalid("layout has no fc layers"))?;
    let mut rows = Vec::new();
    for k in COMM_WORKERS {
        for mode in [SyncMode::FullParamSync, SyncMode::ActivationGather] {
            let policy = SyncPolicy {
                mode,
                cost: CostFactor::RingAllReduce,
            };
            let v = comm_volume(&layout, k, policy, cfg.batch, fc_input_dim);
            rows.push(CommRow {
                workers: k,
                mode: mode.name().to_string(),
                batch_per_worker: cfg.batch,
                param_sync_bytes: v.param_sync_bytes,
                activation_bytes: v.activation_bytes,
                total_bytes: v.total(),
                break_even_batch: break_even_batch(&layout, k, policy.cost, fc_input_dim),
            });
        }
    }
    Ok(CommReport {
        conv_params: layout.conv_param_count(),
        fc_params,
        total_params: counts.total,
        fc_fraction: fc_params as f64 / counts.total as f64,
        fc_input_dim,
        rows,
    })
}
