//! Test-time protocol: sampled frames, ten crops each, averaged scores and
//! weighted two-stream fusion.

use std::cell::Cell;

use serde::{Deserialize, Serialize};

use crate::augment::{self, CanvasSpec, InputKind, Position};
use crate::dataset::Video;
use crate::error::{Error, Result};
use crate::flow::STACK_FRAMES;
use crate::manifest::VideoKind;
use crate::model::{preprocess, ForwardMode, Model};
use crate::ops::softmax_rows;
use crate::tensor::Tensor;

pub const DEFAULT_FRAMES: usize = 25;
pub const CROPS_PER_FRAME: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionWeights {
    pub w_spatial: f64,
    pub w_temporal: f64,
}

impl Default for FusionWeights {
    fn default() -> Self {
        FusionWeights {
            w_spatial: 1.0,
            w_temporal: 2.0,
        }
    }
}

impl FusionWeights {
    pub fn validate(&self) -> Result<()> {
        let ok = |w: f64| w.is_finite() && w >= 0.0;
        if !ok(self.w_spatial) || !ok(self.w_temporal) || self.w_spatial + self.w_temporal == 0.0 {
            return Err(Error::Config(format!(
                "fusion weights ({}, {}) must be non-negative and not both zero",
                self.w_spatial, self.w_temporal
            )));
        }
        Ok(())
    }
}

/// Indices `⌊k·T/n⌋` for `k in 0..n`.
pub fn sample_frames(total: usize, n: usize) -> Result<Vec<usize>> {
    if total == 0 || n == 0 {
        return Err(Error::invalid(format!("cannot sample {n} frames from a clip of {total}")));
    }
    Ok((0..n).map(|k| k * total / n).collect())
}

/// Ten `out_size` crops of a canvas-sized input, ordered TL, TR, BL, BR, C
/// and then the same five flipped.
pub fn ten_crop(input: &Tensor, canvas: &CanvasSpec, kind: InputKind) -> Result<Vec<Tensor>> {
    match *input.shape() {
        [_, h, w] if (h, w) == (canvas.height, canvas.width) => {}
        _ => {
            return Err(Error::shape(
                "ten_crop input vs canvas",
                input.shape(),
                &[canvas.height, canvas.width],
            ))
        }
    }
    let s = canvas.out_size;
    let offsets = augment::corner_offsets(canvas.width, canvas.height, s, s)?;
    let plain = Position::ALL
        .iter()
        .map(|p| {
            let (x, y) = offsets[p.index()];
            augment::extract_window(input, x, y, s, s)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = plain.clone();
    for crop in &plain {
        out.push(augment::flip_input(crop, kind)?);
    }
    Ok(out)
}

/// Something that maps a batch of preprocessed inputs to per-row scores.
pub trait Scorer {
    fn in_channels(&self) -> usize;
    fn num_classes(&self) -> usize;
    /// `N × C × H × W` in, `N × num_classes` out.
    fn score_batch(&self, inputs: &Tensor) -> Result<Tensor>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreSpace {
    #[default]
    Probability,
    Logit,
}

impl std::str::FromStr for ScoreSpace {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "probability" | "softmax" => Ok(ScoreSpace::Probability),
            "logit" => Ok(ScoreSpace::Logit),
            _ => Err(Error::Config(format!("unknown score space {s:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ModelScorer<'a> {
    pub model: &'a Model,
    pub space: ScoreSpace,
}

impl Scorer for ModelScorer<'_> {
    fn in_channels(&self) -> usize {
        self.model.in_channels()
    }

    fn num_classes(&self) -> usize {
        self.model.num_classes
    }

    fn score_batch(&self, inputs: &Tensor) -> Result<Tensor> {
        let logits = self.model.logits(inputs, ForwardMode::Inference)?;
        match self.space {
            ScoreSpace::Probability => softmax_rows(&logits),
            ScoreSpace::Logit => Ok(logits),
        }
    }
}

/// Counts every scored input row.
#[derive(Debug)]
pub struct CountingScorer<S> {
    pub inner: S,
    count: Cell<u64>,
}

impl<S: Scorer> CountingScorer<S> {
    pub fn new(inner: S) -> Self {
        CountingScorer {
            inner,
            count: Cell::new(0),
        }
    }

    pub fn forward_passes(&self) -> u64 {
        self.count.get()
    }
}

impl<S: Scorer> Scorer for CountingScorer<S> {
    fn in_channels(&self) -> usize {
        self.inner.in_channels()
    }

    fn num_classes(&self) -> usize {
        self.inner.num_classes()
    }

    fn score_batch(&self, inputs: &Tensor) -> Result<Tensor> {
        self.count.set(self.count.get() + inputs.shape().first().copied().unwrap_or(0) as u64);
        self.inner.score_batch(inputs)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub canvas: CanvasSpec,
    pub flow_bound: f64,
    pub frames: usize,
    pub weights: FusionWeights,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            canvas: CanvasSpec::default(),
            flow_bound: crate::flow::DEFAULT_BOUND,
            frames: DEFAULT_FRAMES,
            weights: FusionWeights::default(),
        }
    }
}

/// Mean score over `frames × 10` crops. Flow windows start at the sampled
/// index, clamped so the 10-field stack fits.
pub fn video_score(scorer: &dyn Scorer, video: &Video, opts: &EvalOptions) -> Result<Vec<f64>> {
    let (kind, anchors) = match video.kind {
        VideoKind::Rgb => (InputKind::Rgb, video.num_frames()),
        VideoKind::Flow => {
            if video.num_frames() < STACK_FRAMES {
                return Err(Error::invalid(format!(
                    "flow clip has {} fields, a stack needs {STACK_FRAMES}",
                    video.num_frames()
                )));
            }
            (InputKind::FlowStack, video.num_frames())
        }
    };
    let expected = match video.kind {
        VideoKind::Rgb => 3,
        VideoKind::Flow => 2 * STACK_FRAMES,
    };
    if scorer.in_channels() != expected {
        return Err(Error::invalid(format!(
            "scorer takes {} channels, {} inputs have {expected}",
            scorer.in_channels(),
            video.kind
        )));
    }
    let classes = scorer.num_classes();
    let mut rows = Vec::new();
    for idx in sample_frames(anchors, opts.frames)? {
        let t = match video.kind {
            VideoKind::Rgb => idx,
            VideoKind::Flow => idx.min(video.num_frames() - STACK_FRAMES),
        };
        let raw = video.input_at(t, opts.flow_bound)?;
        let crops: Vec<Tensor> = ten_crop(&raw, &opts.canvas, kind)?.iter().map(preprocess).collect();
        let scores = scorer.score_batch(&Tensor::stack(&crops)?)?;
        scores.ensure_shape("crop scores", &[crops.len(), classes])?;
        rows.push(scores);
    }
    average_scores(&Tensor::concat_outer(&rows)?)
}

/// Column means of an `N × C` score matrix.
pub fn average_scores(scores: &Tensor) -> Result<Vec<f64>> {
    let (n, c) = match *scores.shape() {
        [n, c] if n > 0 => (n, c),
        _ => return Err(Error::invalid(format!("expected a non-empty N×C score matrix, got {:?}", scores.shape()))),
    };
    let mut total = vec![0.0; c];
    for row in scores.data().chunks_exact(c) {
        total.iter_mut().zip(row).for_each(|(acc, s)| *acc += s);
    }
    Ok(total.into_iter().map(|s| s / n as f64).collect())
}

/// `w_spatial·s + w_temporal·t`
pub fn fuse(s: &[f64], t: &[f64], w: &FusionWeights) -> Result<Vec<f64>> {
    if s.len() != t.len() {
        return Err(Error::shape("fuse", &[s.len()], &[t.len()]));
    }
    Ok(s.iter().zip(t).map(|(a, b)| w.w_spatial * a + w.w_temporal * b).collect())
}

/// Index of the largest score; ties go to the lowest index.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in scores.iter().enumerate() {
        if v > scores[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone)]
pub struct VideoPair {
    pub rgb: Video,
    pub flow: Video,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoResult {
    pub index: usize,
    pub label: usize,
    pub spatial_pred: usize,
    pub temporal_pred: usize,
    pub fused_pred: usize,
    pub spatial_scores: Vec<f64>,
    pub temporal_scores: Vec<f64>,
    pub fused_scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalFailure {
    pub index: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub videos: usize,
    pub spatial_acc: f64,
    pub temporal_acc: f64,
    pub fused_acc: f64,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub results: Vec<VideoResult>,
    pub failures: Vec<EvalFailure>,
    pub summary: EvalSummary,
}

fn score_pair(spatial: &dyn Scorer, temporal: &dyn Scorer, pair: &VideoPair, opts: &EvalOptions) -> Result<VideoResult> {
    if pair.rgb.label != pair.flow.label {
        return Err(Error::invalid(format!(
            "rgb label {} and flow label {} disagree",
            pair.rgb.label, pair.flow.label
        )));
    }
    let s = video_score(spatial, &pair.rgb, opts)?;
    let t = video_score(temporal, &pair.flow, opts)?;
    let f = fuse(&s, &t, &opts.weights)?;
    Ok(VideoResult {
        index: 0,
        label: pair.rgb.label,
        spatial_pred: argmax(&s),
        temporal_pred: argmax(&t),
        fused_pred: argmax(&f),
        spatial_scores: s,
        temporal_scores: t,
        fused_scores: f,
    })
}

/// Score every video with both streams. Videos that fail to load or score are
/// recorded and skipped; accuracies are over the scored videos.
pub fn evaluate(
    spatial: &dyn Scorer,
    temporal: &dyn Scorer,
    videos: impl IntoIterator<Item = Result<VideoPair>>,
    opts: &EvalOptions,
) -> Result<EvalReport> {
    opts.weights.validate()?;
    opts.canvas.validate()?;
    if spatial.num_classes() != temporal.num_classes() {
        return Err(Error::invalid(format!(
            "spatial model has {} classes, temporal model {}",
            spatial.num_classes(),
            temporal.num_classes()
        )));
    }
    let mut results = Vec::new();
    let mut failures = Vec::new();
    let mut seen = 0;
    for (index, item) in videos.into_iter().enumerate() {
        seen += 1;
        match item.and_then(|pair| score_pair(spatial, temporal, &pair, opts)) {
            Ok(mut r) => {
                r.index = index;
                results.push(r);
            }
            Err(e) => failures.push(EvalFailure {
                index,
                reason: e.to_string(),
            }),
        }
    }
    if seen == 0 {
        return Err(Error::invalid("nothing to evaluate"));
    }
    let acc = |pick: fn(&VideoResult) -> usize| {
        if results.is_empty() {
            0.0
        } else {
            results.iter().filter(|r| pick(r) == r.label).count() as f64 / results.len() as f64
        }
    };
    let summary = EvalSummary {
        videos: results.len(),
        spatial_acc: acc(|r| r.spatial_pred),
        temporal_acc: acc(|r| r.temporal_pred),
        fused_acc: acc(|r| r.fused_pred),
        failures: failures.len(),
    };
    Ok(EvalReport {
        results,
        failures,
        summary,
    })
}
