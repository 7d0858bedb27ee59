//! Flat `key = value` run configuration. Every key can be overridden from the
//! command line; values are checked as a whole by [`RunConfig::validate`].

use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::augment::CanvasSpec;
use crate::error::{Error, Result};
use crate::eval::{EvalOptions, FusionWeights, ScoreSpace};
use crate::model::Stream;
use crate::schedule::StepSchedule;
use crate::trainer::{CostFactor, SyncMode, SyncPolicy, TrainConfig};

/// Recognized keys, in the order [`RunConfig::to_text`] writes them.
pub const KEYS: &[&str] = &[
    "stream",
    "num_classes",
    "seed",
    "batch",
    "workers",
    "sync_mode",
    "base_lr",
    "lr_step",
    "lr_stop",
    "lr_decay",
    "dropout",
    "flow_bound",
    "canvas_w",
    "canvas_h",
    "scale_set",
    "out_size",
    "w_spatial",
    "w_temporal",
    "momentum",
    "weight_decay",
    "hidden",
    "augment_flow",
    "score_space",
    "eval_frames",
    "clock",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Clock {
    #[default]
    Wall,
    /// Elapsed time is always reported as zero.
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub stream: Stream,
    pub num_classes: usize,
    pub seed: u64,
    pub batch: usize,
    pub workers: usize,
    pub sync_mode: SyncMode,
    /// Learning-rate keys left unset fall back to the stream preset.
    pub base_lr: Option<f64>,
    pub lr_step: Option<u64>,
    pub lr_stop: Option<u64>,
    pub lr_decay: Option<f64>,
    pub dropout: Option<Vec<f64>>,
    pub flow_bound: f64,
    pub canvas: CanvasSpec,
    pub weights: FusionWeights,
    pub momentum: f64,
    pub weight_decay: f64,
    pub hidden: usize,
    pub augment_flow: bool,
    pub score_space: ScoreSpace,
    pub eval_frames: usize,
    pub clock: Clock,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            stream: Stream::Spatial,
            num_classes: 101,
            seed: 0,
            batch: 32,
            workers: 1,
            sync_mode: SyncMode::FullParamSync,
            base_lr: None,
            lr_step: None,
            lr_stop: None,
            lr_decay: None,
            dropout: None,
            flow_bound: crate::flow::DEFAULT_BOUND,
            canvas: CanvasSpec::default(),
            weights: FusionWeights::default(),
            momentum: 0.9,
            weight_decay: 0.0,
            hidden: 64,
            augment_flow: true,
            score_space: ScoreSpace::Probability,
            eval_frames: crate::eval::DEFAULT_FRAMES,
            clock: Clock::Wall,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(|v| parse(key, v.trim()))
        .collect()
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Parse config text on top of the defaults. Blank lines and `#` comments
    /// are skipped; unknown keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {}", i + 1, e.detail())))?;
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "stream" => self.stream = parse(key, value)?,
            "num_classes" => self.num_classes = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "batch" => self.batch = parse(key, value)?,
            "workers" => self.workers = parse(key, value)?,
            "sync_mode" => self.sync_mode = parse(key, value)?,
            "base_lr" => self.base_lr = Some(parse(key, value)?),
            "lr_step" => self.lr_step = Some(parse(key, value)?),
            "lr_stop" => self.lr_stop = Some(parse(key, value)?),
            "lr_decay" => self.lr_decay = Some(parse(key, value)?),
            "dropout" => self.dropout = Some(parse_list(key, value)?),
            "flow_bound" => self.flow_bound = parse(key, value)?,
            "canvas_w" => self.canvas.width = parse(key, value)?,
            "canvas_h" => self.canvas.height = parse(key, value)?,
            "scale_set" => self.canvas.scale_set = parse_list(key, value)?,
            "out_size" => self.canvas.out_size = parse(key, value)?,
            "w_spatial" => self.weights.w_spatial = parse(key, value)?,
            "w_temporal" => self.weights.w_temporal = parse(key, value)?,
            "momentum" => self.momentum = parse(key, value)?,
            "weight_decay" => self.weight_decay = parse(key, value)?,
            "hidden" => self.hidden = parse(key, value)?,
            "augment_flow" => self.augment_flow = parse(key, value)?,
            "score_space" => self.score_space = parse(key, value)?,
            "eval_frames" => self.eval_frames = parse(key, value)?,
            "clock" => {
                self.clock = match value {
                    "wall" => Clock::Wall,
                    "none" => Clock::None,
                    _ => return Err(Error::Config(format!("invalid value {value:?} for clock"))),
                }
            }
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let opt = |v: Option<String>| v.unwrap_or_else(|| "preset".to_string());
        Some(match key {
            "stream" => self.stream.to_string(),
            "num_classes" => self.num_classes.to_string(),
            "seed" => self.seed.to_string(),
            "batch" => self.batch.to_string(),
            "workers" => self.workers.to_string(),
            "sync_mode" => self.sync_mode.name().to_string(),
            "base_lr" => opt(self.base_lr.map(|v| v.to_string())),
            "lr_step" => opt(self.lr_step.map(|v| v.to_string())),
            "lr_stop" => opt(self.lr_stop.map(|v| v.to_string())),
            "lr_decay" => opt(self.lr_decay.map(|v| v.to_string())),
            "dropout" => join(&self.dropout_ratios()),
            "flow_bound" => self.flow_bound.to_string(),
            "canvas_w" => self.canvas.width.to_string(),
            "canvas_h" => self.canvas.height.to_string(),
            "scale_set" => join(&self.canvas.scale_set),
            "out_size" => self.canvas.out_size.to_string(),
            "w_spatial" => self.weights.w_spatial.to_string(),
            "w_temporal" => self.weights.w_temporal.to_string(),
            "momentum" => self.momentum.to_string(),
            "weight_decay" => self.weight_decay.to_string(),
            "hidden" => self.hidden.to_string(),
            "augment_flow" => self.augment_flow.to_string(),
            "score_space" => match self.score_space {
                ScoreSpace::Probability => "probability".to_string(),
                ScoreSpace::Logit => "logit".to_string(),
            },
            "eval_frames" => self.eval_frames.to_string(),
            "clock" => match self.clock {
                Clock::Wall => "wall".to_string(),
                Clock::None => "none".to_string(),
            },
            _ => return None,
        })
    }

    /// Render all keys; schedule keys left on the preset are omitted.
    pub fn to_text(&self) -> String {
        KEYS.iter()
            .filter_map(|k| self.get(k).filter(|v| v != "preset").map(|v| format!("{k} = {v}\n")))
            .collect()
    }

    pub fn dropout_ratios(&self) -> Vec<f64> {
        self.dropout
            .clone()
            .unwrap_or_else(|| self.stream.default_dropout().to_vec())
    }

    pub fn schedule(&self) -> StepSchedule {
        let preset = StepSchedule::preset(self.stream);
        StepSchedule {
            base_lr: self.base_lr.unwrap_or(preset.base_lr),
            decay_factor: self.lr_decay.unwrap_or(preset.decay_factor),
            step_iters: self.lr_step.unwrap_or(preset.step_iters),
            stop_iter: self.lr_stop.unwrap_or(preset.stop_iter),
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            schedule: self.schedule(),
            batch: self.batch,
            workers: self.workers,
            policy: SyncPolicy {
                mode: self.sync_mode,
                cost: CostFactor::RingAllReduce,
            },
            momentum: self.momentum,
            weight_decay: self.weight_decay,
            seed: self.seed,
            wall_clock: self.clock == Clock::Wall,
        }
    }

    pub fn eval_options(&self) -> EvalOptions {
        EvalOptions {
            canvas: self.canvas.clone(),
            flow_bound: self.flow_bound,
            frames: self.eval_frames,
            weights: self.weights,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |e: Error| Error::Config(e.detail());
        if self.num_classes < 2 {
            return Err(Error::Config(format!("num_classes must be at least 2, got {}", self.num_classes)));
        }
        self.train_config().validate().map_err(cfg)?;
        self.canvas.validate().map_err(cfg)?;
        if self.canvas.out_size > self.canvas.width.min(self.canvas.height) {
            return Err(Error::Config(format!(
                "out_size {} exceeds the canvas",
                self.canvas.out_size
            )));
        }
        self.weights.validate()?;
        if !(self.flow_bound.is_finite() && self.flow_bound > 0.0) {
            return Err(Error::Config(format!("flow_bound must be positive, got {}", self.flow_bound)));
        }
        let ratios = self.dropout_ratios();
        if ratios.len() > 2 || ratios.iter().any(|r| !(0.0..1.0).contains(r)) {
            return Err(Error::Config(format!(
                "dropout takes at most two ratios in [0, 1), got {ratios:?}"
            )));
        }
        if !(self.momentum.is_finite() && (0.0..1.0).contains(&self.momentum)) {
            return Err(Error::Config(format!("momentum must be in [0, 1), got {}", self.momentum)));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::Config(format!("weight_decay must be non-negative, got {}", self.weight_decay)));
        }
        if self.hidden == 0 || self.eval_frames == 0 {
            return Err(Error::Config("hidden and eval_frames must be positive".into()));
        }
        Ok(())
    }
}
