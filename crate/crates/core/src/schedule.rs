//! Step learning-rate schedules.

use crate::error::{Error, Result};
use crate::model::Stream;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSchedule {
    pub base_lr: f64,
    pub decay_factor: f64,
    pub step_iters: u64,
    pub stop_iter: u64,
}

impl StepSchedule {
    /// Temporal: 0.005, /10 every 10k, stop at 30k.
    /// Spatial: 0.001, /10 every 4k, stop at 10k.
    pub fn preset(stream: Stream) -> Self {
        match stream {
            Stream::Temporal => StepSchedule {
                base_lr: 0.005,
                decay_factor: 0.1,
                step_iters: 10_000,
                stop_iter: 30_000,
            },
            Stream::Spatial => StepSchedule {
                base_lr: 0.001,
                decay_factor: 0.1,
                step_iters: 4_000,
                stop_iter: 10_000,
            },
        }
    }

    /// A `stop_iter` of zero is accepted and means "no training steps".
    pub fn validate(&self) -> Result<()> {
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return Err(Error::Config(format!("base_lr must be positive, got {}", self.base_lr)));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor < 1.0) {
            return Err(Error::Config(format!(
                "lr_decay must lie in (0, 1), got {}",
                self.decay_factor
            )));
        }
        if self.step_iters == 0 {
            return Err(Error::Config("lr_step must be positive".into()));
        }
        if self.stop_iter > 0 && self.step_iters > self.stop_iter {
            return Err(Error::Config(format!(
                "lr_step {} exceeds lr_stop {}",
                self.step_iters, self.stop_iter
            )));
        }
        Ok(())
    }

    /// `base_lr * decay^floor(iter / step)`, evaluated as a division by
    /// `(1 / decay)^k` so decimal presets come out exact. `None` once training is complete
    /// (`iter >= stop_iter`). The decay applies at exact multiples of the step.
    pub fn lr_at(&self, iter: u64) -> Option<f64> {
        if iter >= self.stop_iter {
            return None;
        }
        let k = (iter / self.step_iters) as i32;
        Some(self.base_lr / self.decay_factor.recip().powi(k))
    }

    /// Number of distinct rates used before stopping.
    pub fn distinct_rates(&self) -> u64 {
        self.stop_iter.div_ceil(self.step_iters)
    }
}
