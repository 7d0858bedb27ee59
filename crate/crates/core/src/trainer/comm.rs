//! Analytic per-iteration communication volume for simulated data-parallel
//! training. Transfers are counted in 4-byte elements regardless of the
//! 64-bit compute precision.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::LayerLayout;

pub const TRANSFER_ELEM_BYTES: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum SyncMode {
    #[default]
    /// Every parameter gradient is all-reduced.
    FullParamSync,
    /// Only conv gradients are all-reduced; fc-input activations are
    /// gathered onto one worker, which runs the fc layers and scatters the
    /// activation gradients back.
    ActivationGather,
}

impl SyncMode {
    pub fn name(self) -> &'static str {
        match self {
            SyncMode::FullParamSync => "full_param_sync",
            SyncMode::ActivationGather => "activation_gather",
        }
    }
}

impl fmt::Display for SyncMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SyncMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full_param_sync" => Ok(SyncMode::FullParamSync),
            "activation_gather" => Ok(SyncMode::ActivationGather),
            _ => Err(Error::invalid(format!("unknown sync mode {s:?}"))),
        }
    }
}

/// Bytes actually moved to all-reduce a payload across `k` workers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CostFactor {
    /// `2(k-1)/k` per worker.
    #[default]
    RingAllReduce,
    /// Every non-root worker pushes gradients and pulls parameters: `2(k-1)`.
    ParameterServer,
}

impl CostFactor {
    pub fn transferred(self, bytes: u64, k: usize) -> u64 {
        if k <= 1 {
            return 0;
        }
        let k = k as u128;
        let bytes = bytes as u128;
        let moved = match self {
            CostFactor::RingAllReduce => bytes * 2 * (k - 1) / k,
            CostFactor::ParameterServer => bytes * 2 * (k - 1),
        };
        moved as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SyncPolicy {
    pub mode: SyncMode,
    pub cost: CostFactor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CommVolume {
    /// All-reduced gradient traffic.
    pub param_sync_bytes: u64,
    /// Gathered fc-input activations plus scattered activation gradients.
    pub activation_bytes: u64,
}

impl CommVolume {
    pub fn total(&self) -> u64 {
        self.param_sync_bytes + self.activation_bytes
    }
}

/// Gradient all-reduce cost of the fc parameters alone: what activation
/// gathering saves.
pub fn fc_sync_bytes(layout: &LayerLayout, k: usize, cost: CostFactor) -> u64 {
    cost.transferred(layout.fc_param_count() * TRANSFER_ELEM_BYTES, k)
}

/// Activations that cross worker boundaries in both directions. The gathering
/// worker's own shard stays local, so `k - 1` shards move each way.
pub fn activation_traffic_bytes(k: usize, batch_per_worker: usize, fc_input_dim: usize) -> u64 {
    let off_worker = k.saturating_sub(1) as u64;
    2 * off_worker * batch_per_worker as u64 * fc_input_dim as u64 * TRANSFER_ELEM_BYTES
}

pub fn comm_volume(
    layout: &LayerLayout,
    k: usize,
    policy: SyncPolicy,
    batch_per_worker: usize,
    fc_input_dim: usize,
) -> CommVolume {
    let conv = policy
        .cost
        .transferred(layout.conv_param_count() * TRANSFER_ELEM_BYTES, k);
    match policy.mode {
        SyncMode::FullParamSync => CommVolume {
            param_sync_bytes: conv + fc_sync_bytes(layout, k, policy.cost),
            activation_bytes: 0,
        },
        SyncMode::ActivationGather => CommVolume {
            param_sync_bytes: conv,
            activation_bytes: activation_traffic_bytes(k, batch_per_worker, fc_input_dim),
        },
    }
}

/// Smallest per-worker batch at which gathering activations moves at least as
/// many bytes as synchronizing the fc gradients; `None` when there is no
/// inter-worker traffic at all (`k <= 1`).
pub fn break_even_batch(layout: &LayerLayout, k: usize, cost: CostFactor, fc_input_dim: usize) -> Option<u64> {
    let per_sample = activation_traffic_bytes(k, 1, fc_input_dim);
    if per_sample == 0 {
        return None;
    }
    Some(fc_sync_bytes(layout, k, cost).div_ceil(per_sample).max(1))
}
