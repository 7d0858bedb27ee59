//! Two-stream video classification at desk scale: a spatial network over RGB
//! frames and a temporal network over stacked optical flow, trained with
//! corner-cropped multi-scale augmentation and a simulated synchronous
//! data-parallel SGD, then fused at the score level after ten-crop testing.
//!
//! Everything runs on 64-bit floats on the CPU. The runnable examples are the
//! best tour of the crate:
//!
//! | example | shows |
//! |---|---|
//! | `tensor_ops` | conv, pooling, linear and softmax kernels with a finite-difference check |
//! | `flow_encoding` | flow quantization, 10-field stacking and flow-aware mirroring |
//! | `augmentation` | the 160-configuration crop space and ten-crop views |
//! | `cross_modality` | adapting a 3-channel first layer to 20 flow channels |
//! | `lr_schedule` | step-decay presets for both streams |
//! | `data_parallel` | K simulated workers against a single process, plus traffic at VGG-16 scale |
//! | `two_stream_pipeline` | synthetic clips, per-stream training and fused evaluation |
//!
//! Run one with `cargo run --example two_stream_pipeline`.

pub mod augment;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod flow;
pub mod manifest;
pub mod model;
pub mod ops;
pub mod schedule;
pub mod synth;
pub mod tensor;
pub mod trainer;
pub mod tsr;

pub use error::{Error, Result};
pub use tensor::Tensor;
