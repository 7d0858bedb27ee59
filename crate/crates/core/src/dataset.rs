//! In-memory videos and the seeded training-clip sampler.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::augment::{self, CanvasSpec, CropSpec, Position};
use crate::error::{Error, Result};
use crate::flow::{build_stack, FlowField, STACK_FRAMES};
use crate::manifest::{ManifestRecord, VideoKind};
use crate::model::{preprocess, Stream};
use crate::tensor::Tensor;
use crate::trainer::{Batch, BatchSource};
use crate::tsr;

/// A clip stored as `T×C×H×W`: RGB frames (`C = 3`, values `0..=255`) or
/// real-valued flow fields (`C = 2`, pixels per frame).
#[derive(Debug, Clone, PartialEq)]
pub struct Video {
    pub kind: VideoKind,
    pub label: usize,
    pub frames: Tensor,
}

impl Video {
    pub fn new(kind: VideoKind, label: usize, frames: Tensor) -> Result<Self> {
        let channels = match kind {
            VideoKind::Rgb => 3,
            VideoKind::Flow => 2,
        };
        match *frames.shape() {
            [_, c, _, _] if c == channels => Ok(Video { kind, label, frames }),
            _ => Err(Error::invalid(format!(
                "{kind} video must be T×{channels}×H×W, got {:?}",
                frames.shape()
            ))),
        }
    }

    pub fn num_frames(&self) -> usize {
        self.frames.shape()[0]
    }

    /// `(height, width)`
    pub fn dims(&self) -> (usize, usize) {
        (self.frames.shape()[2], self.frames.shape()[3])
    }

    pub fn frame(&self, t: usize) -> Result<Tensor> {
        self.frames.index_outer(t)
    }

    /// Quantized 20-channel stack of fields `t..t+10`.
    pub fn flow_stack(&self, t: usize, bound: f64) -> Result<Tensor> {
        if self.kind != VideoKind::Flow {
            return Err(Error::invalid("flow stacks need a flow video"));
        }
        if t + STACK_FRAMES > self.num_frames() {
            return Err(Error::invalid(format!(
                "stack at {t} overruns a clip of {} flow fields",
                self.num_frames()
            )));
        }
        let fields = (t..t + STACK_FRAMES)
            .map(|i| FlowField::from_planes(&self.frame(i)?))
            .collect::<Result<Vec<_>>>()?;
        Ok(build_stack(&fields, bound, t)?.data)
    }

    /// Raw network input anchored at frame `t`: the frame itself for RGB, the
    /// quantized stack for flow.
    pub fn input_at(&self, t: usize, bound: f64) -> Result<Tensor> {
        match self.kind {
            VideoKind::Rgb => self.frame(t),
            VideoKind::Flow => self.flow_stack(t, bound),
        }
    }

    /// Number of valid anchor positions for [`Video::input_at`].
    pub fn anchors(&self) -> usize {
        match self.kind {
            VideoKind::Rgb => self.num_frames(),
            VideoKind::Flow => (self.num_frames() + 1).saturating_sub(STACK_FRAMES),
        }
    }
}

pub fn stream_kind(stream: Stream) -> VideoKind {
    match stream {
        Stream::Spatial => VideoKind::Rgb,
        Stream::Temporal => VideoKind::Flow,
    }
}

/// Load the clip named by a manifest record, checking kind and frame count.
pub fn load_video(rec: &ManifestRecord) -> Result<Video> {
    let meta = fs::metadata(&rec.path).map_err(|e| Error::io(&rec.path, e))?;
    let frames = if meta.is_dir() {
        load_frame_dir(&rec.path)?
    } else {
        tsr::read(&rec.path)?.0
    };
    let video = Video::new(rec.kind, rec.label, frames)?;
    if video.num_frames() != rec.num_frames {
        return Err(Error::invalid(format!(
            "{}: manifest says {} frames, file holds {}",
            rec.path.display(),
            rec.num_frames,
            video.num_frames()
        )));
    }
    Ok(video)
}

fn load_frame_dir(dir: &Path) -> Result<Tensor> {
    let mut paths: Vec<_> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<_>>()?;
    paths.retain(|p| p.extension().is_some_and(|e| e == "tsr"));
    paths.sort();
    let frames = paths
        .iter()
        .map(|p| tsr::read(p).map(|(t, _)| t))
        .collect::<Result<Vec<_>>>()?;
    Tensor::stack(&frames)
}

/// Draws training clips: videos are visited in a per-epoch shuffled order,
/// each sample takes a random anchor frame and a random corner/scale/flip
/// crop. Every draw is keyed by `(seed, iteration, row)`.
#[derive(Debug, Clone)]
pub struct ClipSampler {
    videos: Vec<Video>,
    stream: Stream,
    canvas: CanvasSpec,
    bound: f64,
    augment: bool,
    seed: u64,
    orders: HashMap<u64, Vec<usize>>,
}

impl ClipSampler {
    pub fn new(
        videos: Vec<Video>,
        stream: Stream,
        canvas: CanvasSpec,
        bound: f64,
        augment: bool,
        seed: u64,
    ) -> Result<Self> {
        canvas.validate()?;
        if videos.is_empty() {
            return Err(Error::invalid("training set is empty"));
        }
        let kind = stream_kind(stream);
        for v in &videos {
            if v.kind != kind {
                return Err(Error::invalid(format!("{stream} stream cannot train on {} videos", v.kind)));
            }
            if v.dims() != (canvas.height, canvas.width) {
                return Err(Error::shape(
                    "video frame vs canvas",
                    &[v.dims().0, v.dims().1],
                    &[canvas.height, canvas.width],
                ));
            }
            if v.anchors() == 0 {
                return Err(Error::invalid(format!(
                    "clip with {} frames is too short for the {stream} stream",
                    v.num_frames()
                )));
            }
        }
        Ok(ClipSampler {
            videos,
            stream,
            canvas,
            bound,
            augment,
            seed,
            orders: HashMap::new(),
        })
    }

    fn video_for(&mut self, global: u64) -> usize {
        let n = self.videos.len() as u64;
        let epoch = global / n;
        let seed = self.seed;
        let order = self.orders.entry(epoch).or_insert_with(|| {
            let mut order: Vec<usize> = (0..n as usize).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ epoch.wrapping_mul(0x9E37_79B9_7F4A_7C15)));
            order
        });
        order[(global % n) as usize]
    }

    pub fn draw(&mut self, iteration: u64, row: usize, size: usize) -> Result<(Tensor, usize)> {
        let global = iteration * size as u64 + row as u64;
        let vi = self.video_for(global);
        if self.orders.len() > 4 {
            let current = global / self.videos.len() as u64;
            self.orders.retain(|&e, _| e + 1 >= current);
        }
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&iteration.to_le_bytes());
        key[16..24].copy_from_slice(&(row as u64).to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(key);
        let video = &self.videos[vi];
        let t = rng.random_range(0..video.anchors());
        let raw = video.input_at(t, self.bound)?;
        let input = if self.augment {
            let cs = augment::sample_crop_with(&self.canvas, &mut rng);
            augment::apply_crop(&raw, &cs, &self.canvas, self.stream.input_kind())?
        } else {
            let cs = CropSpec {
                crop_w: self.canvas.out_size,
                crop_h: self.canvas.out_size,
                position: Position::Center,
                flip: false,
            };
            augment::apply_crop(&raw, &cs, &self.canvas, self.stream.input_kind())?
        };
        Ok((preprocess(&input), video.label))
    }
}

impl BatchSource for ClipSampler {
    fn next_batch(&mut self, iteration: u64, size: usize) -> Result<Batch> {
        let mut inputs = Vec::with_capacity(size);
        let mut labels = Vec::with_capacity(size);
        for row in 0..size {
            let (x, y) = self.draw(iteration, row, size)?;
            inputs.push(x);
            labels.push(y);
        }
        Batch::new(Tensor::stack(&inputs)?, labels)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn canvas() -> CanvasSpec {
        CanvasSpec {
            width: 16,
            height: 12,
            scale_set: vec![12, 10],
            out_size: 10,
        }
    }

    fn rgb(label: usize, t: usize) -> Video {
        Video::new(VideoKind::Rgb, label, Tensor::from_fn(&[t, 3, 12, 16], |i| (i % 256) as f64)).unwrap()
    }

    #[test]
    fn anchors_per_kind() {
        assert_eq!(rgb(0, 5).anchors(), 5);
        let f = Video::new(VideoKind::Flow, 0, Tensor::zeros(&[12, 2, 4, 4])).unwrap();
        assert_eq!(f.anchors(), 3);
        assert_eq!(f.flow_stack(2, 20.0).unwrap().shape(), &[20, 4, 4]);
        assert!(f.flow_stack(3, 20.0).is_err());
    }

    #[test]
    fn sampler_is_deterministic_and_cycles() {
        let videos = vec![rgb(0, 4), rgb(1, 4), rgb(2, 4)];
        let mut a = ClipSampler::new(videos.clone(), Stream::Spatial, canvas(), 20.0, true, 3).unwrap();
        let mut b = ClipSampler::new(videos, Stream::Spatial, canvas(), 20.0, true, 3).unwrap();
        for it in 0..5 {
            let ba = a.next_batch(it, 3).unwrap();
            assert_eq!(ba, b.next_batch(it, 3).unwrap());
            assert_eq!(ba.inputs.shape(), &[3, 3, 10, 10]);
            let mut labels = ba.labels.clone();
            labels.sort();
            assert_eq!(labels, vec![0, 1, 2], "each epoch visits every clip once");
        }
    }

    #[test]
    fn sampler_rejects_mismatches() {
        assert!(ClipSampler::new(vec![rgb(0, 4)], Stream::Temporal, canvas(), 20.0, true, 0).is_err());
        let small = Video::new(VideoKind::Rgb, 0, Tensor::zeros(&[2, 3, 8, 8])).unwrap();
        assert!(ClipSampler::new(vec![small], Stream::Spatial, canvas(), 20.0, true, 0).is_err());
        assert!(ClipSampler::new(vec![], Stream::Spatial, canvas(), 20.0, true, 0).is_err());
    }
}
