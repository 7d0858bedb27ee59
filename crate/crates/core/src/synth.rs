//! Synthetic "moving bar" clips. A textured bar slides over a noisy
//! background; its texture carries the appearance cue and its velocity the
//! motion cue. Flow is exact: the bar velocity on bar pixels, zero elsewhere.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::Video;
use crate::error::{Error, Result};
use crate::manifest::{format_manifest, ManifestRecord, VideoKind};
use crate::tensor::Tensor;
use crate::tsr::{self, Dtype};

const PALETTE: [[f64; 3]; 6] = [
    [230.0, 40.0, 40.0],
    [40.0, 200.0, 60.0],
    [50.0, 80.0, 235.0],
    [235.0, 220.0, 50.0],
    [200.0, 60.0, 210.0],
    [60.0, 215.0, 220.0],
];

/// Number of distinct bar textures and bar motions.
pub const MAX_TEXTURES: usize = PALETTE.len();
pub const MAX_MOTIONS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Variant {
    /// Class `k` has texture `k` and motion `k`: both streams suffice alone.
    #[default]
    Standard,
    /// The first half of the classes differ only in texture, the second half
    /// only in motion.
    Complementary,
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(Variant::Standard),
            "complementary" => Ok(Variant::Complementary),
            _ => Err(Error::Config(format!("unknown dataset variant {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub classes: usize,
    pub videos_per_class: usize,
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    /// Bar speed in pixels per frame.
    pub speed: f64,
    pub variant: Variant,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            classes: 4,
            videos_per_class: 4,
            frames: 30,
            width: 32,
            height: 24,
            speed: 2.0,
            variant: Variant::Standard,
            seed: 0,
        }
    }
}

/// Appearance and motion cue of one class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClassCues {
    pub texture: usize,
    pub motion: usize,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let max = match self.variant {
            Variant::Standard => MAX_MOTIONS.min(MAX_TEXTURES),
            Variant::Complementary => 2 * (MAX_MOTIONS - 1),
        };
        if self.classes < 2 || self.classes > max {
            return Err(Error::Config(format!(
                "{:?} dataset supports 2..={max} classes, got {}",
                self.variant, self.classes
            )));
        }
        if self.variant == Variant::Complementary && !self.classes.is_multiple_of(2) {
            return Err(Error::Config("complementary dataset needs an even class count".into()));
        }
        if self.videos_per_class == 0 || self.frames == 0 {
            return Err(Error::Config("videos and frames must be positive".into()));
        }
        if self.width < 4 || self.height < 4 {
            return Err(Error::Config(format!("canvas {}x{} is too small", self.width, self.height)));
        }
        if !self.speed.is_finite() || self.speed < 0.0 {
            return Err(Error::Config(format!("bar speed {} must be non-negative", self.speed)));
        }
        Ok(())
    }

    pub fn cues(&self, class: usize) -> ClassCues {
        match self.variant {
            Variant::Standard => ClassCues {
                texture: class,
                motion: class,
            },
            Variant::Complementary => {
                let half = self.classes / 2;
                if class < half {
                    ClassCues { texture: class, motion: 0 }
                } else {
                    ClassCues {
                        texture: MAX_TEXTURES - 1,
                        motion: class - half + 1,
                    }
                }
            }
        }
    }
}

/// Per-frame velocity for a motion class. Horizontal components take a
/// random sign so every class is closed under horizontal mirroring.
fn velocity(motion: usize, speed: f64, rng: &mut ChaCha8Rng) -> (f64, f64) {
    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
    match motion {
        0 => (0.0, 0.0),
        1 => (0.0, -speed),
        2 => (0.0, speed),
        3 => (sign * speed, 0.0),
        4 => (sign * speed, speed),
        _ => (sign * speed, -speed),
    }
}

fn texture_value(texture: usize, lx: usize, ly: usize, ch: usize) -> f64 {
    let along = if texture.is_multiple_of(2) { lx } else { ly };
    let period = 2 + texture / 2;
    let base = PALETTE[texture][ch];
    if along % (2 * period) < period {
        base
    } else {
        base * 0.45
    }
}

/// One clip pair: `T×3×H×W` frames with integer values and `T×2×H×W` flow,
/// where field `t` is the displacement from frame `t` to frame `t+1`.
pub fn generate_video(cfg: &SynthConfig, class: usize, index: usize) -> Result<(Video, Video)> {
    cfg.validate()?;
    if class >= cfg.classes {
        return Err(Error::invalid(format!("class {class} out of range")));
    }
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&cfg.seed.to_le_bytes());
    key[8..16].copy_from_slice(&(class as u64).to_le_bytes());
    key[16..24].copy_from_slice(&(index as u64).to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    let cues = cfg.cues(class);
    let (w, h, t_len) = (cfg.width, cfg.height, cfg.frames);
    let (bw, bh) = (w / 2, h / 2);
    let (vx, vy) = velocity(cues.motion, cfg.speed, &mut rng);
    let x0 = rng.random_range(0..w) as f64;
    let y0 = rng.random_range(0..h) as f64;
    let mut rgb = Vec::with_capacity(t_len * 3 * h * w);
    let mut flow = Vec::with_capacity(t_len * 2 * h * w);
    for t in 0..t_len {
        let bx = (x0 + vx * t as f64).round().rem_euclid(w as f64) as usize;
        let by = (y0 + vy * t as f64).round().rem_euclid(h as f64) as usize;
        let local = |x: usize, y: usize| {
            let lx = (x + w - bx) % w;
            let ly = (y + h - by) % h;
            (lx < bw && ly < bh).then_some((lx, ly))
        };
        let noise: Vec<f64> = (0..h * w).map(|_| rng.random_range(-12.0..12.0)).collect();
        for ch in 0..3 {
            for y in 0..h {
                for x in 0..w {
                    let clean = match local(x, y) {
                        Some((lx, ly)) => texture_value(cues.texture, lx, ly, ch),
                        None => 70.0,
                    };
                    rgb.push((clean + noise[y * w + x]).round().clamp(0.0, 255.0));
                }
            }
        }
        for comp in [vx, vy] {
            for y in 0..h {
                for x in 0..w {
                    flow.push(if local(x, y).is_some() { comp } else { 0.0 });
                }
            }
        }
    }
    Ok((
        Video::new(VideoKind::Rgb, class, Tensor::new(vec![t_len, 3, h, w], rgb)?)?,
        Video::new(VideoKind::Flow, class, Tensor::new(vec![t_len, 2, h, w], flow)?)?,
    ))
}

/// Every clip pair, class-major.
pub fn generate(cfg: &SynthConfig) -> Result<Vec<(Video, Video)>> {
    cfg.validate()?;
    let mut out = Vec::with_capacity(cfg.classes * cfg.videos_per_class);
    for class in 0..cfg.classes {
        for i in 0..cfg.videos_per_class {
            out.push(generate_video(cfg, class, i)?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub rgb_manifest: PathBuf,
    pub flow_manifest: PathBuf,
    pub videos: usize,
}

/// Write clips under `out/rgb` and `out/flow` plus `rgb.tsv` and `flow.tsv`
/// manifests with paths relative to `out`.
pub fn write_dataset(cfg: &SynthConfig, out: &Path) -> Result<SynthOutput> {
    cfg.validate()?;
    for sub in ["rgb", "flow"] {
        let dir = out.join(sub);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    let mut rgb_records = Vec::new();
    let mut flow_records = Vec::new();
    for class in 0..cfg.classes {
        for i in 0..cfg.videos_per_class {
            let (rgb, flow) = generate_video(cfg, class, i)?;
            let name = format!("c{class:02}_v{i:03}.tsr");
            for (video, dtype, records) in [
                (&rgb, Dtype::U8, &mut rgb_records),
                (&flow, Dtype::F64, &mut flow_records),
            ] {
                let rel = PathBuf::from(video.kind.name()).join(&name);
                tsr::write(out.join(&rel), &video.frames, dtype)?;
                records.push(ManifestRecord {
                    path: rel,
                    label: class,
                    num_frames: video.num_frames(),
                    kind: video.kind,
                });
            }
        }
    }
    let rgb_manifest = out.join("rgb.tsv");
    let flow_manifest = out.join("flow.tsv");
    for (path, records) in [(&rgb_manifest, &rgb_records), (&flow_manifest, &flow_records)] {
        fs::write(path, format_manifest(records)).map_err(|e| Error::io(path, e))?;
    }
    Ok(SynthOutput {
        rgb_manifest,
        flow_manifest,
        videos: rgb_records.len(),
    })
}
