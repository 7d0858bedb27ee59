//! Tab-separated video manifests: `path  label  num_frames  kind`.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VideoKind {
    Rgb,
    Flow,
}

impl VideoKind {
    pub fn name(self) -> &'static str {
        match self {
            VideoKind::Rgb => "rgb",
            VideoKind::Flow => "flow",
        }
    }
}

impl fmt::Display for VideoKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for VideoKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rgb" => Ok(VideoKind::Rgb),
            "flow" => Ok(VideoKind::Flow),
            _ => Err(Error::invalid(format!("unknown video kind {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRecord {
    /// A TSR1 file holding `T×C×H×W`, or a directory of per-frame `C×H×W` files.
    pub path: PathBuf,
    pub label: usize,
    pub num_frames: usize,
    pub kind: VideoKind,
}

impl fmt::Display for ManifestRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}\t{}\t{}\t{}",
            self.path.display(),
            self.label,
            self.num_frames,
            self.kind
        )
    }
}

fn parse_line(line: &str, lineno: usize) -> Result<ManifestRecord> {
    let bad = |reason: String| Error::Manifest { line: lineno, reason };
    let fields: Vec<&str> = line.split('\t').collect();
    let [path, label, frames, kind] = fields.as_slice() else {
        return Err(bad(format!("expected 4 tab-separated fields, found {}", fields.len())));
    };
    if path.is_empty() {
        return Err(bad("empty path".into()));
    }
    let label = label.parse().map_err(|_| bad(format!("bad label {label:?}")))?;
    let num_frames: usize = frames.parse().map_err(|_| bad(format!("bad frame count {frames:?}")))?;
    if num_frames == 0 {
        return Err(bad("frame count must be positive".into()));
    }
    let kind = kind.parse().map_err(|e: Error| bad(e.to_string()))?;
    Ok(ManifestRecord {
        path: PathBuf::from(path),
        label,
        num_frames,
        kind,
    })
}

/// Parse manifest text. Relative paths are resolved against `base`. Blank
/// lines and lines starting with `#` are skipped.
pub fn parse_manifest(text: &str, base: &Path) -> Result<Vec<ManifestRecord>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut rec = parse_line(line, i + 1)?;
        if rec.path.is_relative() {
            rec.path = base.join(&rec.path);
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(&text, path.parent().unwrap_or(Path::new("")))
}

pub fn format_manifest(records: &[ManifestRecord]) -> String {
    records.iter().map(|r| format!("{r}\n")).collect()
}

/// Check every label against the class count, reporting the 1-based record
/// number of the first offender.
pub fn check_labels(records: &[ManifestRecord], num_classes: usize) -> Result<()> {
    for (i, r) in records.iter().enumerate() {
        if r.label >= num_classes {
            return Err(Error::Manifest {
                line: i + 1,
                reason: format!("label {} outside [0, {num_classes})", r.label),
            });
        }
    }
    Ok(())
}
