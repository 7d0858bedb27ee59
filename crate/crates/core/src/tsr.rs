//! The `TSR1` tensor file format.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "TSR1"             4 bytes magic
//! rank               u32
//! extents            rank * u32
//! dtype              u8   (0 = f64 LE, 1 = u8)
//! payload            row-major elements
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"TSR1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F64,
    U8,
}

impl Dtype {
    fn tag(self) -> u8 {
        match self {
            Dtype::F64 => 0,
            Dtype::U8 => 1,
        }
    }

    fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(Dtype::F64),
            1 => Ok(Dtype::U8),
            other => Err(Error::Format(format!("unknown dtype tag {other}"))),
        }
    }
}

pub fn encode(tensor: &Tensor, dtype: Dtype) -> Result<Vec<u8>> {
    let elem = match dtype {
        Dtype::F64 => 8,
        Dtype::U8 => 1,
    };
    let mut out = Vec::with_capacity(9 + 4 * tensor.rank() + elem * tensor.numel());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(tensor.rank() as u32).to_le_bytes());
    for &d in tensor.shape() {
        let d = u32::try_from(d)
            .map_err(|_| Error::Format(format!("extent {d} does not fit in u32")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    out.push(dtype.tag());
    match dtype {
        Dtype::F64 => {
            for v in tensor.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Dtype::U8 => {
            for &v in tensor.data() {
                if !(0.0..=255.0).contains(&v) || v.fract() != 0.0 {
                    return Err(Error::Format(format!(
                        "value {v} is not representable as u8"
                    )));
                }
                out.push(v as u8);
            }
        }
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<(Tensor, Dtype)> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(4)? != MAGIC {
        return Err(Error::Format("bad magic, expected TSR1".into()));
    }
    let rank = cur.u32()? as usize;
    if rank == 0 {
        return Err(Error::Format("rank 0 tensors are not supported".into()));
    }
    let shape = (0..rank)
        .map(|_| cur.u32().map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    let dtype = Dtype::from_tag(cur.take(1)?[0])?;
    let numel: usize = shape.iter().product();
    let data = match dtype {
        Dtype::F64 => cur
            .take(numel * 8)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
        Dtype::U8 => cur.take(numel)?.iter().map(|&b| b as f64).collect(),
    };
    if cur.pos != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after payload",
            bytes.len() - cur.pos
        )));
    }
    let tensor = Tensor::new(shape, data).map_err(|e| Error::Format(e.to_string()))?;
    Ok((tensor, dtype))
}

pub fn write(path: impl AsRef<Path>, tensor: &Tensor, dtype: Dtype) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode(tensor, dtype)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read(path: impl AsRef<Path>) -> Result<(Tensor, Dtype)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format("unexpected end of data".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}
