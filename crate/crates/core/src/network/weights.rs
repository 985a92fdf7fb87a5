//! `DMBPW001` weight files.
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! magic     8 bytes  "DMBPW001"
//! count     u32
//! per tensor:
//!   name_len u16, name (UTF-8)
//!   rank     u8, rank × u32 extents
//!   data     product(extents) × f32, row-major
//! ```

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const WEIGHT_MAGIC: &[u8; 8] = b"DMBPW001";

/// Named tensors in file order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightFile {
    pub tensors: Vec<(String, Tensor<f32>)>,
}

impl WeightFile {
    pub fn get(&self, name: &str) -> Option<&Tensor<f32>> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor<f32>) {
        let name = name.into();
        match self.tensors.iter_mut().find(|(n, _)| *n == name) {
            Some(slot) => slot.1 = t,
            None => self.tensors.push((name, t)),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(WEIGHT_MAGIC);
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(t.rank() as u8);
            for &d in t.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Cursor { buf: bytes, pos: 0 };
        if r.take(8)? != WEIGHT_MAGIC {
            return Err(Error::load(None, "bad magic"));
        }
        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count.min(4096));
        for _ in 0..count {
            let name_len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| Error::load(None, "tensor name is not UTF-8"))?
                .to_string();
            let rank = r.u8()? as usize;
            let shape = (0..rank)
                .map(|_| r.u32().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let raw = r.take(
                n.checked_mul(4)
                    .ok_or_else(|| Error::load(None, "tensor too large"))?,
            )?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            let t = Tensor::new(shape, data)
                .map_err(|e| Error::load(layer_of(&name), format!("tensor {name}: {e}")))?;
            tensors.push((name, t));
        }
        if r.pos != bytes.len() {
            return Err(Error::load(
                None,
                format!("{} trailing bytes after last tensor", bytes.len() - r.pos),
            ));
        }
        Ok(Self { tensors })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path)
            .map_err(|e| Error::load(None, format!("{}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }
}

/// Top-level layer index encoded in a tensor name such as `layer3.weight`.
pub(crate) fn layer_of(name: &str) -> Option<usize> {
    name.strip_prefix("layer")?.split('.').next()?.parse().ok()
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::load(
                None,
                format!(
                    "truncated file: needed {n} bytes at offset {}, {} remain",
                    self.pos,
                    self.buf.len() - self.pos
                ),
            )),
        }
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}
