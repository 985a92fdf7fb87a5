use std::path::Path;

use super::map::{AttributionMap, MapMeta};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"DMBPA001";

/// `DMBPA001`, u32 height, u32 width, row-major f32 values, then a
/// u16-length UTF-8 JSON metadata string; all little-endian.
pub fn encode_raw(map: &AttributionMap) -> Result<Vec<u8>> {
    let meta = serde_json::to_string(&map.meta).map_err(|e| Error::Format(e.to_string()))?;
    let meta_len = u16::try_from(meta.len())
        .map_err(|_| Error::Format("metadata longer than 65535 bytes".into()))?;
    let mut out = Vec::with_capacity(8 + 8 + 4 * map.values.len() + 2 + meta.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(map.height as u32).to_le_bytes());
    out.extend_from_slice(&(map.width as u32).to_le_bytes());
    for v in &map.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&meta_len.to_le_bytes());
    out.extend_from_slice(meta.as_bytes());
    Ok(out)
}

pub fn decode_raw(bytes: &[u8]) -> Result<AttributionMap> {
    let truncated = || Error::Format("truncated attribution file".into());
    if bytes.len() < 8 || &bytes[..8] != MAGIC {
        return Err(Error::Format("bad magic in attribution file".into()));
    }
    let u32_at = |i: usize| -> Result<usize> {
        let b = bytes.get(i..i + 4).ok_or_else(truncated)?;
        Ok(u32::from_le_bytes(b.try_into().expect("four bytes")) as usize)
    };
    let (height, width) = (u32_at(8)?, u32_at(12)?);
    let n = height.checked_mul(width).ok_or_else(truncated)?;
    let body = bytes.get(16..16 + 4 * n).ok_or_else(truncated)?;
    let values = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("four bytes")))
        .collect();
    let at = 16 + 4 * n;
    let len = bytes.get(at..at + 2).ok_or_else(truncated)?;
    let len = u16::from_le_bytes([len[0], len[1]]) as usize;
    let meta = bytes.get(at + 2..at + 2 + len).ok_or_else(truncated)?;
    if bytes.len() != at + 2 + len {
        return Err(Error::Format(
            "trailing bytes after attribution metadata".into(),
        ));
    }
    let meta =
        std::str::from_utf8(meta).map_err(|_| Error::Format("metadata is not UTF-8".into()))?;
    let meta: MapMeta =
        serde_json::from_str(meta).map_err(|e| Error::Format(format!("metadata: {e}")))?;
    AttributionMap::new(height, width, values, meta).map_err(|e| Error::Format(e.to_string()))
}

pub fn write_raw(map: &AttributionMap, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode_raw(map)?)?;
    Ok(())
}

pub fn read_raw(path: impl AsRef<Path>) -> Result<AttributionMap> {
    decode_raw(&std::fs::read(path)?)
}
