//! `LCUW` parameter checkpoints.
//!
//! Layout (little-endian): magic `LCUW`, version `u32`, then sections until
//! end of file, each `name_len u16 | name (UTF-8) | rows u32 | cols u32 |
//! rows × cols f64`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::Tensor2D;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"LCUW";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn encode_checkpoint(sections: &[(String, Tensor2D)]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    for (name, t) in sections {
        let len = u16::try_from(name.len())
            .map_err(|_| Error::Data(format!("section name `{name}` longer than 65535 bytes")))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.rows() as u32).to_le_bytes());
        out.extend_from_slice(&(t.cols() as u32).to_le_bytes());
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn write_checkpoint(path: &Path, sections: &[(String, Tensor2D)]) -> Result<()> {
    let bytes = encode_checkpoint(sections)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a str,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Format {
                path: self.path.to_string(),
                offset: self.pos as u64,
                reason: format!("truncated {what}"),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

pub fn decode_checkpoint(bytes: &[u8], path: &str) -> Result<BTreeMap<String, Tensor2D>> {
    let mut c = Cursor { bytes, pos: 0, path };
    if c.take(4, "magic")? != CHECKPOINT_MAGIC {
        return Err(Error::Format {
            path: path.to_string(),
            offset: 0,
            reason: "bad magic (expected LCUW)".into(),
        });
    }
    let version = c.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format {
            path: path.to_string(),
            offset: 4,
            reason: format!("unsupported version {version}"),
        });
    }
    let mut out = BTreeMap::new();
    while c.pos < bytes.len() {
        let start = c.pos as u64;
        let len = c.u16("section name length")? as usize;
        let name = std::str::from_utf8(c.take(len, "section name")?)
            .map_err(|_| Error::Format {
                path: path.to_string(),
                offset: start + 2,
                reason: "section name is not UTF-8".into(),
            })?
            .to_string();
        let rows = c.u32("rows")? as usize;
        let cols = c.u32("cols")? as usize;
        let payload_at = c.pos as u64;
        let payload = c.take(rows * cols * 8, "payload")?;
        let data: Vec<f64> = payload
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        let t = Tensor2D::new(rows, cols, data).map_err(|_| Error::Format {
            path: path.to_string(),
            offset: payload_at,
            reason: format!("section `{name}` holds a non-finite value"),
        })?;
        if out.insert(name.clone(), t).is_some() {
            return Err(Error::Format {
                path: path.to_string(),
                offset: start,
                reason: format!("duplicate section `{name}`"),
            });
        }
    }
    Ok(out)
}

pub fn read_checkpoint(path: &Path) -> Result<BTreeMap<String, Tensor2D>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, &path.display().to_string())
}
