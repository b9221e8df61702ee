//! `LCUE` embedding tables: id → fixed-width vector.
//!
//! Layout (little-endian): magic `LCUE`, version `u32 = 1`, dim `u32`,
//! count `u64`, then `count` records of `id u64` followed by `dim` × `f32`.
//! Values are held in memory as `f64` but always at `f32` precision, so a
//! table written and read back is bit-identical.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const TABLE_MAGIC: &[u8; 4] = b"LCUE";
pub const TABLE_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 8;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    entries: BTreeMap<u64, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 || dim > u32::MAX as usize {
            return Err(Error::Config(format!("embedding dim {dim} out of range")));
        }
        Ok(Self {
            dim,
            entries: BTreeMap::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Inserts a vector, rounding every value to `f32` precision.
    pub fn insert(&mut self, id: u64, values: &[f64]) -> Result<()> {
        if values.len() != self.dim {
            return Err(Error::Shape {
                op: "EmbeddingTable::insert",
                left: (1, self.dim),
                right: (1, values.len()),
            });
        }
        if values.iter().any(|v| !(*v as f32).is_finite()) {
            return Err(Error::Data(format!("embedding {id} has a non-finite value")));
        }
        if self.entries.contains_key(&id) {
            return Err(Error::Data(format!("duplicate embedding id {id}")));
        }
        self.entries
            .insert(id, values.iter().map(|v| *v as f32 as f64).collect());
        Ok(())
    }

    pub fn get(&self, id: u64) -> Option<&[f64]> {
        self.entries.get(&id).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, &[f64])> {
        self.entries.iter().map(|(k, v)| (*k, v.as_slice()))
    }

    /// Records are written in ascending id order.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.entries.len() * (8 + 4 * self.dim));
        out.extend_from_slice(TABLE_MAGIC);
        out.extend_from_slice(&TABLE_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u64).to_le_bytes());
        for (id, v) in &self.entries {
            out.extend_from_slice(&id.to_le_bytes());
            for x in v {
                out.extend_from_slice(&(*x as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8], path: &str) -> Result<Self> {
        let fail = |offset: usize, reason: String| Error::Format {
            path: path.to_string(),
            offset: offset as u64,
            reason,
        };
        if bytes.len() < 4 || &bytes[..4] != TABLE_MAGIC {
            return Err(fail(0, "bad magic (expected LCUE)".into()));
        }
        if bytes.len() < HEADER_LEN {
            return Err(fail(bytes.len(), "truncated header".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != TABLE_VERSION {
            return Err(fail(4, format!("unsupported version {version}")));
        }
        let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        if dim == 0 {
            return Err(fail(8, "dim is zero".into()));
        }
        let count = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
        let record = 8 + 4 * dim;
        let expected = (count as u128) * record as u128 + HEADER_LEN as u128;
        if (bytes.len() as u128) < expected {
            let complete = (bytes.len() - HEADER_LEN) / record;
            return Err(fail(
                HEADER_LEN + complete * record,
                format!("truncated payload: {count} records declared, {complete} present"),
            ));
        }
        if (bytes.len() as u128) > expected {
            return Err(fail(expected as usize, "trailing bytes after the last record".into()));
        }

        let mut table = Self::new(dim)?;
        for r in 0..count as usize {
            let at = HEADER_LEN + r * record;
            let id = u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap());
            let values: Vec<f64> = bytes[at + 8..at + record]
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
                .collect();
            if values.iter().any(|v| !v.is_finite()) {
                return Err(fail(at, format!("record for id {id} holds a non-finite value")));
            }
            if table.entries.insert(id, values).is_some() {
                return Err(fail(at, format!("duplicate id {id}")));
            }
        }
        Ok(table)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes, &path.display().to_string())
    }
}
