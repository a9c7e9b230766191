//! Binary checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic    8 bytes  "SQLSCKPT"
//! major    u16      format major version (readers reject other majors)
//! minor    u16
//! dim      u32      feature dimension
//! steps    u64      optimizer steps taken
//! classes  u32      catalog size C
//! C times: u32 byte length + UTF-8 skeleton text
//! C * dim  f64      weight rows, class-major
//! fnv64    u64      FNV-1a of every preceding byte
//! ```

use std::fs;
use std::path::Path;

use super::LearnerError;
use crate::seed::fnv1a;

pub const MAGIC: &[u8; 8] = b"SQLSCKPT";
pub const MAJOR: u16 = 1;
pub const MINOR: u16 = 0;

/// Opaque serialized parser state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Checkpoint {
    bytes: Vec<u8>,
}

pub(crate) struct CheckpointContents {
    pub dim: usize,
    pub steps: u64,
    pub catalog: Vec<String>,
    pub weights: Vec<Vec<f64>>,
}

impl Checkpoint {
    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    /// Wrap raw bytes; validation happens on restore.
    pub fn from_bytes(bytes: Vec<u8>) -> Self {
        Checkpoint { bytes }
    }

    pub fn write_to(&self, path: &Path) -> Result<(), LearnerError> {
        fs::write(path, &self.bytes)?;
        Ok(())
    }

    pub fn read_from(path: &Path) -> Result<Self, LearnerError> {
        Ok(Checkpoint {
            bytes: fs::read(path)?,
        })
    }

    pub(crate) fn encode(c: &CheckpointContents) -> Self {
        let mut b = Vec::with_capacity(32 + c.catalog.len() * (16 + 8 * c.dim));
        b.extend_from_slice(MAGIC);
        b.extend_from_slice(&MAJOR.to_le_bytes());
        b.extend_from_slice(&MINOR.to_le_bytes());
        b.extend_from_slice(&(c.dim as u32).to_le_bytes());
        b.extend_from_slice(&c.steps.to_le_bytes());
        b.extend_from_slice(&(c.catalog.len() as u32).to_le_bytes());
        for s in &c.catalog {
            b.extend_from_slice(&(s.len() as u32).to_le_bytes());
            b.extend_from_slice(s.as_bytes());
        }
        for row in &c.weights {
            for w in row {
                b.extend_from_slice(&w.to_le_bytes());
            }
        }
        let sum = fnv1a(&b);
        b.extend_from_slice(&sum.to_le_bytes());
        Checkpoint { bytes: b }
    }

    pub(crate) fn decode(&self) -> Result<CheckpointContents, LearnerError> {
        let b = &self.bytes;
        let bad = |m: &str| LearnerError::Integrity(m.to_string());
        if b.len() < MAGIC.len() + 8 + 8 + 4 + 8 {
            return Err(bad("truncated header"));
        }
        let (body, tail) = b.split_at(b.len() - 8);
        let stored = u64::from_le_bytes(tail.try_into().expect("8 bytes"));
        if fnv1a(body) != stored {
            return Err(bad("checksum mismatch"));
        }
        let mut r = Reader { b: body, at: 0 };
        if r.take(8)? != MAGIC {
            return Err(bad("bad magic"));
        }
        let major = u16::from_le_bytes(r.take(2)?.try_into().expect("2 bytes"));
        let _minor = u16::from_le_bytes(r.take(2)?.try_into().expect("2 bytes"));
        if major != MAJOR {
            return Err(LearnerError::Integrity(format!("unsupported major version {major}")));
        }
        let dim = r.u32()? as usize;
        let steps = u64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
        let classes = r.u32()? as usize;
        let mut catalog = Vec::with_capacity(classes.min(1 << 16));
        for _ in 0..classes {
            let len = r.u32()? as usize;
            let s = std::str::from_utf8(r.take(len)?).map_err(|_| bad("skeleton is not UTF-8"))?;
            catalog.push(s.to_string());
        }
        let mut weights = Vec::with_capacity(classes);
        for _ in 0..classes {
            let raw = r.take(dim.checked_mul(8).ok_or_else(|| bad("dimension overflow"))?)?;
            weights.push(
                raw.chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                    .collect(),
            );
        }
        if r.at != body.len() {
            return Err(bad("trailing bytes"));
        }
        Ok(CheckpointContents {
            dim,
            steps,
            catalog,
            weights,
        })
    }
}

struct Reader<'a> {
    b: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], LearnerError> {
        let end = self
            .at
            .checked_add(n)
            .filter(|&e| e <= self.b.len())
            .ok_or_else(|| LearnerError::Integrity("truncated body".into()))?;
        let s = &self.b[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, LearnerError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}
