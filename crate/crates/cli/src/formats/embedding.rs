//! The `CAEB` binary embedding container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! offset 0   magic   "CAEB" (4 bytes)
//! offset 4   version u32    (currently 1)
//! offset 8   items   u32    number of items
//! offset 12  vectors u32    vectors per item
//! offset 16  dim     u32    floats per vector
//! offset 20  payload items*vectors*dim little-endian f32, row-major
//! ```
//!
//! Storage is f32; computation happens in f64 after load.

use std::fs;
use std::path::Path;

use camoe_core::Tensor3;

use crate::error::{HarnessError, Result};
use crate::formats::util::atomic_write;

pub const MAGIC: &[u8; 4] = b"CAEB";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingFile {
    pub items: u32,
    pub vectors: u32,
    pub dim: u32,
    /// `items * vectors * dim` values, row-major.
    pub data: Vec<f32>,
}

impl EmbeddingFile {
    pub fn new(items: u32, vectors: u32, dim: u32, data: Vec<f32>) -> Result<Self> {
        let expected = items as usize * vectors as usize * dim as usize;
        if data.len() != expected {
            return Err(HarnessError::InvalidArgument(format!(
                "embedding payload needs {expected} floats, got {}",
                data.len()
            )));
        }
        Ok(EmbeddingFile {
            items,
            vectors,
            dim,
            data,
        })
    }

    pub fn from_f64(items: u32, vectors: u32, dim: u32, data: &[f64]) -> Result<Self> {
        EmbeddingFile::new(items, vectors, dim, data.iter().map(|&v| v as f32).collect())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(20 + self.data.len() * 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.items.to_le_bytes());
        out.extend_from_slice(&self.vectors.to_le_bytes());
        out.extend_from_slice(&self.dim.to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        atomic_write(path, &self.to_bytes())
    }

    pub fn from_bytes(path: &Path, bytes: &[u8]) -> Result<Self> {
        let fail = |offset: u64, detail: String| HarnessError::Format {
            path: path.to_path_buf(),
            offset,
            detail,
        };
        if bytes.len() < 20 {
            return Err(fail(
                bytes.len() as u64,
                format!("file truncated: {} bytes is shorter than the 20-byte header", bytes.len()),
            ));
        }
        if &bytes[0..4] != MAGIC {
            return Err(fail(0, format!("bad magic {:?}, expected \"CAEB\"", &bytes[0..4])));
        }
        let u32_at = |off: usize| u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
        let version = u32_at(4);
        if version != VERSION {
            return Err(fail(4, format!("unsupported version {version}, expected {VERSION}")));
        }
        let items = u32_at(8);
        let vectors = u32_at(12);
        let dim = u32_at(16);
        let count = items as usize * vectors as usize * dim as usize;
        let expected_len = 20 + count * 4;
        if bytes.len() != expected_len {
            return Err(fail(
                bytes.len().min(expected_len) as u64,
                format!(
                    "payload length mismatch: header promises {count} floats ({expected_len} bytes total), file has {} bytes",
                    bytes.len()
                ),
            ));
        }
        let mut data = Vec::with_capacity(count);
        for i in 0..count {
            let off = 20 + i * 4;
            let v = f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
            if !v.is_finite() {
                return Err(fail(off as u64, format!("non-finite value {v} in payload")));
            }
            data.push(v);
        }
        Ok(EmbeddingFile {
            items,
            vectors,
            dim,
            data,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_bytes(path, &bytes)
    }

    pub fn to_tensor(&self) -> Result<Tensor3> {
        Ok(Tensor3::new(
            self.items as usize,
            self.vectors as usize,
            self.dim as usize,
            self.data.iter().map(|&v| v as f64).collect(),
        )?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> EmbeddingFile {
        EmbeddingFile::new(2, 3, 2, (0..12).map(|i| i as f32 / 4.0).collect()).unwrap()
    }

    #[test]
    fn byte_round_trip_is_identical() {
        let f = sample();
        let bytes = f.to_bytes();
        let back = EmbeddingFile::from_bytes(Path::new("mem"), &bytes).unwrap();
        assert_eq!(back, f);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn truncation_names_the_offset() {
        let mut bytes = sample().to_bytes();
        bytes.truncate(bytes.len() - 3);
        let err = EmbeddingFile::from_bytes(Path::new("mem"), &bytes).unwrap_err();
        match err {
            HarnessError::Format { offset, .. } => assert_eq!(offset, bytes.len() as u64),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn bad_magic_points_at_zero() {
        let mut bytes = sample().to_bytes();
        bytes[0] = b'X';
        match EmbeddingFile::from_bytes(Path::new("mem"), &bytes).unwrap_err() {
            HarnessError::Format { offset, .. } => assert_eq!(offset, 0),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn tensor_view_matches_layout() {
        let t = sample().to_tensor().unwrap();
        assert_eq!(t.items(), 2);
        let m = t.item(1);
        assert_eq!(m.row(0), &[1.5, 1.75]);
    }
}
