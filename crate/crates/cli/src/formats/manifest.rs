//! Dataset manifest: the generator's parameters and the ground-truth
//! pairing, one JSON record per line. The first record describes the
//! generation spec; each following record is one caption-video pair.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::formats::util::atomic_write;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record")]
pub enum ManifestLine {
    #[serde(rename = "spec")]
    Spec(SpecRecord),
    #[serde(rename = "pair")]
    Pair(PairRecord),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecRecord {
    pub pairs: u32,
    pub dim: u32,
    pub frames: u32,
    pub tokens: u32,
    pub entity_concepts: u32,
    pub action_concepts: u32,
    pub noise: f64,
    pub ambiguity: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub caption_id: String,
    pub video_id: String,
    pub ambiguous: bool,
    /// Entity-sharing group for ambiguous constructions; pairs in the same
    /// group compete for the same broad caption.
    pub group: Option<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub spec: SpecRecord,
    pub pairs: Vec<PairRecord>,
}

pub fn write_manifest(path: &Path, manifest: &Manifest) -> Result<()> {
    let mut out = String::new();
    out.push_str(&serde_json::to_string(&ManifestLine::Spec(manifest.spec.clone())).unwrap());
    out.push('\n');
    for pair in &manifest.pairs {
        out.push_str(&serde_json::to_string(&ManifestLine::Pair(pair.clone())).unwrap());
        out.push('\n');
    }
    atomic_write(path, out.as_bytes())
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    let mut spec = None;
    let mut pairs = Vec::new();
    let mut offset = 0u64;
    for line in text.lines() {
        if !line.trim().is_empty() {
            let parsed: ManifestLine =
                serde_json::from_str(line).map_err(|e| HarnessError::Format {
                    path: path.to_path_buf(),
                    offset: offset + e.column() as u64,
                    detail: e.to_string(),
                })?;
            match parsed {
                ManifestLine::Spec(s) => spec = Some(s),
                ManifestLine::Pair(p) => pairs.push(p),
            }
        }
        offset += line.len() as u64 + 1;
    }
    let spec = spec.ok_or_else(|| HarnessError::Format {
        path: path.to_path_buf(),
        offset: 0,
        detail: "manifest has no spec record".into(),
    })?;
    Ok(Manifest { spec, pairs })
}
