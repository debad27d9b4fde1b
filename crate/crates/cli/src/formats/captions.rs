//! Line-delimited caption records (JSON per line).
//!
//! Token embeddings live in a companion `CAEB` file; each caption points at
//! one item of it via `token_embedding_ref` and uses the first
//! `tokens.len()` vectors of that item.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::formats::util::atomic_write;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionLine {
    pub id: String,
    pub video_id: String,
    pub tokens: Vec<String>,
    pub entity_mask: Vec<u8>,
    pub action_mask: Vec<u8>,
    pub token_embedding_ref: u32,
}

impl CaptionLine {
    fn validate(&self, path: &Path, offset: u64) -> Result<()> {
        let fail = |detail: String| HarnessError::Format {
            path: path.to_path_buf(),
            offset,
            detail,
        };
        if self.tokens.is_empty() {
            return Err(fail(format!("caption {} has no tokens", self.id)));
        }
        if self.entity_mask.len() != self.tokens.len() || self.action_mask.len() != self.tokens.len()
        {
            return Err(fail(format!(
                "caption {}: mask lengths {}/{} do not match {} tokens",
                self.id,
                self.entity_mask.len(),
                self.action_mask.len(),
                self.tokens.len()
            )));
        }
        if self
            .entity_mask
            .iter()
            .chain(&self.action_mask)
            .any(|&m| m > 1)
        {
            return Err(fail(format!("caption {}: mask entries must be 0 or 1", self.id)));
        }
        Ok(())
    }
}

pub fn write_caption_file(path: &Path, lines: &[CaptionLine]) -> Result<()> {
    let mut out = String::new();
    for line in lines {
        out.push_str(&serde_json::to_string(line).expect("caption serializes"));
        out.push('\n');
    }
    atomic_write(path, out.as_bytes())
}

pub fn read_caption_file(path: &Path) -> Result<Vec<CaptionLine>> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    let mut out = Vec::new();
    let mut offset = 0u64;
    for line in text.lines() {
        if !line.trim().is_empty() {
            let parsed: CaptionLine =
                serde_json::from_str(line).map_err(|e| HarnessError::Format {
                    path: path.to_path_buf(),
                    offset: offset + e.column() as u64,
                    detail: e.to_string(),
                })?;
            parsed.validate(path, offset)?;
            out.push(parsed);
        }
        offset += line.len() as u64 + 1;
    }
    Ok(out)
}
