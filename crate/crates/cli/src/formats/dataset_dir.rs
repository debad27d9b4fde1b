//! Dataset directory layout and loading.
//!
//! ```text
//! <dir>/videos.caeb    frame features, one item per video
//! <dir>/tokens.caeb    token embeddings, one item per caption
//! <dir>/captions.jsonl caption records
//! <dir>/manifest.jsonl generation spec + ground-truth pairing
//! ```
//!
//! Video ids follow the convention `v<index>` where the index addresses the
//! item in `videos.caeb`; the loader resolves and checks them. Captions are
//! reordered so caption `i` pairs with video `i`, which makes the diagonal
//! of every similarity matrix the ground truth.

use std::path::{Path, PathBuf};

use camoe_core::dataset::{Dataset, VideoItem};
use camoe_core::text::CaptionRecord;
use camoe_core::Matrix;

use crate::error::{HarnessError, Result};
use crate::formats::captions::{read_caption_file, write_caption_file, CaptionLine};
use crate::formats::embedding::EmbeddingFile;
use crate::formats::manifest::{read_manifest, write_manifest, Manifest};

#[derive(Debug, Clone)]
pub struct DatasetFiles {
    pub videos: EmbeddingFile,
    pub tokens: EmbeddingFile,
    pub captions: Vec<CaptionLine>,
    pub manifest: Manifest,
}

pub fn video_path(dir: &Path) -> PathBuf {
    dir.join("videos.caeb")
}

pub fn token_path(dir: &Path) -> PathBuf {
    dir.join("tokens.caeb")
}

pub fn caption_path(dir: &Path) -> PathBuf {
    dir.join("captions.jsonl")
}

pub fn manifest_path(dir: &Path) -> PathBuf {
    dir.join("manifest.jsonl")
}

pub fn write_dataset_dir(dir: &Path, files: &DatasetFiles) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    files.videos.write(&video_path(dir))?;
    files.tokens.write(&token_path(dir))?;
    write_caption_file(&caption_path(dir), &files.captions)?;
    write_manifest(&manifest_path(dir), &files.manifest)?;
    Ok(())
}

/// Resolve the `v<index>` id convention.
fn video_index(id: &str, count: usize, path: &Path) -> Result<usize> {
    let invalid = || HarnessError::Format {
        path: path.to_path_buf(),
        offset: 0,
        detail: format!("video id {id:?} does not resolve into the video file (0..{count})"),
    };
    let idx: usize = id.strip_prefix('v').ok_or_else(invalid)?.parse().map_err(|_| invalid())?;
    if idx >= count {
        return Err(invalid());
    }
    Ok(idx)
}

/// Load a dataset directory into paired in-memory form, along with its
/// manifest.
pub fn load_dataset_dir(dir: &Path) -> Result<(Dataset, Manifest)> {
    let videos = EmbeddingFile::read(&video_path(dir))?;
    let tokens = EmbeddingFile::read(&token_path(dir))?;
    let cap_path = caption_path(dir);
    let caption_lines = read_caption_file(&cap_path)?;
    let manifest = read_manifest(&manifest_path(dir))?;

    let n = videos.items as usize;
    if caption_lines.len() != n {
        return Err(HarnessError::Format {
            path: cap_path.clone(),
            offset: 0,
            detail: format!("{} captions for {n} videos; need exactly one each", caption_lines.len()),
        });
    }
    let video_tensor = videos.to_tensor()?;
    let token_tensor = tokens.to_tensor()?;

    // Order captions by their video index so pairing is by position.
    let mut ordered: Vec<Option<CaptionRecord>> = (0..n).map(|_| None).collect();
    for line in &caption_lines {
        let v_idx = video_index(&line.video_id, n, &cap_path)?;
        let t = line.tokens.len();
        if line.token_embedding_ref as usize >= token_tensor.items() {
            return Err(HarnessError::Format {
                path: cap_path.clone(),
                offset: 0,
                detail: format!(
                    "caption {} points at token item {} of {}",
                    line.id, line.token_embedding_ref, token_tensor.items()
                ),
            });
        }
        if t > token_tensor.vectors() {
            return Err(HarnessError::Format {
                path: cap_path.clone(),
                offset: 0,
                detail: format!(
                    "caption {} has {t} tokens but the token file holds {} vectors per item",
                    line.id,
                    token_tensor.vectors()
                ),
            });
        }
        let item = token_tensor.item(line.token_embedding_ref as usize);
        let mut rows = Vec::with_capacity(t);
        for r in 0..t {
            rows.push(item.row(r).to_vec());
        }
        let record = CaptionRecord {
            caption_id: line.id.clone(),
            video_id: line.video_id.clone(),
            tokens: Matrix::from_rows(&rows)?,
            entity_mask: line.entity_mask.iter().map(|&m| m == 1).collect(),
            action_mask: line.action_mask.iter().map(|&m| m == 1).collect(),
        };
        if ordered[v_idx].replace(record).is_some() {
            return Err(HarnessError::Format {
                path: cap_path.clone(),
                offset: 0,
                detail: format!("video v{v_idx} is paired with more than one caption"),
            });
        }
    }
    let captions: Vec<CaptionRecord> = ordered
        .into_iter()
        .enumerate()
        .map(|(i, c)| {
            c.ok_or_else(|| HarnessError::Format {
                path: cap_path.clone(),
                offset: 0,
                detail: format!("video v{i} has no caption"),
            })
        })
        .collect::<Result<_>>()?;

    let video_items: Vec<VideoItem> = (0..n)
        .map(|i| VideoItem {
            id: format!("v{i}"),
            frames: video_tensor.item(i),
        })
        .collect();
    Ok((Dataset::new(video_items, captions)?, manifest))
}
