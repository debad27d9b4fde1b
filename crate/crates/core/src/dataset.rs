//! In-memory paired dataset: one caption per video, matched by index.

use crate::error::{CoreError, Result};
use crate::tensor::Matrix;
use crate::text::CaptionRecord;

#[derive(Debug, Clone)]
pub struct VideoItem {
    pub id: String,
    /// `frames x dim` feature matrix.
    pub frames: Matrix,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub videos: Vec<VideoItem>,
    pub captions: Vec<CaptionRecord>,
}

impl Dataset {
    pub fn new(videos: Vec<VideoItem>, captions: Vec<CaptionRecord>) -> Result<Self> {
        let ds = Dataset { videos, captions };
        ds.validate()?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.videos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.videos.is_empty()
    }

    /// Shared embedding dimension of the video side.
    pub fn dim(&self) -> usize {
        self.videos.first().map_or(0, |v| v.frames.cols())
    }

    pub fn token_dim(&self) -> usize {
        self.captions.first().map_or(0, |c| c.tokens.cols())
    }

    pub fn max_frames(&self) -> usize {
        self.videos.iter().map(|v| v.frames.rows()).max().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.videos.len() != self.captions.len() {
            return Err(CoreError::BatchMismatch {
                detail: format!(
                    "{} videos but {} captions",
                    self.videos.len(),
                    self.captions.len()
                ),
            });
        }
        let dim = self.dim();
        for v in &self.videos {
            if v.frames.rows() == 0 {
                return Err(CoreError::EmptyVideo);
            }
            if v.frames.cols() != dim {
                return Err(CoreError::DimensionMismatch {
                    op: "dataset",
                    detail: format!("video {} has dim {}, expected {dim}", v.id, v.frames.cols()),
                });
            }
        }
        let token_dim = self.token_dim();
        for (i, c) in self.captions.iter().enumerate() {
            c.validate()?;
            if c.tokens.cols() != token_dim {
                return Err(CoreError::DimensionMismatch {
                    op: "dataset",
                    detail: format!(
                        "caption {} has token dim {}, expected {token_dim}",
                        c.caption_id,
                        c.tokens.cols()
                    ),
                });
            }
            if c.video_id != self.videos[i].id {
                return Err(CoreError::BatchMismatch {
                    detail: format!(
                        "caption {} at position {i} names video {} but the paired video is {}",
                        c.caption_id, c.video_id, self.videos[i].id
                    ),
                });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn caption(id: &str, vid: &str) -> CaptionRecord {
        CaptionRecord {
            caption_id: id.into(),
            video_id: vid.into(),
            tokens: Matrix::new(1, 2, vec![1.0, 0.0]).unwrap(),
            entity_mask: vec![true],
            action_mask: vec![true],
        }
    }

    #[test]
    fn pairing_must_match() {
        let videos = vec![VideoItem {
            id: "v0".into(),
            frames: Matrix::new(1, 2, vec![0.5, 0.5]).unwrap(),
        }];
        assert!(Dataset::new(videos.clone(), vec![caption("c0", "v0")]).is_ok());
        assert!(Dataset::new(videos, vec![caption("c0", "v1")]).is_err());
    }
}
