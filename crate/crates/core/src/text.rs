//! Semantic-side encoding: keyword selection strategies over caption tokens
//! and a small pluggable encoder (mean pooling plus a learned projection)
//! standing in for a full language model.
//!
//! Captions arrive with precomputed entity and action masks; no tagging
//! happens here.

use crate::error::{CoreError, Result};
use crate::kernels::FfnParams;
use crate::scalar::Real;
use crate::task::TaskId;
use crate::tensor::Matrix;

/// How a keyword subset is turned into an encodable input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SentenceStrategy {
    /// Recombine keywords: drop inactive tokens, encode the compacted rest.
    Rkw,
    /// Average keyword embeddings: encode every token, average only the
    /// projected active ones.
    Akwe,
    /// Mask unconsidered words: replace inactive tokens with a learned mask
    /// embedding, average over all positions.
    Muw,
}

impl SentenceStrategy {
    pub fn name(self) -> &'static str {
        match self {
            SentenceStrategy::Rkw => "rkw",
            SentenceStrategy::Akwe => "akwe",
            SentenceStrategy::Muw => "muw",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "rkw" => Some(SentenceStrategy::Rkw),
            "akwe" => Some(SentenceStrategy::Akwe),
            "muw" => Some(SentenceStrategy::Muw),
            _ => None,
        }
    }
}

/// One caption: token embeddings plus per-task keyword masks.
#[derive(Debug, Clone)]
pub struct CaptionRecord {
    pub caption_id: String,
    pub video_id: String,
    /// `T x token_dim` embedding matrix.
    pub tokens: Matrix,
    pub entity_mask: Vec<bool>,
    pub action_mask: Vec<bool>,
}

impl CaptionRecord {
    pub fn validate(&self) -> Result<()> {
        let t = self.tokens.rows();
        if t == 0 {
            return Err(CoreError::EmptyInput { op: "caption" });
        }
        if self.entity_mask.len() != t || self.action_mask.len() != t {
            return Err(CoreError::DimensionMismatch {
                op: "caption",
                detail: format!(
                    "caption {} has {} tokens but masks of length {}/{}",
                    self.caption_id,
                    t,
                    self.entity_mask.len(),
                    self.action_mask.len()
                ),
            });
        }
        Ok(())
    }
}

/// Trainable text-side parameters: a projection from token space to the
/// shared embedding space and the learned mask-token embedding used by the
/// masking strategy.
#[derive(Debug, Clone)]
pub struct TextEncoderParams<R> {
    pub projection: FfnParams<R>,
    pub mask_token: Vec<R>,
    pub strategy: SentenceStrategy,
}

impl<R: Copy> TextEncoderParams<R> {
    pub fn map<S>(&self, f: &mut impl FnMut(R) -> S) -> TextEncoderParams<S> {
        TextEncoderParams {
            projection: self.projection.map(f),
            mask_token: self.mask_token.iter().map(|&v| f(v)).collect(),
            strategy: self.strategy,
        }
    }
}

/// Borrowed view of one caption's tokens in scalar type `R`, used by the
/// generic encoding path.
#[derive(Debug, Clone, Copy)]
pub struct CaptionView<'a, R> {
    pub caption_id: &'a str,
    /// `tokens x dim`, row-major.
    pub data: &'a [R],
    pub tokens: usize,
    pub dim: usize,
    pub entity_mask: &'a [bool],
    pub action_mask: &'a [bool],
}

/// Which tokens a task considers active: the fusion task keeps everything,
/// entity and action tasks keep their keyword masks verbatim.
pub fn select_tokens(caption: &CaptionRecord, task: TaskId) -> Vec<bool> {
    let t = caption.tokens.rows();
    match task {
        TaskId::Fusion => vec![true; t],
        TaskId::Entity => caption.entity_mask.clone(),
        TaskId::Action => caption.action_mask.clone(),
    }
}

fn active_mask<'a, R>(view: &CaptionView<'a, R>, task: TaskId) -> Vec<bool> {
    match task {
        TaskId::Fusion => vec![true; view.tokens],
        TaskId::Entity => view.entity_mask.to_vec(),
        TaskId::Action => view.action_mask.to_vec(),
    }
}

/// Encode one caption given an explicit active mask.
///
/// Errors with [`CoreError::EmptyKeywords`] when no token is active; callers
/// that want the full-sentence fallback use [`encode_for_task`].
pub fn encode_text<R: Real>(
    params: &TextEncoderParams<R>,
    view: &CaptionView<'_, R>,
    active: &[bool],
    task: TaskId,
) -> Result<Vec<R>> {
    if active.len() != view.tokens {
        return Err(CoreError::DimensionMismatch {
            op: "encode_text",
            detail: format!("mask length {} vs {} tokens", active.len(), view.tokens),
        });
    }
    let n_active = active.iter().filter(|&&a| a).count();
    if n_active == 0 {
        return Err(CoreError::EmptyKeywords {
            caption_id: view.caption_id.to_string(),
            task: task.name(),
        });
    }
    let d = view.dim;
    let token = |i: usize| &view.data[i * d..(i + 1) * d];

    match params.strategy {
        SentenceStrategy::Muw => {
            // Inactive positions become the learned mask token; mean over all
            // T positions, then project.
            let inv = 1.0 / view.tokens as f64;
            let mut mean: Vec<R> = (0..d)
                .map(|k| {
                    if active[0] {
                        token(0)[k]
                    } else {
                        params.mask_token[k]
                    }
                })
                .collect();
            for i in 1..view.tokens {
                let src = if active[i] {
                    token(i)
                } else {
                    &params.mask_token
                };
                for k in 0..d {
                    mean[k] = mean[k] + src[k];
                }
            }
            let mean: Vec<R> = mean.into_iter().map(|v| v * inv).collect();
            params.projection.apply(&mean)
        }
        SentenceStrategy::Rkw => {
            // Drop inactive tokens and encode the compacted sequence.
            let inv = 1.0 / n_active as f64;
            let mut mean: Vec<Option<R>> = vec![None; d];
            for i in 0..view.tokens {
                if !active[i] {
                    continue;
                }
                for k in 0..d {
                    mean[k] = Some(match mean[k] {
                        None => token(i)[k],
                        Some(acc) => acc + token(i)[k],
                    });
                }
            }
            let mean: Vec<R> = mean
                .into_iter()
                .map(|v| v.expect("n_active > 0") * inv)
                .collect();
            params.projection.apply(&mean)
        }
        SentenceStrategy::Akwe => {
            // Project every token, average only the active projections.
            let inv = 1.0 / n_active as f64;
            let mut acc: Option<Vec<R>> = None;
            for i in 0..view.tokens {
                let projected = params.projection.apply(token(i))?;
                if !active[i] {
                    continue;
                }
                acc = Some(match acc {
                    None => projected,
                    Some(prev) => prev
                        .into_iter()
                        .zip(projected)
                        .map(|(a, b)| a + b)
                        .collect(),
                });
            }
            Ok(acc
                .expect("n_active > 0")
                .into_iter()
                .map(|v| v * inv)
                .collect())
        }
    }
}

/// Encode a caption for a task, falling back to the full sentence when the
/// task's keyword mask is empty. Returns the encoding and whether the
/// fallback fired so callers can log it.
pub fn encode_for_task<R: Real>(
    params: &TextEncoderParams<R>,
    view: &CaptionView<'_, R>,
    task: TaskId,
) -> Result<(Vec<R>, bool)> {
    let active = active_mask(view, task);
    match encode_text(params, view, &active, task) {
        Ok(enc) => Ok((enc, false)),
        Err(CoreError::EmptyKeywords { .. }) => {
            let all = vec![true; view.tokens];
            let enc = encode_text(params, view, &all, TaskId::Fusion)?;
            Ok((enc, true))
        }
        Err(e) => Err(e),
    }
}
