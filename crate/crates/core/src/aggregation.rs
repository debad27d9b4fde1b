//! Frame aggregation: collapse the `C x d` frame features of one video into
//! a single d-vector.
//!
//! Three schemes are provided. Mean pooling is parameter-free. The
//! squeeze-excitation scheme scores each frame with a sigmoid gate driven by
//! a bottleneck network over the global average, then takes the
//! score-weighted mean. Single-head self-attention adds a trainable position
//! table, attends frames to each other and averages the transformed rows.

use crate::error::{CoreError, Result};
use crate::kernels::{dot, softmax_slice, FfnParams};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggregatorKind {
    MeanPool,
    SeAttention,
    SelfAttention,
}

impl AggregatorKind {
    pub fn name(self) -> &'static str {
        match self {
            AggregatorKind::MeanPool => "mean-pool",
            AggregatorKind::SeAttention => "se-attention",
            AggregatorKind::SelfAttention => "self-attention",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "mean-pool" => Some(AggregatorKind::MeanPool),
            "se-attention" => Some(AggregatorKind::SeAttention),
            "self-attention" => Some(AggregatorKind::SelfAttention),
            _ => None,
        }
    }
}

/// Bottleneck network for the squeeze-excitation scheme (`d -> d/4 -> d`,
/// relu in between; the reduction follows the usual squeeze-excitation
/// convention).
#[derive(Debug, Clone)]
pub struct SeParams<R> {
    pub bottleneck: FfnParams<R>,
}

/// Single-head self-attention over frames.
///
/// `pos` is a trainable `max_frames x dim` position table, zero-initialized
/// so the scheme starts out permutation-invariant and only learns order if
/// it helps.
#[derive(Debug, Clone)]
pub struct SelfAttnParams<R> {
    pub key: FfnParams<R>,
    pub query: FfnParams<R>,
    pub value: FfnParams<R>,
    pub output: FfnParams<R>,
    pub pos: Vec<R>,
    pub max_frames: usize,
    pub dim: usize,
    pub attn_dim: usize,
}

#[derive(Debug, Clone)]
pub enum AggregatorParams<R> {
    MeanPool,
    Se(SeParams<R>),
    SelfAttn(SelfAttnParams<R>),
}

impl<R> AggregatorParams<R> {
    pub fn kind(&self) -> AggregatorKind {
        match self {
            AggregatorParams::MeanPool => AggregatorKind::MeanPool,
            AggregatorParams::Se(_) => AggregatorKind::SeAttention,
            AggregatorParams::SelfAttn(_) => AggregatorKind::SelfAttention,
        }
    }
}

fn check_frames(frames: &[impl Copy], c: usize, d: usize) -> Result<()> {
    if c == 0 {
        return Err(CoreError::EmptyVideo);
    }
    if frames.len() != c * d {
        return Err(CoreError::DimensionMismatch {
            op: "aggregate",
            detail: format!("{c}x{d} frames need {} values, got {}", c * d, frames.len()),
        });
    }
    Ok(())
}

/// Mean over frames. Permutation-invariant; output magnitude independent of
/// the frame count.
pub fn aggregate_mean<R: Real>(frames: &[R], c: usize, d: usize) -> Result<Vec<R>> {
    check_frames(frames, c, d)?;
    let inv = 1.0 / c as f64;
    let mut out: Vec<R> = frames[..d].to_vec();
    for f in 1..c {
        for k in 0..d {
            out[k] = out[k] + frames[f * d + k];
        }
    }
    Ok(out.into_iter().map(|v| v * inv).collect())
}

/// Squeeze-excitation aggregation.
///
/// The bottleneck maps the global average `a = mean_i x_i` to an excitation
/// vector `h`; each frame is gated by `sigmoid(h . x_i / sqrt(d))` and the
/// output is the score-weighted mean. With an all-zero bottleneck every
/// score is exactly 0.5, so the output is exactly half the plain mean.
pub fn aggregate_se<R: Real>(p: &SeParams<R>, frames: &[R], c: usize, d: usize) -> Result<Vec<R>> {
    check_frames(frames, c, d)?;
    let avg = aggregate_mean(frames, c, d)?;
    let excite = p.bottleneck.apply(&avg)?;
    if excite.len() != d {
        return Err(CoreError::DimensionMismatch {
            op: "aggregate_se",
            detail: format!("bottleneck emits {} values for dim {}", excite.len(), d),
        });
    }
    let scale = 1.0 / (d as f64).sqrt();
    let inv_c = 1.0 / c as f64;
    let mut out = Vec::with_capacity(d);
    let scores: Vec<R> = (0..c)
        .map(|f| (dot(&excite, &frames[f * d..(f + 1) * d]) * scale).sigmoid())
        .collect();
    for k in 0..d {
        let mut acc = scores[0] * frames[k];
        for f in 1..c {
            acc = acc + scores[f] * frames[f * d + k];
        }
        out.push(acc * inv_c);
    }
    Ok(out)
}

/// Single-head self-attention aggregation.
///
/// Each frame plus its position row is projected to key, query and value;
/// attention weights are the row-wise softmax of `Q K^T / sqrt(attn_dim)`;
/// the attended values pass through the output network and the rows are
/// averaged into one vector.
pub fn aggregate_selfattn<R: Real>(
    p: &SelfAttnParams<R>,
    frames: &[R],
    c: usize,
    d: usize,
) -> Result<Vec<R>> {
    check_frames(frames, c, d)?;
    if c > p.max_frames {
        return Err(CoreError::FrameCapacity {
            frames: c,
            capacity: p.max_frames,
        });
    }
    if d != p.dim {
        return Err(CoreError::DimensionMismatch {
            op: "aggregate_selfattn",
            detail: format!("frames have dim {} but params expect {}", d, p.dim),
        });
    }

    // x + p, then per-frame projections
    let mut keys = Vec::with_capacity(c);
    let mut queries = Vec::with_capacity(c);
    let mut values = Vec::with_capacity(c);
    for f in 0..c {
        let shifted: Vec<R> = (0..d)
            .map(|k| frames[f * d + k] + p.pos[f * d + k])
            .collect();
        keys.push(p.key.apply(&shifted)?);
        queries.push(p.query.apply(&shifted)?);
        values.push(p.value.apply(&shifted)?);
    }

    let scale = 1.0 / (p.attn_dim as f64).sqrt();
    let mut transformed = Vec::with_capacity(c);
    for q in 0..c {
        let logits: Vec<R> = (0..c).map(|k| dot(&queries[q], &keys[k]) * scale).collect();
        let weights = softmax_slice(&logits)?;
        let vd = values[0].len();
        let mut attended = Vec::with_capacity(vd);
        for k in 0..vd {
            let mut acc = weights[0] * values[0][k];
            for f in 1..c {
                acc = acc + weights[f] * values[f][k];
            }
            attended.push(acc);
        }
        transformed.push(p.output.apply(&attended)?);
    }

    // Row mean collapses the C transformed frames into one vector.
    let inv_c = 1.0 / c as f64;
    let od = transformed[0].len();
    let mut out = Vec::with_capacity(od);
    for k in 0..od {
        let mut acc = transformed[0][k];
        for row in transformed.iter().skip(1) {
            acc = acc + row[k];
        }
        out.push(acc * inv_c);
    }
    Ok(out)
}

/// Dispatch on the parameter variant.
pub fn aggregate<R: Real>(
    params: &AggregatorParams<R>,
    frames: &[R],
    c: usize,
    d: usize,
) -> Result<Vec<R>> {
    match params {
        AggregatorParams::MeanPool => aggregate_mean(frames, c, d),
        AggregatorParams::Se(p) => aggregate_se(p, frames, c, d),
        AggregatorParams::SelfAttn(p) => aggregate_selfattn(p, frames, c, d),
    }
}

impl<R: Copy> AggregatorParams<R> {
    pub fn map<S>(&self, f: &mut impl FnMut(R) -> S) -> AggregatorParams<S> {
        match self {
            AggregatorParams::MeanPool => AggregatorParams::MeanPool,
            AggregatorParams::Se(p) => AggregatorParams::Se(SeParams {
                bottleneck: p.bottleneck.map(f),
            }),
            AggregatorParams::SelfAttn(p) => AggregatorParams::SelfAttn(SelfAttnParams {
                key: p.key.map(f),
                query: p.query.map(f),
                value: p.value.map(f),
                output: p.output.map(f),
                pos: p.pos.iter().map(|&v| f(v)).collect(),
                max_frames: p.max_frames,
                dim: p.dim,
                attn_dim: p.attn_dim,
            }),
        }
    }
}
