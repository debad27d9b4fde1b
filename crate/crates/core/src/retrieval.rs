//! Similarity-matrix construction, dual-softmax inference reranking, ranking
//! metrics and the per-expert / gate-weight analyses.

use crate::dataset::Dataset;
use crate::error::{CoreError, Result};
use crate::loss::{dsl_priors, LossConfig, SimilarityMatrix};
use crate::model::{forward_batch, BatchData, ModelConfig, ModelParams};
use crate::moe::VideoReprSet;
use crate::par;
use crate::task::TaskId;
use crate::tensor::Matrix;

/// Retrieval direction: which side issues the query.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Text query, video gallery (rank each column's rows).
    T2V,
    /// Video query, text gallery (rank each row's columns).
    V2T,
}

impl Direction {
    pub fn name(self) -> &'static str {
        match self {
            Direction::T2V => "t2v",
            Direction::V2T => "v2t",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "t2v" => Some(Direction::T2V),
            "v2t" => Some(Direction::V2T),
            _ => None,
        }
    }
}

/// Ranking quality for one direction over a square score matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct RankingResult {
    pub direction: Direction,
    /// 1-based rank of the ground truth for each query.
    pub ranks: Vec<usize>,
    pub r_at_1: f64,
    pub r_at_5: f64,
    pub r_at_10: f64,
    pub median_rank: f64,
    pub mean_rank: f64,
}

/// Build the similarity matrix for one task from forward outputs.
pub fn build_similarity(
    videos: &[VideoReprSet<f64>],
    texts: &[Vec<f64>],
    task: TaskId,
) -> Result<SimilarityMatrix> {
    if videos.len() != texts.len() {
        return Err(CoreError::BatchMismatch {
            detail: format!("{} videos vs {} texts", videos.len(), texts.len()),
        });
    }
    let reprs: Vec<&Vec<f64>> = videos
        .iter()
        .map(|v| {
            v.repr(task).ok_or_else(|| CoreError::ModeMismatch {
                mode: "eval".into(),
                detail: format!("model produced no visual representation for task {task}"),
            })
        })
        .collect::<Result<_>>()?;
    let owned: Vec<Vec<f64>> = reprs.into_iter().cloned().collect();
    SimilarityMatrix::from_reprs(&owned, texts)
}

/// Multiply a similarity matrix elementwise by the dual-softmax prior for
/// the requested direction; ranking then proceeds on the corrected matrix.
pub fn dsl_rerank(s: &SimilarityMatrix, temp: f64, direction: Direction) -> Result<Matrix> {
    let (pr_v2t, pr_t2v) = dsl_priors(s, temp)?;
    let prior = match direction {
        Direction::V2T => pr_v2t,
        Direction::T2V => pr_t2v,
    };
    let n = s.n();
    let mut data = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            data.push(s.get(i, j) * prior.get(i, j));
        }
    }
    Matrix::new(n, n, data)
}

/// [`dsl_rerank`] with the prior's normalization restricted to contiguous
/// index blocks of size `window` along its normalization axis, for
/// sensitivity studies. `window >= n` (or 0) reproduces the full prior;
/// `window == 1` degenerates to the identity correction.
pub fn dsl_rerank_windowed(
    s: &SimilarityMatrix,
    temp: f64,
    direction: Direction,
    window: usize,
) -> Result<Matrix> {
    let n = s.n();
    if window == 0 || window >= n {
        return dsl_rerank(s, temp, direction);
    }
    if !(temp > 0.0) {
        return Err(CoreError::InvalidConfig {
            detail: format!("dsl temperature must be positive, got {temp}"),
        });
    }
    let mut out = Matrix::zeros(n, n);
    match direction {
        // v2t prior normalizes down each column; window the rows.
        Direction::V2T => {
            for j in 0..n {
                for start in (0..n).step_by(window) {
                    let end = (start + window).min(n);
                    let m = (start..end)
                        .map(|i| temp * s.get(i, j))
                        .fold(f64::NEG_INFINITY, f64::max);
                    let exps: Vec<f64> =
                        (start..end).map(|i| (temp * s.get(i, j) - m).exp()).collect();
                    let sum: f64 = exps.iter().sum();
                    for (k, i) in (start..end).enumerate() {
                        out.set(i, j, s.get(i, j) * exps[k] / sum);
                    }
                }
            }
        }
        // t2v prior normalizes along each row; window the columns.
        Direction::T2V => {
            for i in 0..n {
                for start in (0..n).step_by(window) {
                    let end = (start + window).min(n);
                    let m = (start..end)
                        .map(|j| temp * s.get(i, j))
                        .fold(f64::NEG_INFINITY, f64::max);
                    let exps: Vec<f64> =
                        (start..end).map(|j| (temp * s.get(i, j) - m).exp()).collect();
                    let sum: f64 = exps.iter().sum();
                    for (k, j) in (start..end).enumerate() {
                        out.set(i, j, s.get(i, j) * exps[k] / sum);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Rank of the ground truth among the gallery scores: one plus the number of
/// strictly greater competitors, so ties resolve optimistically.
fn rank_of(scores: &[f64], truth: usize) -> usize {
    let own = scores[truth];
    1 + scores.iter().filter(|&&s| s > own).count()
}

/// Aggregate a list of 1-based ranks into the reported metrics. The median
/// of an even-length list is the mean of the two central ranks.
pub fn summarize_ranks(direction: Direction, ranks: Vec<usize>) -> RankingResult {
    let n = ranks.len();
    let frac_within = |k: usize| ranks.iter().filter(|&&r| r <= k).count() as f64 / n as f64;
    let mut sorted = ranks.clone();
    sorted.sort_unstable();
    let median_rank = if n % 2 == 1 {
        sorted[n / 2] as f64
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) as f64 / 2.0
    };
    let mean_rank = ranks.iter().sum::<usize>() as f64 / n as f64;
    RankingResult {
        direction,
        r_at_1: frac_within(1),
        r_at_5: frac_within(5),
        r_at_10: frac_within(10),
        median_rank,
        mean_rank,
        ranks,
    }
}

/// Ranking metrics over any square score matrix. For `T2V` each text
/// (column) queries the videos (rows); for `V2T` each video (row) queries
/// the texts (columns). The diagonal is ground truth.
pub fn compute_metrics(scores: &Matrix, direction: Direction) -> Result<RankingResult> {
    if scores.rows() != scores.cols() {
        return Err(CoreError::DimensionMismatch {
            op: "compute_metrics",
            detail: format!("{}x{} is not square", scores.rows(), scores.cols()),
        });
    }
    let n = scores.rows();
    if n == 0 {
        return Err(CoreError::EmptyInput {
            op: "compute_metrics",
        });
    }
    let mut ranks = vec![0usize; n];
    par::fill_indexed(&mut ranks, 64, |q| match direction {
        Direction::T2V => rank_of(&scores.col(q), q),
        Direction::V2T => rank_of(scores.row(q), q),
    });
    Ok(summarize_ranks(direction, ranks))
}

/// Metrics for one task under one scoring scheme, both directions.
#[derive(Debug, Clone)]
pub struct EvalRow {
    pub task: TaskId,
    pub dsl: bool,
    pub temp: Option<f64>,
    pub t2v: RankingResult,
    pub v2t: RankingResult,
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub fallbacks: usize,
}

/// Options for [`evaluate`].
#[derive(Debug, Clone, Default)]
pub struct EvalOptions {
    /// Evaluate every task's own similarity space, not just fusion.
    pub per_expert: bool,
    /// Also report dual-softmax-corrected metrics at this temperature.
    pub dsl_temp: Option<f64>,
    /// Optional prior window for the corrected metrics.
    pub dsl_window: usize,
}

/// Forward a whole dataset and return the per-task similarity matrices in
/// task order, plus the fallback count.
pub fn dataset_similarities(
    cfg: &ModelConfig,
    params: &ModelParams<f64>,
    data: &Dataset,
) -> Result<(Vec<(TaskId, SimilarityMatrix)>, usize)> {
    let indices: Vec<usize> = (0..data.len()).collect();
    let batch = BatchData::from_dataset(data, &indices);
    let out = forward_batch(cfg, params, &batch)?;
    let mut mats = Vec::new();
    for (task, encodings) in &out.texts {
        mats.push((*task, build_similarity(&out.videos, encodings, *task)?));
    }
    Ok((mats, out.fallbacks))
}

/// Plain and optionally corrected metrics over a dataset; the whole gallery
/// acts as one batch for the prior.
pub fn evaluate(
    cfg: &ModelConfig,
    params: &ModelParams<f64>,
    data: &Dataset,
    opts: &EvalOptions,
) -> Result<EvalReport> {
    let (mats, fallbacks) = dataset_similarities(cfg, params, data)?;
    let mut rows = Vec::new();
    for (task, s) in &mats {
        if !opts.per_expert && *task != TaskId::Fusion {
            continue;
        }
        rows.push(EvalRow {
            task: *task,
            dsl: false,
            temp: None,
            t2v: compute_metrics(s.matrix(), Direction::T2V)?,
            v2t: compute_metrics(s.matrix(), Direction::V2T)?,
        });
        if let Some(temp) = opts.dsl_temp {
            let ct2v = dsl_rerank_windowed(s, temp, Direction::T2V, opts.dsl_window)?;
            let cv2t = dsl_rerank_windowed(s, temp, Direction::V2T, opts.dsl_window)?;
            rows.push(EvalRow {
                task: *task,
                dsl: true,
                temp: Some(temp),
                t2v: compute_metrics(&ct2v, Direction::T2V)?,
                v2t: compute_metrics(&cv2t, Direction::V2T)?,
            });
        }
    }
    Ok(EvalReport { rows, fallbacks })
}

/// Per-expert evaluation: plain and corrected metrics for every task's own
/// similarity space.
pub fn per_expert_eval(
    cfg: &ModelConfig,
    params: &ModelParams<f64>,
    data: &Dataset,
    loss_cfg: &LossConfig,
) -> Result<EvalReport> {
    evaluate(
        cfg,
        params,
        data,
        &EvalOptions {
            per_expert: true,
            dsl_temp: Some(loss_cfg.temperature),
            dsl_window: 0,
        },
    )
}

/// Per-video gate weights and their mean over a dataset.
#[derive(Debug, Clone)]
pub struct GateReport {
    pub per_video: Vec<(String, Vec<f64>)>,
    pub mean: Vec<f64>,
}

pub fn gate_report(
    cfg: &ModelConfig,
    params: &ModelParams<f64>,
    data: &Dataset,
) -> Result<GateReport> {
    let indices: Vec<usize> = (0..data.len()).collect();
    let batch = BatchData::from_dataset(data, &indices);
    let out = forward_batch(cfg, params, &batch)?;
    let mut per_video = Vec::with_capacity(out.videos.len());
    let mut mean = vec![0.0f64; 3];
    for (video, item) in out.videos.iter().zip(&data.videos) {
        let weights = video
            .gate_weights
            .clone()
            .ok_or_else(|| CoreError::ModeMismatch {
                mode: cfg.mode.name().into(),
                detail: "this mode has no gate to inspect".into(),
            })?;
        for (m, w) in mean.iter_mut().zip(&weights) {
            *m += w;
        }
        per_video.push((item.id.clone(), weights));
    }
    let n = per_video.len().max(1) as f64;
    for m in mean.iter_mut() {
        *m /= n;
    }
    Ok(GateReport { per_video, mean })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn sim(n: usize, data: Vec<f64>) -> SimilarityMatrix {
        SimilarityMatrix::from_matrix(Matrix::new(n, n, data).unwrap()).unwrap()
    }

    /// Naive full-sort ranking used as an independent oracle.
    fn sort_rank(scores: &[f64], truth: usize) -> usize {
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| {
            scores[b]
                .partial_cmp(&scores[a])
                .unwrap()
                .then_with(|| (a != truth).cmp(&(b != truth)))
        });
        1 + order.iter().position(|&i| i == truth).unwrap()
    }

    #[test]
    fn orthonormal_reprs_give_identity() {
        let reprs = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
        let s = SimilarityMatrix::from_reprs(&reprs, &reprs).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(s.get(i, j), if i == j { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn similarity_is_scale_invariant() {
        let mut rng = Rng::new(2);
        let videos: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..4).map(|_| rng.uniform(-1.0, 1.0)).collect())
            .collect();
        let texts: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..4).map(|_| rng.uniform(-1.0, 1.0)).collect())
            .collect();
        let scaled: Vec<Vec<f64>> = videos
            .iter()
            .map(|v| v.iter().map(|x| x * 5.0).collect())
            .collect();
        let a = SimilarityMatrix::from_reprs(&videos, &texts).unwrap();
        let b = SimilarityMatrix::from_reprs(&scaled, &texts).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((a.get(i, j) - b.get(i, j)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn seeded_similarity_matches_scalar_cosine() {
        let mut rng = Rng::new(9);
        let videos: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..3).map(|_| rng.uniform(-1.0, 1.0)).collect())
            .collect();
        let texts: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..3).map(|_| rng.uniform(-1.0, 1.0)).collect())
            .collect();
        let s = SimilarityMatrix::from_reprs(&videos, &texts).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = videos[i].iter().zip(&texts[j]).map(|(a, b)| a * b).sum();
                let nv: f64 = videos[i].iter().map(|x| x * x).sum::<f64>().sqrt();
                let nt: f64 = texts[j].iter().map(|x| x * x).sum::<f64>().sqrt();
                assert!((s.get(i, j) - dot / (nv * nt)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rerank_identity_for_single_item() {
        let s = sim(1, vec![0.37]);
        let out = dsl_rerank(&s, 100.0, Direction::V2T).unwrap();
        assert_eq!(out.get(0, 0), 0.37);
    }

    #[test]
    fn rerank_tiny_temperature_scales_by_inverse_n() {
        let mut rng = Rng::new(4);
        let n = 4;
        let data: Vec<f64> = (0..n * n).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let s = sim(n, data.clone());
        let out = dsl_rerank(&s, 1e-12, Direction::T2V).unwrap();
        for i in 0..n {
            for j in 0..n {
                assert!((out.get(i, j) - data[i * n + j] / n as f64).abs() < 1e-9);
            }
        }
        // order is untouched: same ranks before and after
        let before = compute_metrics(s.matrix(), Direction::T2V).unwrap();
        let after = compute_metrics(&out, Direction::T2V).unwrap();
        assert_eq!(before.ranks, after.ranks);
    }

    #[test]
    fn rerank_v2t_column_prior_oracle() {
        // Correction = S ⊙ column-softmax(S): each entry scaled by the share
        // of its column's mass, computed longhand.
        let s = sim(2, vec![0.8, 0.6, 0.4, 0.7]);
        let out = dsl_rerank(&s, 1.0, Direction::V2T).unwrap();
        let e = |x: f64| x.exp();
        let expected = [
            0.8 * e(0.8) / (e(0.8) + e(0.4)),
            0.6 * e(0.6) / (e(0.6) + e(0.7)),
            0.4 * e(0.4) / (e(0.8) + e(0.4)),
            0.7 * e(0.7) / (e(0.6) + e(0.7)),
        ];
        for i in 0..2 {
            for j in 0..2 {
                assert!((out.get(i, j) - expected[i * 2 + j]).abs() < 1e-12);
            }
        }
        assert!((out.get(0, 0) - 0.47896).abs() < 1e-4);
        assert!((out.get(1, 0) - 0.16052).abs() < 1e-4);
    }

    #[test]
    fn windowed_rerank_degenerates_correctly() {
        let mut rng = Rng::new(6);
        let n = 5;
        let data: Vec<f64> = (0..n * n).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let s = sim(n, data.clone());
        for dir in [Direction::T2V, Direction::V2T] {
            let full = dsl_rerank(&s, 2.0, dir).unwrap();
            let windowed = dsl_rerank_windowed(&s, 2.0, dir, n).unwrap();
            assert_eq!(full.as_slice(), windowed.as_slice());
            let singleton = dsl_rerank_windowed(&s, 2.0, dir, 1).unwrap();
            for (a, b) in singleton.as_slice().iter().zip(&data) {
                assert!((a - b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn perfect_diagonal_metrics() {
        let s = sim(3, vec![0.9, 0.1, 0.0, 0.1, 0.8, 0.0, 0.0, 0.1, 0.7]);
        for dir in [Direction::T2V, Direction::V2T] {
            let m = compute_metrics(s.matrix(), dir).unwrap();
            assert_eq!(m.r_at_1, 1.0);
            assert_eq!(m.median_rank, 1.0);
            assert_eq!(m.mean_rank, 1.0);
        }
    }

    #[test]
    fn counted_ranks_example() {
        // ranks {1, 2, 4}: R@1 = 1/3, R@5 = 1, MdR = 2, MnR = 7/3
        let m = summarize_ranks(Direction::T2V, vec![1, 2, 4]);
        assert!((m.r_at_1 - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.r_at_5, 1.0);
        assert_eq!(m.median_rank, 2.0);
        assert!((m.mean_rank - 7.0 / 3.0).abs() < 1e-15);
        // even query count: median averages the two central ranks
        let even = summarize_ranks(Direction::T2V, vec![1, 2, 4, 9]);
        assert_eq!(even.median_rank, 3.0);
    }

    #[test]
    fn ties_resolve_optimistically() {
        let s = sim(2, vec![0.5, 0.5, 0.5, 0.5]);
        let m = compute_metrics(s.matrix(), Direction::T2V).unwrap();
        assert_eq!(m.ranks, vec![1, 1]);
        assert_eq!(m.r_at_1, 1.0);
    }

    #[test]
    fn metrics_match_sort_oracle_on_random_matrices() {
        let mut rng = Rng::new(31);
        for _ in 0..100 {
            let n = 16;
            let data: Vec<f64> = (0..n * n).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let s = sim(n, data);
            for dir in [Direction::T2V, Direction::V2T] {
                let m = compute_metrics(s.matrix(), dir).unwrap();
                for q in 0..n {
                    let scores = match dir {
                        Direction::T2V => s.matrix().col(q),
                        Direction::V2T => s.matrix().row(q).to_vec(),
                    };
                    assert_eq!(m.ranks[q], sort_rank(&scores, q));
                }
            }
        }
    }

    #[test]
    fn permuting_both_axes_permutes_ranks() {
        let mut rng = Rng::new(41);
        let n = 8;
        let data: Vec<f64> = (0..n * n).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let s = sim(n, data.clone());
        let mut order: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut order);
        let mut permuted = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                permuted[i * n + j] = data[order[i] * n + order[j]];
            }
        }
        let sp = sim(n, permuted);
        for dir in [Direction::T2V, Direction::V2T] {
            let base = compute_metrics(s.matrix(), dir).unwrap();
            let perm = compute_metrics(sp.matrix(), dir).unwrap();
            for q in 0..n {
                assert_eq!(perm.ranks[q], base.ranks[order[q]]);
            }
            assert_eq!(base.r_at_1, perm.r_at_1);
            assert_eq!(base.r_at_5, perm.r_at_5);
            assert_eq!(base.median_rank, perm.median_rank);
            assert_eq!(base.mean_rank, perm.mean_rank);
        }
    }

    #[test]
    fn recall_monotone_in_k() {
        let mut rng = Rng::new(43);
        let n = 12;
        let data: Vec<f64> = (0..n * n).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let m = compute_metrics(sim(n, data).matrix(), Direction::V2T).unwrap();
        assert!(m.r_at_1 <= m.r_at_5 && m.r_at_5 <= m.r_at_10);
        assert!(m.mean_rank >= 1.0 && m.median_rank >= 1.0);
    }
}
