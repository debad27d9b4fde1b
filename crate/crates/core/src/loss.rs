//! Contrastive losses over similarity matrices and exact whole-model
//! gradients.
//!
//! The base loss is a symmetric cross-entropy: each video should rank its
//! own caption first among the batch texts (video-to-text) and vice versa
//! (text-to-video). The dual-softmax variant multiplies each direction's
//! logits by a prior computed in the *cross* direction before the softmax,
//! suppressing pairs that only match one way. By default the prior is a
//! constant in the backward pass; `dsl_backprop_prior` differentiates
//! through it for experimentation.

use crate::error::{CoreError, Result};
use crate::kernels::cosine_slice;
use crate::model::{
    forward_batch, param_index, BatchData, ModelConfig, ModelParams, ParamIndex, LOGIT_SCALE_MAX,
};
use crate::scalar::Real;
use crate::tape::Tape;
use crate::task::{PerTask, TaskId};
use crate::tensor::Matrix;

/// A square score matrix with rows indexed by video and columns by text;
/// the diagonal is the ground-truth pairing. Entries are validated into
/// [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    inner: Matrix,
}

impl SimilarityMatrix {
    pub fn from_matrix(m: Matrix) -> Result<Self> {
        if m.rows() != m.cols() {
            return Err(CoreError::DimensionMismatch {
                op: "similarity_matrix",
                detail: format!("{}x{} is not square", m.rows(), m.cols()),
            });
        }
        if m.as_slice().iter().any(|&v| !(-1.0 - 1e-9..=1.0 + 1e-9).contains(&v)) {
            return Err(CoreError::InvalidConfig {
                detail: "similarity entries must lie in [-1, 1]".into(),
            });
        }
        Ok(SimilarityMatrix { inner: m })
    }

    /// Build from paired representation lists via cosine similarity.
    pub fn from_reprs(videos: &[Vec<f64>], texts: &[Vec<f64>]) -> Result<Self> {
        if videos.len() != texts.len() {
            return Err(CoreError::BatchMismatch {
                detail: format!("{} videos vs {} texts", videos.len(), texts.len()),
            });
        }
        let n = videos.len();
        let mut data = Vec::with_capacity(n * n);
        for v in videos {
            for t in texts {
                data.push(cosine_slice(v, t)?.clamp(-1.0, 1.0));
            }
        }
        SimilarityMatrix::from_matrix(Matrix::new(n, n, data)?)
    }

    pub fn n(&self) -> usize {
        self.inner.rows()
    }

    pub fn get(&self, video: usize, text: usize) -> f64 {
        self.inner.get(video, text)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.inner
    }

    pub fn into_matrix(self) -> Matrix {
        self.inner
    }
}

/// Loss configuration shared by training and inference reranking.
#[derive(Debug, Clone)]
pub struct LossConfig {
    /// Logit scale stored as its natural log.
    pub log_logit_scale: f64,
    pub logit_scale_trainable: bool,
    /// Dual-softmax prior temperature.
    pub temperature: f64,
    pub dsl_enabled: bool,
    /// Differentiate through the prior instead of detaching it.
    pub dsl_backprop_prior: bool,
    /// Use the degenerate diagonal-numerator prior (comparison only).
    pub dsl_literal_numerator: bool,
    pub task_weights: PerTask<f64>,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            log_logit_scale: (1.0 / 0.07f64).ln(),
            logit_scale_trainable: true,
            temperature: 100.0,
            dsl_enabled: false,
            dsl_backprop_prior: false,
            dsl_literal_numerator: false,
            task_weights: PerTask::splat(1.0),
        }
    }
}

impl LossConfig {
    /// Exponentiated, capped logit scale.
    pub fn logit_scale(&self) -> f64 {
        self.log_logit_scale.exp().min(LOGIT_SCALE_MAX)
    }
}

/// Logit scale inside a generic loss evaluation: either a detached constant
/// or a differentiable parameter.
#[derive(Clone, Copy)]
enum Scale<R> {
    Fixed(f64),
    Learned(R),
}

impl<R: Real> Scale<R> {
    fn apply(self, x: R) -> R {
        match self {
            Scale::Fixed(l) => x * l,
            Scale::Learned(l) => x * l,
        }
    }
}

/// `-(1/n) Σ_i log softmax(row_i)[i]` with max-subtraction per row.
fn neg_mean_diag_log_softmax_rows<R: Real>(z: &[R], n: usize) -> R {
    let mut acc: Option<R> = None;
    for i in 0..n {
        let row = &z[i * n..(i + 1) * n];
        let m = row.iter().map(|v| v.value()).fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<R> = row.iter().map(|&v| (v - m).exp()).collect();
        let sum = exps.into_iter().reduce(|a, b| a + b).expect("n >= 1");
        let log_p = row[i] - m - sum.ln();
        acc = Some(match acc {
            None => log_p,
            Some(a) => a + log_p,
        });
    }
    -(acc.expect("n >= 1") * (1.0 / n as f64))
}

/// Column-wise analog of [`neg_mean_diag_log_softmax_rows`].
fn neg_mean_diag_log_softmax_cols<R: Real>(z: &[R], n: usize) -> R {
    let mut acc: Option<R> = None;
    for j in 0..n {
        let m = (0..n)
            .map(|i| z[i * n + j].value())
            .fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<R> = (0..n).map(|i| (z[i * n + j] - m).exp()).collect();
        let sum = exps.into_iter().reduce(|a, b| a + b).expect("n >= 1");
        let log_p = z[j * n + j] - m - sum.ln();
        acc = Some(match acc {
            None => log_p,
            Some(a) => a + log_p,
        });
    }
    -(acc.expect("n >= 1") * (1.0 / n as f64))
}

fn symmetric_ce_generic<R: Real>(sims: &[R], n: usize, scale: Scale<R>) -> (R, R) {
    let z: Vec<R> = sims.iter().map(|&s| scale.apply(s)).collect();
    (
        neg_mean_diag_log_softmax_rows(&z, n),
        neg_mean_diag_log_softmax_cols(&z, n),
    )
}

/// Symmetric cross-entropy on a prebuilt similarity matrix.
///
/// Returns `(video-to-text, text-to-video)` losses: the first softmaxes each
/// row over texts, the second each column over videos.
pub fn symmetric_ce(s: &SimilarityMatrix, logit_scale: f64) -> Result<(f64, f64)> {
    if s.n() == 0 {
        return Err(CoreError::EmptyInput { op: "symmetric_ce" });
    }
    Ok(symmetric_ce_generic(
        s.matrix().as_slice(),
        s.n(),
        Scale::Fixed(logit_scale),
    ))
}

/// Softmax over rows of `temp * values` as plain numbers.
fn row_softmax_f64(values: &[f64], n: usize, temp: f64) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        let row = &values[i * n..(i + 1) * n];
        let m = row.iter().map(|&v| temp * v).fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|&v| (temp * v - m).exp()).collect();
        let sum: f64 = exps.iter().sum();
        for j in 0..n {
            out[i * n + j] = exps[j] / sum;
        }
    }
    out
}

fn col_softmax_f64(values: &[f64], n: usize, temp: f64) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for j in 0..n {
        let m = (0..n)
            .map(|i| temp * values[i * n + j])
            .fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = (0..n).map(|i| (temp * values[i * n + j] - m).exp()).collect();
        let sum: f64 = exps.iter().sum();
        for i in 0..n {
            out[i * n + j] = exps[i] / sum;
        }
    }
    out
}

/// Degenerate prior that keeps the printed diagonal numerator: every entry
/// of row `i` carries the diagonal's share of the normalizer. Provided for
/// comparison only; rows are not probability vectors under this reading.
fn literal_priors_f64(values: &[f64], n: usize, temp: f64) -> (Vec<f64>, Vec<f64>) {
    let col = col_softmax_f64(values, n, temp);
    let row = row_softmax_f64(values, n, temp);
    let mut v2t = vec![0.0; n * n];
    let mut t2v = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            v2t[i * n + j] = col[i * n + i];
            t2v[i * n + j] = row[i * n + i];
        }
    }
    (v2t, t2v)
}

fn priors_f64(values: &[f64], n: usize, temp: f64, literal: bool) -> (Vec<f64>, Vec<f64>) {
    if literal {
        literal_priors_f64(values, n, temp)
    } else {
        // video-to-text prior: normalized across videos (column-wise);
        // text-to-video prior: normalized across texts (row-wise).
        (
            col_softmax_f64(values, n, temp),
            row_softmax_f64(values, n, temp),
        )
    }
}

/// The two dual-softmax prior matrices for a similarity matrix:
/// `(video-to-text, text-to-video)`. Each is the softmax of `temp * S`
/// across the opposite retrieval axis: columns for video-to-text, rows for
/// text-to-video.
pub fn dsl_priors(s: &SimilarityMatrix, temp: f64) -> Result<(Matrix, Matrix)> {
    if s.n() == 0 {
        return Err(CoreError::EmptyInput { op: "dsl_priors" });
    }
    if !(temp > 0.0) {
        return Err(CoreError::InvalidConfig {
            detail: format!("dsl temperature must be positive, got {temp}"),
        });
    }
    let n = s.n();
    let (v2t, t2v) = priors_f64(s.matrix().as_slice(), n, temp, false);
    Ok((Matrix::new(n, n, v2t)?, Matrix::new(n, n, t2v)?))
}

/// Generic row softmax used when the prior itself must be differentiable.
fn row_softmax_generic<R: Real>(values: &[R], n: usize, temp: f64) -> Vec<R> {
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        let row = &values[i * n..(i + 1) * n];
        let m = row
            .iter()
            .map(|v| temp * v.value())
            .fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<R> = row.iter().map(|&v| (v * temp - m).exp()).collect();
        let sum = exps.iter().copied().reduce(|a, b| a + b).expect("n >= 1");
        out.extend(exps.into_iter().map(|e| e / sum));
    }
    out
}

fn col_softmax_generic<R: Real>(values: &[R], n: usize, temp: f64) -> Vec<R> {
    let mut out: Vec<Option<R>> = vec![None; n * n];
    for j in 0..n {
        let m = (0..n)
            .map(|i| temp * values[i * n + j].value())
            .fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<R> = (0..n).map(|i| (values[i * n + j] * temp - m).exp()).collect();
        let sum = exps.iter().copied().reduce(|a, b| a + b).expect("n >= 1");
        for i in 0..n {
            out[i * n + j] = Some(exps[i] / sum);
        }
    }
    out.into_iter().map(|v| v.expect("filled")).collect()
}

/// Externally supplied prior pair `(video-to-text, text-to-video)`, used by
/// the finite-difference oracle to hold detached priors at their base-point
/// values while parameters are perturbed.
pub type PriorPair = (Vec<f64>, Vec<f64>);

/// Dual-softmax pair losses on generic similarities.
fn dsl_ce_generic<R: Real>(
    sims: &[R],
    n: usize,
    scale: Scale<R>,
    cfg: &LossConfig,
    frozen: Option<&PriorPair>,
) -> (R, R) {
    if cfg.dsl_backprop_prior && !cfg.dsl_literal_numerator {
        let pr_v2t = col_softmax_generic(sims, n, cfg.temperature);
        let pr_t2v = row_softmax_generic(sims, n, cfg.temperature);
        let z_v2t: Vec<R> = sims
            .iter()
            .zip(&pr_v2t)
            .map(|(&s, &p)| scale.apply(s * p))
            .collect();
        let z_t2v: Vec<R> = sims
            .iter()
            .zip(&pr_t2v)
            .map(|(&s, &p)| scale.apply(s * p))
            .collect();
        (
            neg_mean_diag_log_softmax_rows(&z_v2t, n),
            neg_mean_diag_log_softmax_cols(&z_t2v, n),
        )
    } else {
        // Priors detached: computed from primal values (or taken verbatim
        // from the caller) and applied as constants.
        let computed;
        let (pr_v2t, pr_t2v) = match frozen {
            Some((v2t, t2v)) => (v2t, t2v),
            None => {
                let values: Vec<f64> = sims.iter().map(|s| s.value()).collect();
                computed = priors_f64(&values, n, cfg.temperature, cfg.dsl_literal_numerator);
                (&computed.0, &computed.1)
            }
        };
        let z_v2t: Vec<R> = sims
            .iter()
            .zip(pr_v2t)
            .map(|(&s, &p)| scale.apply(s * p))
            .collect();
        let z_t2v: Vec<R> = sims
            .iter()
            .zip(pr_t2v)
            .map(|(&s, &p)| scale.apply(s * p))
            .collect();
        (
            neg_mean_diag_log_softmax_rows(&z_v2t, n),
            neg_mean_diag_log_softmax_cols(&z_t2v, n),
        )
    }
}

/// Dual-softmax loss on a prebuilt similarity matrix, both directions.
pub fn dsl_loss(s: &SimilarityMatrix, cfg: &LossConfig) -> Result<(f64, f64)> {
    if s.n() == 0 {
        return Err(CoreError::EmptyInput { op: "dsl_loss" });
    }
    if !(cfg.temperature > 0.0) {
        return Err(CoreError::InvalidConfig {
            detail: format!("dsl temperature must be positive, got {}", cfg.temperature),
        });
    }
    Ok(dsl_ce_generic(
        s.matrix().as_slice(),
        s.n(),
        Scale::Fixed(cfg.logit_scale()),
        cfg,
        None,
    ))
}

/// Per-task and total loss values.
#[derive(Debug, Clone)]
pub struct LossValues {
    /// `(task, video-to-text, text-to-video)` in task order.
    pub per_task: Vec<(TaskId, f64, f64)>,
    pub total: f64,
}

impl LossValues {
    pub fn task(&self, task: TaskId) -> Option<(f64, f64)> {
        self.per_task
            .iter()
            .find(|(t, _, _)| *t == task)
            .map(|&(_, a, b)| (a, b))
    }
}

/// Sum the directional losses of several task similarity matrices.
pub fn total_loss(mats: &[(TaskId, SimilarityMatrix)], cfg: &LossConfig) -> Result<LossValues> {
    if mats.is_empty() {
        return Err(CoreError::EmptyInput { op: "total_loss" });
    }
    let n = mats[0].1.n();
    if mats.iter().any(|(_, m)| m.n() != n) {
        return Err(CoreError::BatchMismatch {
            detail: "task similarity matrices differ in size".into(),
        });
    }
    let scale = cfg.logit_scale();
    let mut per_task = Vec::with_capacity(mats.len());
    let mut total = 0.0;
    for (task, s) in mats {
        let (v2t, t2v) = if cfg.dsl_enabled {
            dsl_loss(s, cfg)?
        } else {
            symmetric_ce(s, scale)?
        };
        per_task.push((*task, v2t, t2v));
        total += cfg.task_weights.get(*task) * (v2t + t2v);
    }
    Ok(LossValues { per_task, total })
}

/// Loss values plus the exact gradient of the total with respect to every
/// model parameter, in canonical flat order.
#[derive(Debug)]
pub struct LossReport {
    pub values: LossValues,
    pub gradients: Vec<f64>,
    pub index: ParamIndex,
    pub fallbacks: usize,
}

/// Detached priors per task, frozen at a base point.
pub type TaskPriors = Vec<(TaskId, PriorPair)>;

fn batch_loss_generic<R: Real>(
    cfg: &ModelConfig,
    params: &ModelParams<R>,
    batch: &BatchData<R>,
    lcfg: &LossConfig,
    frozen: Option<&TaskPriors>,
) -> Result<(Vec<(TaskId, R, R)>, R, usize)> {
    let n = batch.videos.len();
    if n == 0 {
        return Err(CoreError::EmptyInput { op: "batch_loss" });
    }
    let outputs = forward_batch(cfg, params, batch)?;
    let scale = if lcfg.logit_scale_trainable {
        Scale::Learned(params.log_logit_scale.exp().clamp_max(LOGIT_SCALE_MAX))
    } else {
        Scale::Fixed(params.log_logit_scale.value().exp().min(LOGIT_SCALE_MAX))
    };
    let mut per_task = Vec::with_capacity(outputs.texts.len());
    let mut total: Option<R> = None;
    for (task, encodings) in &outputs.texts {
        let mut sims = Vec::with_capacity(n * n);
        for video in &outputs.videos {
            let repr = video.repr(*task).ok_or_else(|| CoreError::ModeMismatch {
                mode: cfg.mode.name().into(),
                detail: format!("no visual representation for task {task}"),
            })?;
            for enc in encodings {
                sims.push(cosine_slice(repr, enc)?);
            }
        }
        let (v2t, t2v) = if lcfg.dsl_enabled {
            if !(lcfg.temperature > 0.0) {
                return Err(CoreError::InvalidConfig {
                    detail: format!("dsl temperature must be positive, got {}", lcfg.temperature),
                });
            }
            let task_frozen = frozen.and_then(|f| {
                f.iter().find(|(t, _)| t == task).map(|(_, pair)| pair)
            });
            dsl_ce_generic(&sims, n, scale, lcfg, task_frozen)
        } else {
            symmetric_ce_generic(&sims, n, scale)
        };
        per_task.push((*task, v2t, t2v));
        let weighted = (v2t + t2v) * *lcfg.task_weights.get(*task);
        total = Some(match total {
            None => weighted,
            Some(t) => t + weighted,
        });
    }
    Ok((per_task, total.expect("at least one task"), outputs.fallbacks))
}

/// Plain loss evaluation over a batch (no gradients). This is the path the
/// finite-difference oracle perturbs.
pub fn batch_loss_values(
    cfg: &ModelConfig,
    params: &ModelParams<f64>,
    batch: &BatchData<f64>,
    lcfg: &LossConfig,
) -> Result<(LossValues, usize)> {
    let (per_task, total, fallbacks) = batch_loss_generic(cfg, params, batch, lcfg, None)?;
    Ok((
        LossValues {
            per_task: per_task.into_iter().collect(),
            total,
        },
        fallbacks,
    ))
}

/// Loss evaluation with detached priors pinned to externally supplied
/// values. The finite-difference oracle uses this so its stencil sees the
/// same constants the backward pass treated as data.
pub fn batch_loss_values_frozen(
    cfg: &ModelConfig,
    params: &ModelParams<f64>,
    batch: &BatchData<f64>,
    lcfg: &LossConfig,
    frozen: &TaskPriors,
) -> Result<(LossValues, usize)> {
    let (per_task, total, fallbacks) = batch_loss_generic(cfg, params, batch, lcfg, Some(frozen))?;
    Ok((
        LossValues {
            per_task: per_task.into_iter().collect(),
            total,
        },
        fallbacks,
    ))
}

/// The detached priors a batch would use at the current parameters.
pub fn batch_priors(
    cfg: &ModelConfig,
    params: &ModelParams<f64>,
    batch: &BatchData<f64>,
    lcfg: &LossConfig,
) -> Result<TaskPriors> {
    let n = batch.videos.len();
    let outputs = forward_batch(cfg, params, batch)?;
    let mut out = Vec::new();
    for (task, encodings) in &outputs.texts {
        let mut sims = Vec::with_capacity(n * n);
        for video in &outputs.videos {
            let repr = video.repr(*task).ok_or_else(|| CoreError::ModeMismatch {
                mode: cfg.mode.name().into(),
                detail: format!("no visual representation for task {task}"),
            })?;
            for enc in encodings {
                sims.push(cosine_slice(repr, enc)?);
            }
        }
        let pair = priors_f64(&sims, n, lcfg.temperature, lcfg.dsl_literal_numerator);
        out.push((*task, pair));
    }
    Ok(out)
}

/// Full loss with reverse-mode gradients for every parameter.
pub fn batch_loss_report(
    cfg: &ModelConfig,
    params: &ModelParams<f64>,
    batch: &BatchData<f64>,
    lcfg: &LossConfig,
) -> Result<LossReport> {
    let tape = Tape::new();
    let lifted_params = params.lift(&tape);
    let lifted_batch = batch.lift(&tape);
    let (per_task, total, fallbacks) =
        batch_loss_generic(cfg, &lifted_params, &lifted_batch, lcfg, None)?;
    let grads = tape.gradients(total);
    let mut flat = Vec::with_capacity(params.n_params());
    lifted_params.for_each(&mut |v| flat.push(grads.wrt(v)));
    Ok(LossReport {
        values: LossValues {
            per_task: per_task
                .into_iter()
                .map(|(t, a, b)| (t, a.val(), b.val()))
                .collect(),
            total: total.val(),
        },
        gradients: flat,
        index: param_index(params, lcfg.logit_scale_trainable),
        fallbacks,
    })
}
