//! Gradient-descent training over the full model with per-epoch train and
//! held-out logging.
//!
//! Deterministic by construction: a fixed seed fixes the holdout split, the
//! per-epoch batch order and the initial weights, so the whole log is
//! reproducible bit for bit.

use crate::dataset::Dataset;
use crate::error::{CoreError, Result};
use crate::gradcheck;
use crate::loss::{batch_loss_report, batch_loss_values, LossConfig};
use crate::model::{param_index, BatchData, LrTier, ModelConfig, ModelMode, ModelParams};
use crate::retrieval::{build_similarity, compute_metrics, Direction};
use crate::rng::Rng;
use crate::task::TaskId;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Optimizer {
    Sgd,
    Adam,
}

impl Optimizer {
    pub fn name(self) -> &'static str {
        match self {
            Optimizer::Sgd => "sgd",
            Optimizer::Adam => "adam",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "sgd" => Some(Optimizer::Sgd),
            "adam" => Some(Optimizer::Adam),
            _ => None,
        }
    }
}

/// Optimization schedule. Learning rates are two-tier: the text-encoder
/// parameters move at `lr_encoder`, everything else at `lr_heads`.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub lr_heads: f64,
    pub lr_encoder: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: Optimizer,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Linear warmup steps; `None` means 10% of the total step count.
    pub warmup_steps: Option<usize>,
    /// Fraction of pairs held out for per-epoch evaluation; 0 disables the
    /// holdout.
    pub holdout_fraction: f64,
    /// Verify the applied gradient against finite differences every N steps.
    pub gradcheck_every: Option<usize>,
    pub gradcheck_h: f64,
    pub gradcheck_tol: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr_heads: 1e-4,
            lr_encoder: 1e-7,
            epochs: 50,
            batch_size: 16,
            seed: 0,
            optimizer: Optimizer::Adam,
            beta1: 0.9,
            beta2: 0.98,
            adam_eps: 1e-8,
            warmup_steps: None,
            holdout_fraction: 0.25,
            gradcheck_every: None,
            gradcheck_h: gradcheck::DEFAULT_H,
            gradcheck_tol: gradcheck::DEFAULT_TOL,
        }
    }
}

/// One epoch of the training log. Losses are per-pair means; the holdout is
/// evaluated in batches of the training batch size so the two loss columns
/// are comparable.
#[derive(Debug, Clone)]
pub struct EpochLog {
    pub epoch: usize,
    pub steps_done: usize,
    pub train_loss: f64,
    pub train_loss_fusion: f64,
    pub holdout_loss: Option<f64>,
    pub holdout_loss_fusion: Option<f64>,
    pub train_r1_t2v: f64,
    pub train_r1_v2t: f64,
    pub holdout_r1_t2v: Option<f64>,
    pub holdout_r1_v2t: Option<f64>,
    pub gate_mean: Option<Vec<f64>>,
    pub fallbacks: usize,
}

#[derive(Debug, Clone)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    pub total_steps: usize,
    pub train_indices: Vec<usize>,
    pub holdout_indices: Vec<usize>,
}

impl TrainLog {
    pub fn final_epoch(&self) -> Option<&EpochLog> {
        self.epochs.last()
    }
}

/// Deterministic holdout split.
fn split_indices(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = Rng::from_seed_and_stream(seed, u64::MAX);
    rng.shuffle(&mut order);
    let n_holdout = ((fraction * n as f64).round() as usize).min(n.saturating_sub(1));
    let holdout: Vec<usize> = order[..n_holdout].to_vec();
    let train: Vec<usize> = order[n_holdout..].to_vec();
    (train, holdout)
}

struct OptState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

#[allow(clippy::too_many_arguments)]
fn apply_update(
    flat: &mut [f64],
    grads: &[f64],
    tiers: &[LrTier],
    trainable: &[bool],
    cfg: &TrainConfig,
    state: &mut OptState,
    warmup_factor: f64,
) {
    state.t += 1;
    let bias1 = 1.0 - cfg.beta1.powi(state.t as i32);
    let bias2 = 1.0 - cfg.beta2.powi(state.t as i32);
    for i in 0..flat.len() {
        if !trainable[i] {
            continue;
        }
        let lr = warmup_factor
            * match tiers[i] {
                LrTier::Encoder => cfg.lr_encoder,
                LrTier::Head => cfg.lr_heads,
            };
        match cfg.optimizer {
            Optimizer::Sgd => {
                flat[i] -= lr * grads[i];
            }
            Optimizer::Adam => {
                state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grads[i];
                state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grads[i] * grads[i];
                let m_hat = state.m[i] / bias1;
                let v_hat = state.v[i] / bias2;
                flat[i] -= lr * m_hat / (v_hat.sqrt() + cfg.adam_eps);
            }
        }
    }
}

/// Mean total and fusion losses over a set of pairs, evaluated in batches
/// of `batch_size` without shuffling.
fn eval_losses(
    model_cfg: &ModelConfig,
    params: &ModelParams<f64>,
    data: &Dataset,
    indices: &[usize],
    batch_size: usize,
    lcfg: &LossConfig,
) -> Result<(f64, f64, usize)> {
    let mut total_weighted = 0.0;
    let mut fusion_weighted = 0.0;
    let mut fallbacks = 0;
    let mut n = 0usize;
    for chunk in indices.chunks(batch_size) {
        let batch = BatchData::from_dataset(data, chunk);
        let (values, fb) = batch_loss_values(model_cfg, params, &batch, lcfg)?;
        let (fv2t, ft2v) = values.task(TaskId::Fusion).expect("fusion always present");
        total_weighted += values.total * chunk.len() as f64;
        fusion_weighted += (fv2t + ft2v) * chunk.len() as f64;
        fallbacks += fb;
        n += chunk.len();
    }
    Ok((
        total_weighted / n as f64,
        fusion_weighted / n as f64,
        fallbacks,
    ))
}

/// Fusion-task R@1 for both directions over a set of pairs.
fn eval_r1(
    model_cfg: &ModelConfig,
    params: &ModelParams<f64>,
    data: &Dataset,
    indices: &[usize],
) -> Result<(f64, f64, Option<Vec<f64>>)> {
    let batch = BatchData::from_dataset(data, indices);
    let out = crate::model::forward_batch(model_cfg, params, &batch)?;
    let fusion_texts = out
        .texts
        .iter()
        .find(|(t, _)| *t == TaskId::Fusion)
        .map(|(_, e)| e.clone())
        .expect("fusion always present");
    let s = build_similarity(&out.videos, &fusion_texts, TaskId::Fusion)?;
    let t2v = compute_metrics(s.matrix(), Direction::T2V)?;
    let v2t = compute_metrics(s.matrix(), Direction::V2T)?;
    let gate_mean = if out.videos.iter().all(|v| v.gate_weights.is_some()) && !out.videos.is_empty()
    {
        let mut mean = vec![0.0f64; 3];
        for v in &out.videos {
            for (m, w) in mean.iter_mut().zip(v.gate_weights.as_ref().unwrap()) {
                *m += w;
            }
        }
        for m in mean.iter_mut() {
            *m /= out.videos.len() as f64;
        }
        Some(mean)
    } else {
        None
    };
    Ok((t2v.r_at_1, v2t.r_at_1, gate_mean))
}

/// Train a model, returning the updated parameters and the full log.
pub fn train(
    data: &Dataset,
    model_cfg: &ModelConfig,
    init: ModelParams<f64>,
    cfg: &TrainConfig,
    lcfg: &LossConfig,
) -> Result<(ModelParams<f64>, TrainLog)> {
    data.validate()?;
    if data.is_empty() {
        return Err(CoreError::EmptyInput { op: "train" });
    }
    if cfg.batch_size < 2 {
        return Err(CoreError::InvalidConfig {
            detail: "batch size must be at least 2 for a contrastive loss".into(),
        });
    }
    let (train_idx, holdout_idx) = split_indices(data.len(), cfg.holdout_fraction, cfg.seed);
    if cfg.batch_size > train_idx.len() {
        return Err(CoreError::InvalidConfig {
            detail: format!(
                "batch size {} exceeds the {} training pairs",
                cfg.batch_size,
                train_idx.len()
            ),
        });
    }

    let index = param_index(&init, lcfg.logit_scale_trainable);
    let mut tiers = vec![LrTier::Head; index.n_params];
    let mut trainable = vec![true; index.n_params];
    for g in &index.groups {
        for i in g.offset..g.offset + g.len {
            tiers[i] = g.tier;
            trainable[i] = g.trainable;
        }
    }

    let steps_per_epoch = train_idx.len().div_ceil(cfg.batch_size);
    let total_steps = steps_per_epoch * cfg.epochs;
    let warmup = cfg
        .warmup_steps
        .unwrap_or_else(|| (total_steps / 10).max(1));

    let mut params = init;
    let mut flat = params.flatten();
    let mut state = OptState {
        m: vec![0.0; flat.len()],
        v: vec![0.0; flat.len()],
        t: 0,
    };
    let mut log = TrainLog {
        epochs: Vec::with_capacity(cfg.epochs),
        total_steps: 0,
        train_indices: train_idx.clone(),
        holdout_indices: holdout_idx.clone(),
    };

    let mut step = 0usize;
    for epoch in 0..cfg.epochs {
        let mut order = train_idx.clone();
        Rng::from_seed_and_stream(cfg.seed, epoch as u64).shuffle(&mut order);
        let mut epoch_loss = 0.0;
        let mut epoch_fusion = 0.0;
        let mut epoch_pairs = 0usize;
        let mut epoch_fallbacks = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch = BatchData::from_dataset(data, chunk);
            // A non-finite value inside the forward pass is divergence too:
            // report it with step context instead of a bare kernel error.
            let report = match batch_loss_report(model_cfg, &params, &batch, lcfg) {
                Ok(r) => r,
                Err(CoreError::NonFinite { op }) => {
                    return Err(CoreError::Diverged {
                        step,
                        detail: format!("epoch {epoch}: non-finite value in {op}"),
                    });
                }
                Err(e) => return Err(e),
            };
            let total = report.values.total;
            if !total.is_finite() {
                return Err(CoreError::Diverged {
                    step,
                    detail: format!(
                        "epoch {epoch}: non-finite loss {total}; per-task {:?}",
                        report.values.per_task
                    ),
                });
            }
            if let Some(every) = cfg.gradcheck_every {
                if every > 0 && step % every == 0 {
                    let gc = gradcheck::check(model_cfg, &params, &batch, lcfg, cfg.gradcheck_h)?;
                    if !gc.passed(cfg.gradcheck_tol) {
                        return Err(CoreError::GradcheckFailed {
                            step,
                            max_rel_err: gc.max_rel_err,
                            param: gc.worst_param,
                        });
                    }
                }
            }
            let warmup_factor = ((step + 1) as f64 / warmup as f64).min(1.0);
            apply_update(
                &mut flat,
                &report.gradients,
                &tiers,
                &trainable,
                cfg,
                &mut state,
                warmup_factor,
            );
            params = ModelParams::from_flat(&params, &flat);
            let (fv2t, ft2v) = report
                .values
                .task(TaskId::Fusion)
                .expect("fusion always present");
            epoch_loss += total * chunk.len() as f64;
            epoch_fusion += (fv2t + ft2v) * chunk.len() as f64;
            epoch_pairs += chunk.len();
            epoch_fallbacks += report.fallbacks;
            step += 1;
        }

        let (train_r1_t2v, train_r1_v2t, gate_mean) =
            eval_r1(model_cfg, &params, data, &train_idx)?;
        let (holdout_loss, holdout_fusion, holdout_r1) = if holdout_idx.is_empty() {
            (None, None, None)
        } else {
            let (hl, hf, _) = eval_losses(
                model_cfg,
                &params,
                data,
                &holdout_idx,
                cfg.batch_size,
                lcfg,
            )?;
            let (ht2v, hv2t, _) = eval_r1(model_cfg, &params, data, &holdout_idx)?;
            (Some(hl), Some(hf), Some((ht2v, hv2t)))
        };
        log.epochs.push(EpochLog {
            epoch,
            steps_done: step,
            train_loss: epoch_loss / epoch_pairs as f64,
            train_loss_fusion: epoch_fusion / epoch_pairs as f64,
            holdout_loss,
            holdout_loss_fusion: holdout_fusion,
            train_r1_t2v,
            train_r1_v2t,
            holdout_r1_t2v: holdout_r1.map(|r| r.0),
            holdout_r1_v2t: holdout_r1.map(|r| r.1),
            gate_mean,
            fallbacks: epoch_fallbacks,
        });
    }
    log.total_steps = step;
    Ok((params, log))
}

/// Run the same data and seed through several architecture modes.
pub fn mode_ablation(
    data: &Dataset,
    base_cfg: &ModelConfig,
    cfg: &TrainConfig,
    lcfg: &LossConfig,
    modes: &[ModelMode],
) -> Result<Vec<(ModelMode, TrainLog)>> {
    let mut out = Vec::with_capacity(modes.len());
    for &mode in modes {
        let model_cfg = base_cfg.clone().with_mode(mode);
        let init = crate::model::init_model(&model_cfg, cfg.seed)?;
        let (_, log) = train(data, &model_cfg, init, cfg, lcfg)?;
        out.push((mode, log));
    }
    Ok(out)
}
