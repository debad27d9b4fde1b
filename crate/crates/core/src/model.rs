//! The full trainable model: experts, gates, text encoder and the logit
//! scale, with one canonical parameter order shared by initialization,
//! flattening, tape lifting, optimizer state and persistence.

use crate::aggregation::{AggregatorKind, AggregatorParams, SeParams, SelfAttnParams};
use crate::dataset::Dataset;
use crate::error::{CoreError, Result};
use crate::kernels::{init_ffn, FfnParams, FfnSpec};
use crate::moe::{forward_video, ExpertParams, GateParams, GatingMode, VideoReprSet};
use crate::rng::Rng;
use crate::scalar::Real;
use crate::tape::{Tape, Var};
use crate::task::{PerTask, TaskId};
use crate::text::{encode_for_task, CaptionView, SentenceStrategy, TextEncoderParams};

/// Architecture variants used in the ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelMode {
    /// Fusion expert only, full captions, no gate.
    SingleTask,
    /// Three experts and tasks, but every task reads the full caption;
    /// no gate.
    Mtac,
    /// Three experts, task-specific captions, one gate per task.
    MultiGate,
    /// Three experts, task-specific captions, single gate on fusion.
    Camoe,
}

impl ModelMode {
    pub fn name(self) -> &'static str {
        match self {
            ModelMode::SingleTask => "single-task",
            ModelMode::Mtac => "mtac",
            ModelMode::MultiGate => "multi-gate",
            ModelMode::Camoe => "camoe",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "single-task" => Some(ModelMode::SingleTask),
            "mtac" => Some(ModelMode::Mtac),
            "multi-gate" => Some(ModelMode::MultiGate),
            "camoe" => Some(ModelMode::Camoe),
            _ => None,
        }
    }

    pub fn gating(self) -> GatingMode {
        match self {
            ModelMode::SingleTask | ModelMode::Mtac => GatingMode::NoGate,
            ModelMode::MultiGate => GatingMode::MultiGate,
            ModelMode::Camoe => GatingMode::SingleGate,
        }
    }

    pub fn tasks(self) -> &'static [TaskId] {
        match self {
            ModelMode::SingleTask => &[TaskId::Fusion],
            _ => &TaskId::ALL,
        }
    }

    /// Whether the text side ignores keyword masks and always encodes the
    /// full caption.
    pub fn full_captions_everywhere(self) -> bool {
        matches!(self, ModelMode::SingleTask | ModelMode::Mtac)
    }

    fn n_experts(self) -> usize {
        match self {
            ModelMode::SingleTask => 1,
            _ => 3,
        }
    }

    fn n_gates(self) -> usize {
        match self {
            ModelMode::SingleTask | ModelMode::Mtac => 0,
            ModelMode::Camoe => 1,
            ModelMode::MultiGate => 3,
        }
    }
}

/// Shape and wiring of a model. Defaults follow the best-performing layout:
/// squeeze-excitation for the gate and fusion expert, self-attention for the
/// entity and action experts, and the masking strategy on the text side.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// Shared embedding dimension d.
    pub dim: usize,
    /// Raw token embedding dimension.
    pub token_dim: usize,
    /// Position-table capacity for self-attention aggregators.
    pub max_frames: usize,
    /// Key/query dimension for self-attention.
    pub attn_dim: usize,
    pub mode: ModelMode,
    pub expert_aggregators: PerTask<AggregatorKind>,
    pub gate_aggregator: AggregatorKind,
    pub strategy: SentenceStrategy,
}

impl ModelConfig {
    pub fn new(dim: usize, token_dim: usize, max_frames: usize) -> Self {
        ModelConfig {
            dim,
            token_dim,
            max_frames,
            attn_dim: dim,
            mode: ModelMode::Camoe,
            expert_aggregators: PerTask {
                fusion: AggregatorKind::SeAttention,
                entity: AggregatorKind::SelfAttention,
                action: AggregatorKind::SelfAttention,
            },
            gate_aggregator: AggregatorKind::SeAttention,
            strategy: SentenceStrategy::Muw,
        }
    }

    pub fn with_mode(mut self, mode: ModelMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.token_dim == 0 || self.max_frames == 0 || self.attn_dim == 0 {
            return Err(CoreError::InvalidConfig {
                detail: "all model dimensions must be positive".into(),
            });
        }
        Ok(())
    }

    fn se_hidden(&self) -> usize {
        (self.dim / 4).max(1)
    }
}

/// Every trainable weight, generic over the scalar type so the same
/// structure holds plain values or tape variables.
#[derive(Debug, Clone)]
pub struct ModelParams<R> {
    pub experts: Vec<ExpertParams<R>>,
    pub gates: Vec<GateParams<R>>,
    pub text: TextEncoderParams<R>,
    /// Logit scale stored in log space; exponentiated and capped at 100
    /// before use.
    pub log_logit_scale: R,
}

/// Hard cap on the exponentiated logit scale.
pub const LOGIT_SCALE_MAX: f64 = 100.0;

/// Initial log logit scale, ln(1/0.07).
pub fn default_log_logit_scale() -> f64 {
    (1.0 / 0.07f64).ln()
}

fn init_aggregator(rng: &mut Rng, cfg: &ModelConfig, kind: AggregatorKind) -> Result<AggregatorParams<f64>> {
    Ok(match kind {
        AggregatorKind::MeanPool => AggregatorParams::MeanPool,
        AggregatorKind::SeAttention => AggregatorParams::Se(SeParams {
            bottleneck: init_ffn(rng, &FfnSpec::bottleneck(cfg.dim, cfg.se_hidden()))?,
        }),
        AggregatorKind::SelfAttention => AggregatorParams::SelfAttn(SelfAttnParams {
            key: init_ffn(rng, &FfnSpec::linear(cfg.dim, cfg.attn_dim))?,
            query: init_ffn(rng, &FfnSpec::linear(cfg.dim, cfg.attn_dim))?,
            value: init_ffn(rng, &FfnSpec::linear(cfg.dim, cfg.dim))?,
            output: init_ffn(rng, &FfnSpec::linear(cfg.dim, cfg.dim))?,
            pos: vec![0.0; cfg.max_frames * cfg.dim],
            max_frames: cfg.max_frames,
            dim: cfg.dim,
            attn_dim: cfg.attn_dim,
        }),
    })
}

/// Build a model with reproducible seeded weights. Parameter draw order is
/// fixed: experts (fusion, entity, action), gates, text encoder, logit scale.
pub fn init_model(cfg: &ModelConfig, seed: u64) -> Result<ModelParams<f64>> {
    cfg.validate()?;
    let mut rng = Rng::new(seed);
    let tasks: Vec<TaskId> = TaskId::ALL[..cfg.mode.n_experts()].to_vec();
    let mut experts = Vec::with_capacity(tasks.len());
    for &task in &tasks {
        let kind = *cfg.expert_aggregators.get(task);
        experts.push(ExpertParams {
            task,
            aggregator: init_aggregator(&mut rng, cfg, kind)?,
            projection: init_ffn(&mut rng, &FfnSpec::linear(cfg.dim, cfg.dim))?,
        });
    }
    let mut gates = Vec::with_capacity(cfg.mode.n_gates());
    for _ in 0..cfg.mode.n_gates() {
        let bound = 1.0 / (cfg.dim as f64).sqrt();
        gates.push(GateParams {
            aggregator: init_aggregator(&mut rng, cfg, cfg.gate_aggregator)?,
            projection: (0..cfg.dim * 3).map(|_| rng.uniform(-bound, bound)).collect(),
            dim: cfg.dim,
            n_experts: 3,
        });
    }
    let bound = 1.0 / (cfg.token_dim as f64).sqrt();
    let text = TextEncoderParams {
        projection: init_ffn(&mut rng, &FfnSpec::linear(cfg.token_dim, cfg.dim))?,
        mask_token: (0..cfg.token_dim).map(|_| rng.uniform(-bound, bound)).collect(),
        strategy: cfg.strategy,
    };
    Ok(ModelParams {
        experts,
        gates,
        text,
        log_logit_scale: default_log_logit_scale(),
    })
}

impl<R: Copy> ModelParams<R> {
    /// Rebuild the structure with every scalar transformed. Traversal order
    /// is the canonical parameter order.
    pub fn map<S>(&self, f: &mut impl FnMut(R) -> S) -> ModelParams<S> {
        ModelParams {
            experts: self.experts.iter().map(|e| e.map(f)).collect(),
            gates: self.gates.iter().map(|g| g.map(f)).collect(),
            text: self.text.map(f),
            log_logit_scale: f(self.log_logit_scale),
        }
    }

    pub fn for_each(&self, f: &mut impl FnMut(R)) {
        self.map(&mut |v| {
            f(v);
        });
    }

    pub fn n_params(&self) -> usize {
        let mut n = 0;
        self.for_each(&mut |_| n += 1);
        n
    }
}

impl ModelParams<f64> {
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.for_each(&mut |v| out.push(v));
        out
    }

    /// Rebuild from a flat vector in canonical order.
    pub fn from_flat(template: &ModelParams<f64>, flat: &[f64]) -> ModelParams<f64> {
        let mut it = flat.iter().copied();
        let rebuilt = template.map(&mut |_| it.next().expect("flat vector too short"));
        assert!(it.next().is_none(), "flat vector too long");
        rebuilt
    }

    /// Create tape variables for every parameter, in canonical order.
    pub fn lift<'t>(&self, tape: &'t Tape) -> ModelParams<Var<'t>> {
        self.map(&mut |v| tape.leaf(v))
    }
}

/// Learning-rate tier of a parameter group: the text encoder runs at the
/// low "encoder" rate, everything else at the "head" rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LrTier {
    Encoder,
    Head,
}

#[derive(Debug, Clone)]
pub struct ParamGroup {
    pub name: String,
    pub offset: usize,
    pub len: usize,
    pub tier: LrTier,
    pub trainable: bool,
}

/// Names and offsets of every parameter group in canonical order.
#[derive(Debug, Clone)]
pub struct ParamIndex {
    pub groups: Vec<ParamGroup>,
    pub n_params: usize,
}

impl ParamIndex {
    pub fn group_of(&self, flat_idx: usize) -> &ParamGroup {
        self.groups
            .iter()
            .find(|g| flat_idx >= g.offset && flat_idx < g.offset + g.len)
            .expect("index inside some group")
    }

    pub fn describe(&self, flat_idx: usize) -> String {
        let g = self.group_of(flat_idx);
        format!("{}[{}]", g.name, flat_idx - g.offset)
    }

    pub fn tier_of(&self, flat_idx: usize) -> LrTier {
        self.group_of(flat_idx).tier
    }
}

fn ffn_groups(out: &mut Vec<(String, usize, LrTier)>, prefix: &str, ffn: &FfnParams<f64>, tier: LrTier) {
    for (i, layer) in ffn.layers.iter().enumerate() {
        out.push((format!("{prefix}.layer{i}.weight"), layer.weight.len(), tier));
        out.push((format!("{prefix}.layer{i}.bias"), layer.bias.len(), tier));
    }
}

fn aggregator_groups(
    out: &mut Vec<(String, usize, LrTier)>,
    prefix: &str,
    agg: &AggregatorParams<f64>,
    tier: LrTier,
) {
    match agg {
        AggregatorParams::MeanPool => {}
        AggregatorParams::Se(p) => ffn_groups(out, &format!("{prefix}.se"), &p.bottleneck, tier),
        AggregatorParams::SelfAttn(p) => {
            ffn_groups(out, &format!("{prefix}.key"), &p.key, tier);
            ffn_groups(out, &format!("{prefix}.query"), &p.query, tier);
            ffn_groups(out, &format!("{prefix}.value"), &p.value, tier);
            ffn_groups(out, &format!("{prefix}.output"), &p.output, tier);
            out.push((format!("{prefix}.pos"), p.pos.len(), tier));
        }
    }
}

/// Build the parameter index for a model. Matches the canonical traversal of
/// [`ModelParams::map`]; the round-trip tests keep the two in sync.
pub fn param_index(params: &ModelParams<f64>, logit_scale_trainable: bool) -> ParamIndex {
    let mut spec: Vec<(String, usize, LrTier)> = Vec::new();
    for expert in &params.experts {
        let prefix = format!("expert.{}", expert.task.name());
        aggregator_groups(&mut spec, &format!("{prefix}.agg"), &expert.aggregator, LrTier::Head);
        ffn_groups(&mut spec, &format!("{prefix}.proj"), &expert.projection, LrTier::Head);
    }
    for (i, gate) in params.gates.iter().enumerate() {
        let prefix = format!("gate.{i}");
        aggregator_groups(&mut spec, &format!("{prefix}.agg"), &gate.aggregator, LrTier::Head);
        spec.push((format!("{prefix}.proj"), gate.projection.len(), LrTier::Head));
    }
    ffn_groups(&mut spec, "text.proj", &params.text.projection, LrTier::Encoder);
    spec.push(("text.mask_token".into(), params.text.mask_token.len(), LrTier::Encoder));
    spec.push(("logit_scale".into(), 1, LrTier::Head));

    let mut groups = Vec::with_capacity(spec.len());
    let mut offset = 0;
    for (name, len, tier) in spec {
        let trainable = name != "logit_scale" || logit_scale_trainable;
        groups.push(ParamGroup {
            name,
            offset,
            len,
            tier,
            trainable,
        });
        offset += len;
    }
    debug_assert_eq!(offset, params.n_params(), "index must cover every parameter");
    ParamIndex {
        groups,
        n_params: offset,
    }
}

/// One batch of paired videos and captions in scalar type `R`.
#[derive(Debug, Clone)]
pub struct BatchData<R> {
    pub videos: Vec<FrameBlock<R>>,
    pub captions: Vec<CaptionBlock<R>>,
}

#[derive(Debug, Clone)]
pub struct FrameBlock<R> {
    pub data: Vec<R>,
    pub frames: usize,
    pub dim: usize,
}

#[derive(Debug, Clone)]
pub struct CaptionBlock<R> {
    pub caption_id: String,
    pub data: Vec<R>,
    pub tokens: usize,
    pub dim: usize,
    pub entity_mask: Vec<bool>,
    pub action_mask: Vec<bool>,
}

impl<R> CaptionBlock<R> {
    pub fn view(&self) -> CaptionView<'_, R> {
        CaptionView {
            caption_id: &self.caption_id,
            data: &self.data,
            tokens: self.tokens,
            dim: self.dim,
            entity_mask: &self.entity_mask,
            action_mask: &self.action_mask,
        }
    }
}

impl BatchData<f64> {
    /// Assemble a batch from dataset pairs at the given indices.
    pub fn from_dataset(data: &Dataset, indices: &[usize]) -> Self {
        let videos = indices
            .iter()
            .map(|&i| {
                let frames = &data.videos[i].frames;
                FrameBlock {
                    data: frames.as_slice().to_vec(),
                    frames: frames.rows(),
                    dim: frames.cols(),
                }
            })
            .collect();
        let captions = indices
            .iter()
            .map(|&i| {
                let c = &data.captions[i];
                CaptionBlock {
                    caption_id: c.caption_id.clone(),
                    data: c.tokens.as_slice().to_vec(),
                    tokens: c.tokens.rows(),
                    dim: c.tokens.cols(),
                    entity_mask: c.entity_mask.clone(),
                    action_mask: c.action_mask.clone(),
                }
            })
            .collect();
        BatchData { videos, captions }
    }

    /// Recreate the batch with every scalar registered on the tape, so
    /// gradients with respect to inputs are available too.
    pub fn lift<'t>(&self, tape: &'t Tape) -> BatchData<Var<'t>> {
        BatchData {
            videos: self
                .videos
                .iter()
                .map(|v| FrameBlock {
                    data: v.data.iter().map(|&x| tape.leaf(x)).collect(),
                    frames: v.frames,
                    dim: v.dim,
                })
                .collect(),
            captions: self
                .captions
                .iter()
                .map(|c| CaptionBlock {
                    caption_id: c.caption_id.clone(),
                    data: c.data.iter().map(|&x| tape.leaf(x)).collect(),
                    tokens: c.tokens,
                    dim: c.dim,
                    entity_mask: c.entity_mask.clone(),
                    action_mask: c.action_mask.clone(),
                })
                .collect(),
        }
    }
}

/// Everything the loss needs from one forward pass.
#[derive(Debug)]
pub struct ForwardOutputs<R> {
    pub videos: Vec<VideoReprSet<R>>,
    /// Text encodings per active task, in task order.
    pub texts: Vec<(TaskId, Vec<Vec<R>>)>,
    /// Number of captions that fell back to full-sentence encoding because a
    /// task mask was empty.
    pub fallbacks: usize,
}

/// Run the visual and semantic sides over a batch.
pub fn forward_batch<R: Real>(
    cfg: &ModelConfig,
    params: &ModelParams<R>,
    batch: &BatchData<R>,
) -> Result<ForwardOutputs<R>> {
    if batch.videos.len() != batch.captions.len() {
        return Err(CoreError::BatchMismatch {
            detail: format!(
                "{} videos vs {} captions",
                batch.videos.len(),
                batch.captions.len()
            ),
        });
    }
    let gating = cfg.mode.gating();
    let mut videos = Vec::with_capacity(batch.videos.len());
    for v in &batch.videos {
        videos.push(forward_video(
            &params.experts,
            &params.gates,
            gating,
            &v.data,
            v.frames,
            v.dim,
        )?);
    }
    let mut texts = Vec::new();
    let mut fallbacks = 0;
    for &task in cfg.mode.tasks() {
        let effective = if cfg.mode.full_captions_everywhere() {
            TaskId::Fusion
        } else {
            task
        };
        let mut encs = Vec::with_capacity(batch.captions.len());
        for c in &batch.captions {
            let (enc, fell_back) = encode_for_task(&params.text, &c.view(), effective)?;
            if fell_back {
                fallbacks += 1;
            }
            encs.push(enc);
        }
        texts.push((task, encs));
    }
    Ok(ForwardOutputs {
        videos,
        texts,
        fallbacks,
    })
}
