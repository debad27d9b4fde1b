//! Experts and the gating network on the visual side.
//!
//! Each expert aggregates the frame features with its own scheme and applies
//! a task-specific projection head. A gate scores the experts from the raw
//! frame tensor and mixes their outputs; in the default configuration only
//! the fusion output is gated while entity and action outputs pass through
//! untouched.

use crate::aggregation::{aggregate, AggregatorParams};
use crate::error::{CoreError, Result};
use crate::kernels::{softmax_slice, FfnParams};
use crate::scalar::Real;
use crate::task::TaskId;

/// How expert outputs are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GatingMode {
    /// One gate; only the fusion output is a gated mixture.
    SingleGate,
    /// One gate per task; every output is its own gated mixture.
    MultiGate,
    /// No gate; each task output is its own expert's output.
    NoGate,
}

/// One expert: an aggregation scheme plus an output projection that gives
/// the task its own subspace.
#[derive(Debug, Clone)]
pub struct ExpertParams<R> {
    pub task: TaskId,
    pub aggregator: AggregatorParams<R>,
    pub projection: FfnParams<R>,
}

/// The gating network: an aggregation scheme over the raw frames followed by
/// a `dim x n_experts` projection and a softmax.
#[derive(Debug, Clone)]
pub struct GateParams<R> {
    pub aggregator: AggregatorParams<R>,
    /// Row-major `dim x n_experts`.
    pub projection: Vec<R>,
    pub dim: usize,
    pub n_experts: usize,
}

/// Per-video visual representations, one per task, plus the gate weights
/// when a gate is present.
#[derive(Debug, Clone)]
pub struct VideoReprSet<R> {
    pub fusion: Vec<R>,
    pub entity: Option<Vec<R>>,
    pub action: Option<Vec<R>>,
    pub gate_weights: Option<Vec<R>>,
}

impl<R: Real> VideoReprSet<R> {
    pub fn repr(&self, task: TaskId) -> Option<&Vec<R>> {
        match task {
            TaskId::Fusion => Some(&self.fusion),
            TaskId::Entity => self.entity.as_ref(),
            TaskId::Action => self.action.as_ref(),
        }
    }
}

/// Importance scores over experts: `softmax(Wᵀ · AGG(x))`.
pub fn gate_weights<R: Real>(
    gate: &GateParams<R>,
    frames: &[R],
    c: usize,
    d: usize,
) -> Result<Vec<R>> {
    if d != gate.dim {
        return Err(CoreError::DimensionMismatch {
            op: "gate_weights",
            detail: format!("frames have dim {} but gate expects {}", d, gate.dim),
        });
    }
    let agg = aggregate(&gate.aggregator, frames, c, d)?;
    let mut logits = Vec::with_capacity(gate.n_experts);
    for e in 0..gate.n_experts {
        let mut acc = gate.projection[e] * agg[0];
        for k in 1..d {
            acc = acc + gate.projection[k * gate.n_experts + e] * agg[k];
        }
        logits.push(acc);
    }
    softmax_slice(&logits)
}

/// One expert's representation: projection of its aggregation.
pub fn expert_forward<R: Real>(
    expert: &ExpertParams<R>,
    frames: &[R],
    c: usize,
    d: usize,
) -> Result<Vec<R>> {
    let agg = aggregate(&expert.aggregator, frames, c, d)?;
    expert.projection.apply(&agg)
}

/// Elementwise convex combination of expert outputs.
pub fn mix_experts<R: Real>(weights: &[R], outputs: &[Vec<R>]) -> Vec<R> {
    debug_assert_eq!(weights.len(), outputs.len());
    let d = outputs[0].len();
    let mut out = Vec::with_capacity(d);
    for k in 0..d {
        let mut acc = weights[0] * outputs[0][k];
        for e in 1..outputs.len() {
            acc = acc + weights[e] * outputs[e][k];
        }
        out.push(acc);
    }
    out
}

/// Full visual forward for one video.
///
/// `SingleGate` expects three experts and one gate; `MultiGate` three experts
/// and three gates (indexed by task); `NoGate` accepts one or three experts
/// and no gate.
pub fn forward_video<R: Real>(
    experts: &[ExpertParams<R>],
    gates: &[GateParams<R>],
    mode: GatingMode,
    frames: &[R],
    c: usize,
    d: usize,
) -> Result<VideoReprSet<R>> {
    let mode_err = |detail: String| CoreError::ModeMismatch {
        mode: format!("{mode:?}"),
        detail,
    };
    match mode {
        GatingMode::SingleGate => {
            if experts.len() != 3 || gates.len() != 1 {
                return Err(mode_err(format!(
                    "need 3 experts and 1 gate, have {} and {}",
                    experts.len(),
                    gates.len()
                )));
            }
            let outs: Vec<Vec<R>> = experts
                .iter()
                .map(|e| expert_forward(e, frames, c, d))
                .collect::<Result<_>>()?;
            let weights = gate_weights(&gates[0], frames, c, d)?;
            let fused = mix_experts(&weights, &outs);
            let mut it = outs.into_iter();
            let _fusion_own = it.next();
            Ok(VideoReprSet {
                fusion: fused,
                entity: it.next(),
                action: it.next(),
                gate_weights: Some(weights),
            })
        }
        GatingMode::MultiGate => {
            if experts.len() != 3 || gates.len() != 3 {
                return Err(mode_err(format!(
                    "need 3 experts and 3 gates, have {} and {}",
                    experts.len(),
                    gates.len()
                )));
            }
            let outs: Vec<Vec<R>> = experts
                .iter()
                .map(|e| expert_forward(e, frames, c, d))
                .collect::<Result<_>>()?;
            let mut mixed = Vec::with_capacity(3);
            let mut fusion_gate = None;
            for (i, gate) in gates.iter().enumerate() {
                let weights = gate_weights(gate, frames, c, d)?;
                mixed.push(mix_experts(&weights, &outs));
                if i == 0 {
                    fusion_gate = Some(weights);
                }
            }
            let mut it = mixed.into_iter();
            Ok(VideoReprSet {
                fusion: it.next().expect("three mixtures"),
                entity: it.next(),
                action: it.next(),
                gate_weights: fusion_gate,
            })
        }
        GatingMode::NoGate => {
            if !gates.is_empty() {
                return Err(mode_err(format!("expected no gates, have {}", gates.len())));
            }
            match experts.len() {
                1 => Ok(VideoReprSet {
                    fusion: expert_forward(&experts[0], frames, c, d)?,
                    entity: None,
                    action: None,
                    gate_weights: None,
                }),
                3 => {
                    let mut outs: Vec<Vec<R>> = experts
                        .iter()
                        .map(|e| expert_forward(e, frames, c, d))
                        .collect::<Result<_>>()?;
                    let action = outs.pop();
                    let entity = outs.pop();
                    Ok(VideoReprSet {
                        fusion: outs.pop().expect("three outputs"),
                        entity,
                        action,
                        gate_weights: None,
                    })
                }
                n => Err(mode_err(format!("expected 1 or 3 experts, have {n}"))),
            }
        }
    }
}

impl<R: Copy> ExpertParams<R> {
    pub fn map<S>(&self, f: &mut impl FnMut(R) -> S) -> ExpertParams<S> {
        ExpertParams {
            task: self.task,
            aggregator: self.aggregator.map(f),
            projection: self.projection.map(f),
        }
    }
}

impl<R: Copy> GateParams<R> {
    pub fn map<S>(&self, f: &mut impl FnMut(R) -> S) -> GateParams<S> {
        GateParams {
            aggregator: self.aggregator.map(f),
            projection: self.projection.iter().map(|&v| f(v)).collect(),
            dim: self.dim,
            n_experts: self.n_experts,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregation::{AggregatorKind, SeParams};
    use crate::kernels::{init_ffn, FfnSpec};
    use crate::rng::Rng;

    fn seeded_aggregator(rng: &mut Rng, kind: AggregatorKind, d: usize) -> AggregatorParams<f64> {
        match kind {
            AggregatorKind::MeanPool => AggregatorParams::MeanPool,
            AggregatorKind::SeAttention => AggregatorParams::Se(SeParams {
                bottleneck: init_ffn(rng, &FfnSpec::bottleneck(d, (d / 4).max(1))).unwrap(),
            }),
            AggregatorKind::SelfAttention => unimplemented!("not needed in these tests"),
        }
    }

    fn seeded_expert(rng: &mut Rng, task: TaskId, d: usize) -> ExpertParams<f64> {
        ExpertParams {
            task,
            aggregator: seeded_aggregator(rng, AggregatorKind::SeAttention, d),
            projection: init_ffn(rng, &FfnSpec::linear(d, d)).unwrap(),
        }
    }

    fn seeded_gate(rng: &mut Rng, d: usize) -> GateParams<f64> {
        GateParams {
            aggregator: seeded_aggregator(rng, AggregatorKind::SeAttention, d),
            projection: (0..d * 3).map(|_| rng.uniform(-0.5, 0.5)).collect(),
            dim: d,
            n_experts: 3,
        }
    }

    #[test]
    fn zero_projection_gives_uniform_weights() {
        let mut rng = Rng::new(1);
        let d = 4;
        let mut gate = seeded_gate(&mut rng, d);
        gate.projection = vec![0.0; d * 3];
        let frames: Vec<f64> = (0..2 * d).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let w = gate_weights(&gate, &frames, 2, d).unwrap();
        assert_eq!(w, vec![1.0 / 3.0; 3]);
    }

    #[test]
    fn equal_columns_give_uniform_weights() {
        let mut rng = Rng::new(2);
        let d = 3;
        let mut gate = seeded_gate(&mut rng, d);
        // every expert column identical
        for k in 0..d {
            let v = rng.uniform(-1.0, 1.0);
            for e in 0..3 {
                gate.projection[k * 3 + e] = v;
            }
        }
        let frames: Vec<f64> = (0..2 * d).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let w = gate_weights(&gate, &frames, 2, d).unwrap();
        for &x in &w {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn gate_weights_seeded_scalar_oracle() {
        // Mean-pool gate so the longhand evaluation stays short.
        let mut rng = Rng::new(11);
        let d = 2;
        let gate = GateParams {
            aggregator: AggregatorParams::MeanPool,
            projection: (0..d * 3).map(|_| rng.uniform(-0.5, 0.5)).collect(),
            dim: d,
            n_experts: 3,
        };
        let frames: Vec<f64> = (0..2 * d).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let w = gate_weights(&gate, &frames, 2, d).unwrap();

        let agg = [(frames[0] + frames[2]) / 2.0, (frames[1] + frames[3]) / 2.0];
        let p = &gate.projection;
        let logits = [
            p[0] * agg[0] + p[3] * agg[1],
            p[1] * agg[0] + p[4] * agg[1],
            p[2] * agg[0] + p[5] * agg[1],
        ];
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
        let sum: f64 = exps.iter().sum();
        for e in 0..3 {
            assert!((w[e] - exps[e] / sum).abs() < 1e-15);
        }
        let total: f64 = w.iter().sum();
        assert!((total - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn one_hot_gate_returns_that_expert() {
        let mut rng = Rng::new(3);
        let d = 4;
        let experts: Vec<ExpertParams<f64>> = TaskId::ALL
            .iter()
            .map(|&t| seeded_expert(&mut rng, t, d))
            .collect();
        let frames: Vec<f64> = (0..3 * d).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let outs: Vec<Vec<f64>> = experts
            .iter()
            .map(|e| expert_forward(e, &frames, 3, d).unwrap())
            .collect();
        let mixed = mix_experts(&[1.0, 0.0, 0.0], &outs);
        assert_eq!(mixed, outs[0]);
    }

    #[test]
    fn identical_experts_make_the_gate_irrelevant() {
        let mut rng = Rng::new(4);
        let d = 3;
        let template = seeded_expert(&mut rng, TaskId::Fusion, d);
        let experts = vec![template.clone(), template.clone(), template.clone()];
        let gate = seeded_gate(&mut rng, d);
        let frames: Vec<f64> = (0..2 * d).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let set = forward_video(&experts, &[gate], GatingMode::SingleGate, &frames, 2, d).unwrap();
        let own = expert_forward(&template, &frames, 2, d).unwrap();
        for k in 0..d {
            assert!((set.fusion[k] - own[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn single_gate_full_forward_seeded_oracle() {
        // seed-13 forward on a 2-frame video, mean-pool everywhere so the
        // composition can be checked with explicit arithmetic.
        let mut rng = Rng::new(13);
        let d = 2;
        let experts: Vec<ExpertParams<f64>> = TaskId::ALL
            .iter()
            .map(|&t| ExpertParams {
                task: t,
                aggregator: AggregatorParams::MeanPool,
                projection: init_ffn(&mut rng, &FfnSpec::linear(d, d)).unwrap(),
            })
            .collect();
        let gate = GateParams {
            aggregator: AggregatorParams::MeanPool,
            projection: (0..d * 3).map(|_| rng.uniform(-0.5, 0.5)).collect(),
            dim: d,
            n_experts: 3,
        };
        let frames: Vec<f64> = (0..2 * d).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let set =
            forward_video(&experts, &[gate.clone()], GatingMode::SingleGate, &frames, 2, d).unwrap();

        let agg = [(frames[0] + frames[2]) / 2.0, (frames[1] + frames[3]) / 2.0];
        let project = |ffn: &FfnParams<f64>| {
            let l = &ffn.layers[0];
            [
                l.weight[0] * agg[0] + l.weight[1] * agg[1] + l.bias[0],
                l.weight[2] * agg[0] + l.weight[3] * agg[1] + l.bias[1],
            ]
        };
        let e: Vec<[f64; 2]> = experts.iter().map(|x| project(&x.projection)).collect();
        let w = gate_weights(&gate, &frames, 2, d).unwrap();
        for k in 0..d {
            let expected = w[0] * e[0][k] + w[1] * e[1][k] + w[2] * e[2][k];
            assert!((set.fusion[k] - expected).abs() < 1e-14);
            assert!((set.entity.as_ref().unwrap()[k] - e[1][k]).abs() < 1e-15);
            assert!((set.action.as_ref().unwrap()[k] - e[2][k]).abs() < 1e-15);
        }
    }

    #[test]
    fn entity_action_ignore_gate_perturbation() {
        let mut rng = Rng::new(5);
        let d = 4;
        let experts: Vec<ExpertParams<f64>> = TaskId::ALL
            .iter()
            .map(|&t| seeded_expert(&mut rng, t, d))
            .collect();
        let mut gate = seeded_gate(&mut rng, d);
        let frames: Vec<f64> = (0..2 * d).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let before =
            forward_video(&experts, &[gate.clone()], GatingMode::SingleGate, &frames, 2, d).unwrap();
        for v in gate.projection.iter_mut() {
            *v += 0.37;
        }
        let after = forward_video(&experts, &[gate], GatingMode::SingleGate, &frames, 2, d).unwrap();
        // bit-identical pass-through outputs, changed fusion
        assert_eq!(before.entity, after.entity);
        assert_eq!(before.action, after.action);
        assert_ne!(before.fusion, after.fusion);
    }

    #[test]
    fn fusion_stays_in_expert_hull() {
        let mut rng = Rng::new(6);
        let d = 3;
        let experts: Vec<ExpertParams<f64>> = TaskId::ALL
            .iter()
            .map(|&t| seeded_expert(&mut rng, t, d))
            .collect();
        let gate = seeded_gate(&mut rng, d);
        for trial in 0..50 {
            let mut r2 = Rng::new(100 + trial);
            let frames: Vec<f64> = (0..2 * d).map(|_| r2.uniform(-1.0, 1.0)).collect();
            let outs: Vec<Vec<f64>> = experts
                .iter()
                .map(|e| expert_forward(e, &frames, 2, d).unwrap())
                .collect();
            let set =
                forward_video(&experts, &[gate.clone()], GatingMode::SingleGate, &frames, 2, d)
                    .unwrap();
            for k in 0..d {
                let lo = outs.iter().map(|o| o[k]).fold(f64::INFINITY, f64::min);
                let hi = outs.iter().map(|o| o[k]).fold(f64::NEG_INFINITY, f64::max);
                assert!(set.fusion[k] >= lo - 1e-12 && set.fusion[k] <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn mode_mismatch_is_reported() {
        let mut rng = Rng::new(7);
        let d = 2;
        let experts = vec![seeded_expert(&mut rng, TaskId::Fusion, d)];
        let gate = seeded_gate(&mut rng, d);
        let frames = vec![0.1; d];
        assert!(matches!(
            forward_video(&experts, &[gate], GatingMode::SingleGate, &frames, 1, d),
            Err(CoreError::ModeMismatch { .. })
        ));
        assert!(matches!(
            forward_video(&experts, &[], GatingMode::MultiGate, &frames, 1, d),
            Err(CoreError::ModeMismatch { .. })
        ));
    }
}
