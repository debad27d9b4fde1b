//! Synthetic paired datasets with controllable structure.
//!
//! Every video is a sum of one entity concept and one action concept (plus
//! per-frame noise); every caption is built from concept-tagged tokens with
//! correct entity/action masks. Concepts are drawn orthonormal so the
//! geometry is exact at zero noise: the matched pair is the unique cosine
//! argmax.
//!
//! The ambiguity construction reproduces the broad-caption failure case.
//! An ambiguous ("broad") caption consists of entity tokens only, and its
//! video shares that entity with a partner ("victim") pair whose caption
//! mis-describes the action: the victim's action tokens keep only a 0.3
//! component along the true action, with the rest along a distractor
//! direction no video uses. At zero noise the broad caption then scores
//! 1/sqrt(2) ~ 0.707 against every video of its group while the victim's
//! own caption reaches only 0.65, so plain video-to-text ranking misranks
//! every victim row; the cross-direction prior concentrates on the victim
//! column's single strong entry and restores the diagonal.

use std::path::Path;

use camoe_core::rng::Rng;
use camoe_core::tensor::Matrix;
use camoe_core::text::CaptionRecord;

use crate::error::{HarnessError, Result};
use crate::formats::captions::CaptionLine;
use crate::formats::embedding::EmbeddingFile;
use crate::formats::manifest::{Manifest, PairRecord, SpecRecord};
use crate::formats::dataset_dir::{write_dataset_dir, DatasetFiles};

/// How much of the true action direction a victim caption keeps.
pub const VICTIM_ACTION_ALIGNMENT: f64 = 0.3;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub pairs: usize,
    pub dim: usize,
    pub frames: usize,
    pub tokens: usize,
    pub entity_concepts: usize,
    pub action_concepts: usize,
    pub noise: f64,
    pub ambiguity: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(HarnessError::InvalidArgument(msg));
        if self.pairs == 0 || self.dim == 0 || self.frames == 0 || self.tokens == 0 {
            return bad("pairs, dim, frames and tokens must all be positive".into());
        }
        if self.entity_concepts == 0 || self.action_concepts == 0 {
            return bad("concept counts must be positive".into());
        }
        if !(self.noise >= 0.0) {
            return bad(format!("noise must be >= 0, got {}", self.noise));
        }
        if !(0.0..=1.0).contains(&self.ambiguity) {
            return bad(format!("ambiguity must lie in [0, 1], got {}", self.ambiguity));
        }
        // Concepts plus one distractor direction must fit orthonormally.
        if self.entity_concepts + self.action_concepts + 1 > self.dim {
            return bad(format!(
                "need entity_concepts + action_concepts + 1 <= dim for an orthonormal concept \
                 basis; {} + {} + 1 > {}",
                self.entity_concepts, self.action_concepts, self.dim
            ));
        }
        if self.ambiguity > 0.0 {
            if self.tokens % 2 != 0 {
                return bad("ambiguity > 0 needs an even token count (half entity, half action)".into());
            }
            if self.action_concepts < 2 {
                return bad("ambiguity > 0 needs at least two action concepts".into());
            }
        }
        Ok(())
    }

    fn n_ambiguous(&self) -> usize {
        (self.ambiguity * self.pairs as f64).floor() as usize
    }
}

/// Orthonormal set of `count` vectors in `dim` dimensions via Gram-Schmidt
/// over gaussian draws.
fn orthonormal_set(rng: &mut Rng, count: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(count);
    while basis.len() < count {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.gaussian()).collect();
        for b in &basis {
            let proj: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            for (x, y) in v.iter_mut().zip(b) {
                *x -= proj * y;
            }
        }
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-6 {
            continue; // essentially impossible; redraw
        }
        for x in v.iter_mut() {
            *x /= norm;
        }
        basis.push(v);
    }
    basis
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    /// Ordinary pair: clean caption.
    Standalone,
    /// Entity-only caption shared with a victim's entity.
    Broad { group: usize },
    /// Shares its entity with one or more broad captions and mis-describes
    /// its action.
    Victim { group: usize },
}

fn assign_roles(spec: &SyntheticSpec) -> Vec<Role> {
    let n = spec.pairs;
    let n_amb = spec.n_ambiguous();
    let n_rest = n - n_amb;
    let mut roles = Vec::with_capacity(n);
    if n_amb == 0 {
        return vec![Role::Standalone; n];
    }
    if n_rest == 0 {
        // Degenerate: every caption broad, no partners to confuse.
        return (0..n).map(|g| Role::Broad { group: g }).collect();
    }
    // Interleave broad/victim pairs while both remain, then the excess kind
    // fills the tail (extra broads reuse earlier groups round-robin).
    let groups = n_amb.min(n_rest);
    for g in 0..groups {
        roles.push(Role::Broad { group: g });
        roles.push(Role::Victim { group: g });
    }
    let mut extra_broad = n_amb - groups;
    let mut extra_victim = n_rest - groups;
    let mut next_group = 0usize;
    while extra_broad > 0 {
        roles.push(Role::Broad {
            group: next_group % groups,
        });
        next_group += 1;
        extra_broad -= 1;
    }
    while extra_victim > 0 {
        roles.push(Role::Standalone);
        extra_victim -= 1;
    }
    roles
}

/// Build the dataset files for a spec. Deterministic per seed; the same
/// spec always yields byte-identical files.
pub fn generate(spec: &SyntheticSpec) -> Result<DatasetFiles> {
    spec.validate()?;
    let mut rng = Rng::new(spec.seed);
    let d = spec.dim;
    let n = spec.pairs;
    let n_concepts = spec.entity_concepts + spec.action_concepts + 1;
    let basis = orthonormal_set(&mut rng, n_concepts, d);
    let entities = &basis[0..spec.entity_concepts];
    let actions = &basis[spec.entity_concepts..spec.entity_concepts + spec.action_concepts];
    let distractor = &basis[n_concepts - 1];

    let roles = assign_roles(spec);

    // Concept assignment. Standalone pairs walk a shuffled product of
    // (entity, action) combinations so matched pairs are unique as long as
    // the product space is large enough; grouped pairs share the group
    // entity, with broads on even action slots and victims on odd ones.
    let mut combos: Vec<(usize, usize)> = (0..spec.entity_concepts)
        .flat_map(|e| (0..spec.action_concepts).map(move |a| (e, a)))
        .collect();
    rng.shuffle(&mut combos);
    let mut standalone_rank = 0usize;
    let mut broad_rank = 0usize;
    let mut victim_rank = 0usize;
    let assignments: Vec<(usize, usize)> = roles
        .iter()
        .map(|role| match *role {
            Role::Standalone => {
                let combo = combos[standalone_rank % combos.len()];
                standalone_rank += 1;
                combo
            }
            Role::Broad { group } => {
                let c = (group % spec.entity_concepts, (2 * broad_rank) % spec.action_concepts);
                broad_rank += 1;
                c
            }
            Role::Victim { group } => {
                let c = (
                    group % spec.entity_concepts,
                    (2 * victim_rank + 1) % spec.action_concepts,
                );
                victim_rank += 1;
                c
            }
        })
        .collect();

    // Videos: frames = entity + action + noise.
    let mut video_data = Vec::with_capacity(n * spec.frames * d);
    for &(e_idx, a_idx) in &assignments {
        for _ in 0..spec.frames {
            for k in 0..d {
                let clean = entities[e_idx][k] + actions[a_idx][k];
                let noise = if spec.noise > 0.0 {
                    spec.noise * rng.gaussian()
                } else {
                    0.0
                };
                video_data.push(clean + noise);
            }
        }
    }

    // Captions: tokens are exact concept vectors.
    let off_axis = (1.0 - VICTIM_ACTION_ALIGNMENT * VICTIM_ACTION_ALIGNMENT).sqrt();
    let mut token_data = Vec::with_capacity(n * spec.tokens * d);
    let mut caption_lines = Vec::with_capacity(n);
    let mut pair_records = Vec::with_capacity(n);
    for (i, (&(e_idx, a_idx), role)) in assignments.iter().zip(&roles).enumerate() {
        let t = spec.tokens;
        let mut tokens: Vec<String> = Vec::with_capacity(t);
        let mut entity_mask = Vec::with_capacity(t);
        let mut action_mask = Vec::with_capacity(t);
        match *role {
            Role::Broad { .. } => {
                for _ in 0..t {
                    token_data.extend_from_slice(&entities[e_idx]);
                    tokens.push(format!("e{e_idx}"));
                    entity_mask.push(1u8);
                    action_mask.push(0u8);
                }
            }
            Role::Victim { .. } => {
                let half = t / 2;
                for _ in 0..half {
                    token_data.extend_from_slice(&entities[e_idx]);
                    tokens.push(format!("e{e_idx}"));
                    entity_mask.push(1);
                    action_mask.push(0);
                }
                for _ in half..t {
                    for k in 0..d {
                        token_data.push(
                            VICTIM_ACTION_ALIGNMENT * actions[a_idx][k] + off_axis * distractor[k],
                        );
                    }
                    tokens.push(format!("a{a_idx}-off"));
                    entity_mask.push(0);
                    action_mask.push(1);
                }
            }
            Role::Standalone => {
                let n_entity = t.div_ceil(2);
                for _ in 0..n_entity {
                    token_data.extend_from_slice(&entities[e_idx]);
                    tokens.push(format!("e{e_idx}"));
                    entity_mask.push(1);
                    action_mask.push(0);
                }
                for _ in n_entity..t {
                    token_data.extend_from_slice(&actions[a_idx]);
                    tokens.push(format!("a{a_idx}"));
                    entity_mask.push(0);
                    action_mask.push(1);
                }
            }
        }
        caption_lines.push(CaptionLine {
            id: format!("c{i}"),
            video_id: format!("v{i}"),
            tokens,
            entity_mask,
            action_mask,
            token_embedding_ref: i as u32,
        });
        pair_records.push(PairRecord {
            caption_id: format!("c{i}"),
            video_id: format!("v{i}"),
            ambiguous: matches!(role, Role::Broad { .. }),
            group: match *role {
                Role::Broad { group } | Role::Victim { group } => Some(group as u32),
                Role::Standalone => None,
            },
        });
    }

    Ok(DatasetFiles {
        videos: EmbeddingFile::from_f64(n as u32, spec.frames as u32, d as u32, &video_data)?,
        tokens: EmbeddingFile::from_f64(n as u32, spec.tokens as u32, d as u32, &token_data)?,
        captions: caption_lines,
        manifest: Manifest {
            spec: SpecRecord {
                pairs: n as u32,
                dim: d as u32,
                frames: spec.frames as u32,
                tokens: spec.tokens as u32,
                entity_concepts: spec.entity_concepts as u32,
                action_concepts: spec.action_concepts as u32,
                noise: spec.noise,
                ambiguity: spec.ambiguity,
                seed: spec.seed,
            },
            pairs: pair_records,
        },
    })
}

pub fn generate_to_dir(spec: &SyntheticSpec, dir: &Path) -> Result<DatasetFiles> {
    let files = generate(spec)?;
    write_dataset_dir(dir, &files)?;
    Ok(files)
}

/// Parameter-free "identity model" video representation: the frame mean.
pub fn identity_video_repr(frames: &Matrix) -> Vec<f64> {
    let (c, d) = (frames.rows(), frames.cols());
    let mut out = vec![0.0; d];
    for r in 0..c {
        for (o, v) in out.iter_mut().zip(frames.row(r)) {
            *o += v;
        }
    }
    for o in out.iter_mut() {
        *o /= c as f64;
    }
    out
}

/// Identity-model text representation: the mean over all tokens.
pub fn identity_text_repr(caption: &CaptionRecord) -> Vec<f64> {
    identity_video_repr(&caption.tokens)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_spec() -> SyntheticSpec {
        SyntheticSpec {
            pairs: 8,
            dim: 12,
            frames: 3,
            tokens: 4,
            entity_concepts: 4,
            action_concepts: 4,
            noise: 0.0,
            ambiguity: 0.0,
            seed: 17,
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let spec = base_spec();
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a.videos.to_bytes(), b.videos.to_bytes());
        assert_eq!(a.tokens.to_bytes(), b.tokens.to_bytes());
        assert_eq!(a.captions, b.captions);
        assert_eq!(a.manifest, b.manifest);
    }

    #[test]
    fn ambiguity_marks_the_expected_count() {
        let mut spec = base_spec();
        spec.ambiguity = 0.5;
        let files = generate(&spec).unwrap();
        let marked = files.manifest.pairs.iter().filter(|p| p.ambiguous).count();
        assert_eq!(marked, 4);
        // marked captions carry only entity tokens
        for (line, pair) in files.captions.iter().zip(&files.manifest.pairs) {
            if pair.ambiguous {
                assert!(line.action_mask.iter().all(|&m| m == 0));
                assert!(line.entity_mask.iter().all(|&m| m == 1));
            }
        }
    }

    #[test]
    fn noiseless_matched_pairs_are_unique_argmax() {
        // identity model, zero noise, no ambiguity: the diagonal wins every
        // row and column strictly (brute force over all pairs)
        let specs = [
            SyntheticSpec {
                pairs: 10,
                dim: 12,
                frames: 2,
                tokens: 5,
                entity_concepts: 5,
                action_concepts: 4,
                noise: 0.0,
                ambiguity: 0.0,
                seed: 23,
            },
            SyntheticSpec {
                pairs: 40,
                dim: 16,
                frames: 3,
                tokens: 4,
                entity_concepts: 7,
                action_concepts: 6,
                noise: 0.0,
                ambiguity: 0.0,
                seed: 24,
            },
        ];
        for spec in specs {
            let files = generate(&spec).unwrap();
            let dir = std::env::temp_dir().join(format!("camoe-synth-argmax-{}", spec.pairs));
            std::fs::create_dir_all(&dir).unwrap();
            write_dataset_dir(&dir, &files).unwrap();
            let (data, _) = crate::formats::load_dataset_dir(&dir).unwrap();
            std::fs::remove_dir_all(&dir).ok();

            let vids: Vec<Vec<f64>> =
                data.videos.iter().map(|v| identity_video_repr(&v.frames)).collect();
            let txts: Vec<Vec<f64>> = data.captions.iter().map(identity_text_repr).collect();
            let cos = |a: &[f64], b: &[f64]| {
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
                let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
                dot / (na * nb)
            };
            for i in 0..spec.pairs {
                let own = cos(&vids[i], &txts[i]);
                for j in 0..spec.pairs {
                    if i != j {
                        assert!(own > cos(&vids[i], &txts[j]) + 1e-9, "row {i} col {j}");
                        assert!(own > cos(&vids[j], &txts[i]) + 1e-9, "col {i} row {j}");
                    }
                }
            }
        }
    }

    #[test]
    fn validation_rejects_bad_specs() {
        let mut s = base_spec();
        s.entity_concepts = 20; // basis no longer fits
        assert!(generate(&s).is_err());
        let mut s = base_spec();
        s.ambiguity = 0.5;
        s.tokens = 5; // odd
        assert!(generate(&s).is_err());
        let mut s = base_spec();
        s.ambiguity = 1.5;
        assert!(generate(&s).is_err());
    }

    #[test]
    fn concepts_are_orthonormal() {
        let mut rng = Rng::new(3);
        let basis = orthonormal_set(&mut rng, 6, 10);
        for i in 0..6 {
            for j in 0..6 {
                let dot: f64 = basis[i].iter().zip(&basis[j]).map(|(a, b)| a * b).sum();
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((dot - expected).abs() < 1e-12, "({i},{j}) -> {dot}");
            }
        }
    }
}
