//! Structured-text model files.
//!
//! A header pins the architecture (mode, dimensions, aggregator wiring,
//! sentence strategy), each parameter group follows as a `param` line with
//! its length plus one line of full-precision decimals, and a trailing
//! `digest` line carries an FNV-1a 64 checksum of everything above it.

use std::fs;
use std::path::Path;

use camoe_core::aggregation::AggregatorKind;
use camoe_core::model::{init_model, param_index, ModelConfig, ModelMode, ModelParams};
use camoe_core::text::SentenceStrategy;
use camoe_core::PerTask;

use crate::error::{HarnessError, Result};
use crate::formats::util::{atomic_write, fnv1a64, format_f64, parse_f64};

const HEADER: &str = "camoe-model v1";

#[derive(Debug, Clone)]
pub struct SavedModel {
    pub config: ModelConfig,
    pub params: ModelParams<f64>,
}

pub fn render_model(config: &ModelConfig, params: &ModelParams<f64>) -> String {
    let mut out = String::new();
    out.push_str(HEADER);
    out.push('\n');
    out.push_str(&format!("mode {}\n", config.mode.name()));
    out.push_str(&format!("dim {}\n", config.dim));
    out.push_str(&format!("token-dim {}\n", config.token_dim));
    out.push_str(&format!("max-frames {}\n", config.max_frames));
    out.push_str(&format!("attn-dim {}\n", config.attn_dim));
    out.push_str(&format!("strategy {}\n", config.strategy.name()));
    out.push_str(&format!("agg-fusion {}\n", config.expert_aggregators.fusion.name()));
    out.push_str(&format!("agg-entity {}\n", config.expert_aggregators.entity.name()));
    out.push_str(&format!("agg-action {}\n", config.expert_aggregators.action.name()));
    out.push_str(&format!("agg-gate {}\n", config.gate_aggregator.name()));
    let flat = params.flatten();
    for group in &param_index(params, true).groups {
        out.push_str(&format!("param {} {}\n", group.name, group.len));
        let values: Vec<String> = flat[group.offset..group.offset + group.len]
            .iter()
            .map(|&v| format_f64(v))
            .collect();
        out.push_str(&values.join(" "));
        out.push('\n');
    }
    let digest = fnv1a64(out.as_bytes());
    out.push_str(&format!("digest {digest:016x}\n"));
    out
}

pub fn persist_model(path: &Path, config: &ModelConfig, params: &ModelParams<f64>) -> Result<()> {
    atomic_write(path, render_model(config, params).as_bytes())
}

struct LineReader<'a> {
    path: &'a Path,
    lines: std::str::Lines<'a>,
    offset: u64,
    line_len: u64,
}

impl<'a> LineReader<'a> {
    fn next(&mut self) -> Option<&'a str> {
        self.offset += self.line_len;
        let line = self.lines.next()?;
        self.line_len = line.len() as u64 + 1;
        Some(line)
    }

    fn fail(&self, detail: String) -> HarnessError {
        HarnessError::Format {
            path: self.path.to_path_buf(),
            offset: self.offset,
            detail,
        }
    }

    fn expect_kv(&mut self, key: &str) -> Result<String> {
        let line = self
            .next()
            .ok_or_else(|| self.fail(format!("unexpected end of file, expected `{key} ...`")))?;
        let (k, v) = line
            .split_once(' ')
            .ok_or_else(|| self.fail(format!("malformed line {line:?}")))?;
        if k != key {
            return Err(self.fail(format!("expected key `{key}`, found `{k}`")));
        }
        Ok(v.to_string())
    }
}

/// Load a model file, verifying its digest and, when `requested_mode` is
/// given, that the stored mode matches.
pub fn load_model(path: &Path, requested_mode: Option<ModelMode>) -> Result<SavedModel> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;

    // Digest check first: the last non-empty line must be `digest <hex>`
    // and hash everything before it.
    let trimmed = text.trim_end_matches('\n');
    let (body, digest_line) = trimmed.rsplit_once('\n').ok_or_else(|| HarnessError::Format {
        path: path.to_path_buf(),
        offset: 0,
        detail: "file too short for a digest line".into(),
    })?;
    let body_with_newline = format!("{body}\n");
    let stored = digest_line
        .strip_prefix("digest ")
        .ok_or_else(|| HarnessError::Format {
            path: path.to_path_buf(),
            offset: body_with_newline.len() as u64,
            detail: format!("expected trailing digest line, found {digest_line:?}"),
        })?
        .trim()
        .to_string();
    let computed = format!("{:016x}", fnv1a64(body_with_newline.as_bytes()));
    if stored != computed {
        return Err(HarnessError::DigestMismatch {
            path: path.to_path_buf(),
            stored,
            computed,
        });
    }

    let mut reader = LineReader {
        path,
        lines: body_with_newline.lines(),
        offset: 0,
        line_len: 0,
    };
    let header = reader
        .next()
        .ok_or_else(|| reader.fail("empty file".into()))?;
    if header != HEADER {
        return Err(reader.fail(format!("bad header {header:?}, expected {HEADER:?}")));
    }
    let mode_s = reader.expect_kv("mode")?;
    let mode = ModelMode::parse(&mode_s)
        .ok_or_else(|| reader.fail(format!("unknown mode {mode_s:?}")))?;
    if let Some(requested) = requested_mode {
        if requested != mode {
            return Err(HarnessError::ModeMismatch {
                saved: mode.name().into(),
                requested: requested.name().into(),
            });
        }
    }
    let parse_usize = |r: &mut LineReader<'_>, key: &str| -> Result<usize> {
        let v = r.expect_kv(key)?;
        v.parse()
            .map_err(|_| r.fail(format!("bad integer {v:?} for `{key}`")))
    };
    let dim = parse_usize(&mut reader, "dim")?;
    let token_dim = parse_usize(&mut reader, "token-dim")?;
    let max_frames = parse_usize(&mut reader, "max-frames")?;
    let attn_dim = parse_usize(&mut reader, "attn-dim")?;
    let strategy_s = reader.expect_kv("strategy")?;
    let strategy = SentenceStrategy::parse(&strategy_s)
        .ok_or_else(|| reader.fail(format!("unknown strategy {strategy_s:?}")))?;
    let mut agg = |key: &str| -> Result<AggregatorKind> {
        let v = reader.expect_kv(key)?;
        AggregatorKind::parse(&v).ok_or_else(|| reader.fail(format!("unknown aggregator {v:?}")))
    };
    let fusion = agg("agg-fusion")?;
    let entity = agg("agg-entity")?;
    let action = agg("agg-action")?;
    let gate = agg("agg-gate")?;

    let config = ModelConfig {
        dim,
        token_dim,
        max_frames,
        attn_dim,
        mode,
        expert_aggregators: PerTask {
            fusion,
            entity,
            action,
        },
        gate_aggregator: gate,
        strategy,
    };

    // Template with the right shapes; overwrite every group from the file.
    let template = init_model(&config, 0)?;
    let index = param_index(&template, true);
    let mut flat = vec![0.0f64; index.n_params];
    for group in &index.groups {
        let decl = reader.expect_kv("param")?;
        let (name, len_s) = decl
            .rsplit_once(' ')
            .ok_or_else(|| reader.fail(format!("malformed param line {decl:?}")))?;
        if name != group.name {
            return Err(reader.fail(format!(
                "parameter group order mismatch: file has {name:?}, model expects {:?}",
                group.name
            )));
        }
        let len: usize = len_s
            .parse()
            .map_err(|_| reader.fail(format!("bad length {len_s:?}")))?;
        if len != group.len {
            return Err(reader.fail(format!(
                "group {name} has {len} values in the file but the {} architecture needs {}",
                mode.name(),
                group.len
            )));
        }
        let values_line = reader
            .next()
            .ok_or_else(|| reader.fail(format!("missing values for group {name}")))?;
        let mut count = 0usize;
        for (k, tok) in values_line.split_whitespace().enumerate() {
            if k >= len {
                return Err(reader.fail(format!("too many values for group {name}")));
            }
            flat[group.offset + k] = parse_f64(tok)
                .ok_or_else(|| reader.fail(format!("bad value {tok:?} in group {name}")))?;
            count += 1;
        }
        if count != len {
            return Err(reader.fail(format!(
                "group {name} expected {len} values, found {count}"
            )));
        }
    }
    let params = ModelParams::from_flat(&template, &flat);
    Ok(SavedModel { config, params })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn roundtrip_dir(tag: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("camoe-model-file-{tag}"));
        fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn round_trip_is_exact() {
        let cfg = ModelConfig::new(4, 4, 3);
        let params = init_model(&cfg, 99).unwrap();
        let dir = roundtrip_dir("rt");
        let path = dir.join("model.camoe");
        persist_model(&path, &cfg, &params).unwrap();
        let loaded = load_model(&path, None).unwrap();
        assert_eq!(loaded.config, cfg);
        let a = params.flatten();
        let b = loaded.params.flatten();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        // second save emits identical bytes
        let first = fs::read(&path).unwrap();
        persist_model(&path, &loaded.config, &loaded.params).unwrap();
        assert_eq!(first, fs::read(&path).unwrap());
        fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn truncation_breaks_the_digest() {
        let cfg = ModelConfig::new(4, 4, 3);
        let params = init_model(&cfg, 1).unwrap();
        let dir = roundtrip_dir("trunc");
        let path = dir.join("model.camoe");
        persist_model(&path, &cfg, &params).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes.truncate(bytes.len() / 2);
        fs::write(&path, &bytes).unwrap();
        match load_model(&path, None) {
            Err(HarnessError::DigestMismatch { .. }) | Err(HarnessError::Format { .. }) => {}
            other => panic!("expected digest failure, got {other:?}"),
        }
        fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn mode_mismatch_is_explicit() {
        let cfg = ModelConfig::new(4, 4, 3).with_mode(ModelMode::Camoe);
        let params = init_model(&cfg, 1).unwrap();
        let dir = roundtrip_dir("mode");
        let path = dir.join("model.camoe");
        persist_model(&path, &cfg, &params).unwrap();
        assert!(matches!(
            load_model(&path, Some(ModelMode::SingleTask)),
            Err(HarnessError::ModeMismatch { .. })
        ));
        assert!(load_model(&path, Some(ModelMode::Camoe)).is_ok());
        fs::remove_dir_all(&dir).ok();
    }
}
