//! End-to-end command behaviors: exit codes, error records, format
//! diagnostics and the smaller command paths not covered by the acceptance
//! suite.

use std::path::Path;
use std::process::{Command, Output};

fn camoe(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_camoe"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stderr_record(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().unwrap_or_default();
    serde_json::from_str(line).unwrap_or_else(|_| panic!("stderr not a JSON record: {text}"))
}

#[test]
fn version_and_help_always_succeed() {
    let dir = tempfile::tempdir().unwrap();
    let v = camoe(&["--version"], dir.path());
    assert!(v.status.success());
    assert!(String::from_utf8_lossy(&v.stdout).contains("camoe"));
    let h = camoe(&["--help"], dir.path());
    assert!(h.status.success());
    for sub in ["gen", "train", "eval", "rerank", "gradcheck", "inspect-gates"] {
        assert!(
            String::from_utf8_lossy(&h.stdout).contains(sub),
            "help should list {sub}"
        );
    }
}

#[test]
fn unknown_flags_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = camoe(&["gen", "--no-such-flag"], dir.path());
    assert!(!out.status.success());
    assert_eq!(out.status.code(), Some(2), "clap usage errors exit 2");
}

#[test]
fn missing_input_produces_machine_parsable_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = camoe(
        &["eval", "--model", "nope.camoe", "--data", "nowhere"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    let record = stderr_record(&out);
    assert_eq!(record["error"], "io");
    assert!(record["message"].as_str().unwrap().contains("nope.camoe"));
}

#[test]
fn corrupt_embedding_file_reports_byte_offset() {
    let dir = tempfile::tempdir().unwrap();
    let gen = camoe(
        &["gen", "--out", "data", "--pairs", "4", "--dim", "8", "--frames", "2", "--tokens", "2",
          "--entity-concepts", "2", "--action-concepts", "2", "--seed", "2"],
        dir.path(),
    );
    assert!(gen.status.success());
    // truncate the video file mid-payload
    let video_path = dir.path().join("data/videos.caeb");
    let mut bytes = std::fs::read(&video_path).unwrap();
    bytes.truncate(bytes.len() - 5);
    std::fs::write(&video_path, &bytes).unwrap();
    let out = camoe(
        &["train", "--data", "data", "--out", "run", "--epochs", "1", "--batch-size", "2"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    let record = stderr_record(&out);
    assert_eq!(record["error"], "format");
    let msg = record["message"].as_str().unwrap();
    assert!(msg.contains("byte"), "format errors name the byte offset: {msg}");
}

#[test]
fn rerank_single_entry_matrix_is_identity() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim.csv");
    std::fs::write(&sim, "# similarity rows=videos cols=texts shape=1x1\n4.2e-1\n").unwrap();
    let out = camoe(
        &["rerank", "--sim", "sim.csv", "--temp", "100", "--direction", "t2v", "--out", "out.csv"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("out.csv")).unwrap();
    let value: f64 = text.lines().nth(1).unwrap().trim().parse().unwrap();
    assert_eq!(value, 0.42);
}

#[test]
fn rerank_rejects_bad_direction_and_bad_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim.csv");
    std::fs::write(&sim, "# header\n0.5,0.1\n").unwrap();
    let out = camoe(
        &["rerank", "--sim", "sim.csv", "--temp", "1", "--direction", "sideways", "--out", "o.csv"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_record(&out)["error"], "invalid-argument");

    let out = camoe(
        &["rerank", "--sim", "sim.csv", "--temp", "1", "--direction", "t2v", "--out", "o.csv"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_record(&out)["error"], "format");
}

#[test]
fn gradcheck_command_reports_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = camoe(&["gradcheck", "--seed", "42", "--sizes", "2x1x4,3x2x4"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("max_rel_err"));
    assert!(text.contains("worst rel err"));
    assert!(!text.contains("FAIL"));
}

#[test]
fn model_mode_guard_via_cli_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let gen = camoe(
        &["gen", "--out", "data", "--pairs", "4", "--dim", "8", "--frames", "2", "--tokens", "2",
          "--entity-concepts", "2", "--action-concepts", "2", "--seed", "3"],
        dir.path(),
    );
    assert!(gen.status.success());
    let train = camoe(
        &["train", "--data", "data", "--out", "run", "--epochs", "1", "--batch-size", "2",
          "--mode", "camoe"],
        dir.path(),
    );
    assert!(train.status.success(), "{}", String::from_utf8_lossy(&train.stderr));

    // loading the camoe model while asking for single-task must fail loudly
    let saved = camoe_cli::formats::load_model(&dir.path().join("run/model.camoe"), None).unwrap();
    assert_eq!(saved.config.mode.name(), "camoe");
    let err = camoe_cli::formats::load_model(
        &dir.path().join("run/model.camoe"),
        Some(camoe_core::model::ModelMode::SingleTask),
    )
    .unwrap_err();
    assert_eq!(err.kind(), "mode-mismatch");
}

#[test]
fn eval_temp_sweep_and_window_emit_records() {
    let dir = tempfile::tempdir().unwrap();
    assert!(camoe(
        &["gen", "--out", "data", "--pairs", "6", "--dim", "8", "--frames", "2", "--tokens", "2",
          "--entity-concepts", "3", "--action-concepts", "2", "--noise", "0.1", "--seed", "4"],
        dir.path(),
    )
    .status
    .success());
    assert!(camoe(
        &["train", "--data", "data", "--out", "run", "--epochs", "1", "--batch-size", "3",
          "--holdout-fraction", "0"],
        dir.path(),
    )
    .status
    .success());
    let out = camoe(
        &["eval", "--model", "run/model.camoe", "--data", "data", "--dsl", "--temp", "10",
          "--temp-sweep", "1,100", "--dsl-window", "3", "--out", "metrics.jsonl"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("metrics.jsonl")).unwrap();
    let dsl_rows: Vec<serde_json::Value> = text
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .filter(|v: &serde_json::Value| v["record"] == "metrics" && v["dsl"] == true)
        .collect();
    // three temperatures x two directions
    assert_eq!(dsl_rows.len(), 6);
    let temps: Vec<f64> = dsl_rows.iter().map(|r| r["temp"].as_f64().unwrap()).collect();
    assert!(temps.contains(&10.0) && temps.contains(&1.0) && temps.contains(&100.0));
}

#[test]
fn train_accepts_config_file_with_cli_overrides() {
    let dir = tempfile::tempdir().unwrap();
    assert!(camoe(
        &["gen", "--out", "data", "--pairs", "4", "--dim", "8", "--frames", "2", "--tokens", "2",
          "--entity-concepts", "2", "--action-concepts", "2", "--seed", "5"],
        dir.path(),
    )
    .status
    .success());
    std::fs::write(
        dir.path().join("train.json"),
        r#"{"epochs": 3, "batch_size": 2, "holdout_fraction": 0.0, "optimizer": "sgd", "seed": 9}"#,
    )
    .unwrap();
    // --epochs overrides the file
    let out = camoe(
        &["train", "--data", "data", "--out", "run", "--config", "train.json", "--epochs", "1"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("1 epochs"));

    // unknown config keys are rejected
    std::fs::write(dir.path().join("bad.json"), r#"{"learning_rate": 1}"#).unwrap();
    let out = camoe(
        &["train", "--data", "data", "--out", "run2", "--config", "bad.json"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_record(&out)["error"], "format");
}

#[test]
fn ablation_mode_writes_per_mode_outputs() {
    let dir = tempfile::tempdir().unwrap();
    assert!(camoe(
        &["gen", "--out", "data", "--pairs", "6", "--dim", "8", "--frames", "2", "--tokens", "2",
          "--entity-concepts", "3", "--action-concepts", "2", "--noise", "0.1", "--seed", "6"],
        dir.path(),
    )
    .status
    .success());
    let out = camoe(
        &["train", "--data", "data", "--out", "ablate", "--mode", "ablation", "--epochs", "1",
          "--batch-size", "3", "--holdout-fraction", "0.34"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for mode in ["single-task", "mtac", "multi-gate", "camoe"] {
        assert!(dir.path().join("ablate").join(mode).join("model.camoe").exists());
        assert!(dir.path().join("ablate").join(mode).join("trainlog.jsonl").exists());
    }
    let text = String::from_utf8_lossy(&out.stdout);
    for mode in ["single-task", "mtac", "multi-gate", "camoe"] {
        assert!(text.contains(&format!("mode {mode}")));
    }
}

/// End-to-end version of the broad-caption rescue: an identity-acting model
/// (mean pooling everywhere, identity projections) evaluated through the
/// CLI must gain video-to-text R@1 from the dual-softmax correction on the
/// ambiguous dataset and never lose in either direction.
#[test]
fn eval_dsl_rescues_the_ambiguous_set_end_to_end() {
    use camoe_core::aggregation::AggregatorKind;
    use camoe_core::kernels::{Activation, DenseLayer, FfnParams};
    use camoe_core::model::{init_model, ModelConfig};
    use camoe_core::PerTask;

    let dir = tempfile::tempdir().unwrap();
    assert!(camoe(
        &["gen", "--out", "amb", "--pairs", "16", "--dim", "16", "--frames", "4", "--tokens",
          "4", "--entity-concepts", "8", "--action-concepts", "2", "--noise", "0",
          "--ambiguity", "0.5", "--seed", "7"],
        dir.path(),
    )
    .status
    .success());

    // identity-acting model: frame mean on the visual side, token mean on
    // the text side
    let d = 16;
    let mut cfg = ModelConfig::new(d, d, 4);
    cfg.expert_aggregators = PerTask::splat(AggregatorKind::MeanPool);
    cfg.gate_aggregator = AggregatorKind::MeanPool;
    let mut params = init_model(&cfg, 0).unwrap();
    let identity_ffn = || {
        let mut weight = vec![0.0; d * d];
        for k in 0..d {
            weight[k * d + k] = 1.0;
        }
        FfnParams {
            layers: vec![DenseLayer {
                weight,
                bias: vec![0.0; d],
                input_dim: d,
                output_dim: d,
                activation: Activation::Linear,
            }],
        }
    };
    for expert in params.experts.iter_mut() {
        expert.projection = identity_ffn();
    }
    params.text.projection = identity_ffn();
    camoe_cli::formats::persist_model(&dir.path().join("identity.camoe"), &cfg, &params).unwrap();

    let out = camoe(
        &["eval", "--model", "identity.camoe", "--data", "amb", "--dsl", "--temp", "100"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows: Vec<serde_json::Value> = String::from_utf8_lossy(&out.stdout)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let r1 = |direction: &str, dsl: bool| -> f64 {
        rows.iter()
            .find(|r| r["record"] == "metrics" && r["direction"] == direction && r["dsl"] == dsl)
            .and_then(|r| r["r1"].as_f64())
            .unwrap()
    };
    assert_eq!(r1("v2t", false), 0.5, "plain ranking loses the victim rows");
    assert_eq!(r1("v2t", true), 1.0, "the correction restores them");
    assert!(r1("t2v", true) >= r1("t2v", false));
}

#[test]
fn inspect_gates_rejects_ungated_models() {
    let dir = tempfile::tempdir().unwrap();
    assert!(camoe(
        &["gen", "--out", "data", "--pairs", "4", "--dim", "8", "--frames", "2", "--tokens", "2",
          "--entity-concepts", "2", "--action-concepts", "2", "--seed", "8"],
        dir.path(),
    )
    .status
    .success());
    assert!(camoe(
        &["train", "--data", "data", "--out", "run", "--epochs", "1", "--batch-size", "2",
          "--mode", "mtac"],
        dir.path(),
    )
    .status
    .success());
    let out = camoe(
        &["inspect-gates", "--model", "run/model.camoe", "--data", "data"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_record(&out)["error"], "engine");
}
