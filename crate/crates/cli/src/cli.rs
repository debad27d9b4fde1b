//! Command-line interface.
//!
//! Subcommands: `gen`, `train`, `eval`, `rerank`, `gradcheck`,
//! `inspect-gates`. Every run with fixed inputs and seed is bit-reproducible
//! including its logs; failures print one machine-parsable JSON error record
//! to stderr and exit nonzero.

use std::path::{Path, PathBuf};

use camoe_core::gradcheck::{self, InstanceShape};
use camoe_core::loss::LossConfig;
use camoe_core::model::{init_model, ModelConfig, ModelMode};
use camoe_core::retrieval::{self, Direction, EvalOptions};
use camoe_core::text::SentenceStrategy;
use camoe_core::trainer::{self, Optimizer, TrainConfig};
use clap::{Args, Parser, Subcommand};

use crate::error::{HarnessError, Result};
use crate::formats::{
    self, load_dataset_dir, load_model, persist_model, read_similarity_csv, write_similarity_csv,
    write_train_log, TrainFileConfig,
};
use crate::report;
use crate::synth::{self, SyntheticSpec};

#[derive(Parser)]
#[command(name = "camoe", version, about = "Gated multi-expert video-text retrieval over precomputed embeddings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic paired dataset directory.
    Gen(GenArgs),
    /// Train a model on a dataset directory.
    Train(TrainArgs),
    /// Evaluate a trained model: ranking metrics, optional dual-softmax
    /// correction, optional per-expert breakdown.
    Eval(EvalArgs),
    /// Apply dual-softmax correction to a similarity-matrix CSV.
    Rerank(RerankArgs),
    /// Verify reverse-mode gradients against central finite differences.
    Gradcheck(GradcheckArgs),
    /// Dump per-video gate weights and their mean.
    InspectGates(InspectGatesArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Output dataset directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 16)]
    pairs: usize,
    #[arg(long, default_value_t = 16)]
    dim: usize,
    #[arg(long, default_value_t = 4)]
    frames: usize,
    #[arg(long, default_value_t = 4)]
    tokens: usize,
    #[arg(long, default_value_t = 8)]
    entity_concepts: usize,
    #[arg(long, default_value_t = 4)]
    action_concepts: usize,
    /// Per-frame gaussian noise level.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Fraction of captions built as broad entity-only descriptions.
    #[arg(long, default_value_t = 0.0)]
    ambiguity: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset directory produced by `gen`.
    #[arg(long)]
    data: PathBuf,
    /// Output directory for the model and training log.
    #[arg(long)]
    out: PathBuf,
    /// JSON configuration file; command-line flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Architecture mode: single-task, mtac, multi-gate, camoe, or
    /// "ablation" to run all four under the same seed.
    #[arg(long, default_value = "camoe")]
    mode: String,
    /// Spot-check the applied gradient every N steps.
    #[arg(long)]
    gradcheck_every: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lr_heads: Option<f64>,
    #[arg(long)]
    lr_encoder: Option<f64>,
    #[arg(long)]
    holdout_fraction: Option<f64>,
    /// adam or sgd.
    #[arg(long)]
    optimizer: Option<String>,
    /// Train with the dual-softmax loss.
    #[arg(long)]
    dsl: bool,
    /// Dual-softmax prior temperature.
    #[arg(long)]
    temp: Option<f64>,
    /// Sentence generation strategy: muw, rkw or akwe.
    #[arg(long)]
    strategy: Option<String>,
}

#[derive(Args)]
struct EvalArgs {
    /// Model file written by `train`.
    #[arg(long)]
    model: PathBuf,
    /// Dataset directory.
    #[arg(long)]
    data: PathBuf,
    /// Also report dual-softmax-corrected metrics.
    #[arg(long)]
    dsl: bool,
    /// Prior temperature for the correction.
    #[arg(long, default_value_t = 100.0)]
    temp: f64,
    /// Report every expert's own similarity space.
    #[arg(long)]
    per_expert: bool,
    /// Restrict the prior normalization to blocks of this size (0 = full).
    #[arg(long, default_value_t = 0)]
    dsl_window: usize,
    /// Re-evaluate the correction at each of these temperatures.
    #[arg(long, value_delimiter = ',')]
    temp_sweep: Vec<f64>,
    /// Write records here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Dump the plain fusion similarity matrix as CSV.
    #[arg(long)]
    dump_sim: Option<PathBuf>,
}

#[derive(Args)]
struct RerankArgs {
    /// Similarity matrix CSV (rows = videos, columns = texts).
    #[arg(long)]
    sim: PathBuf,
    #[arg(long, default_value_t = 100.0)]
    temp: f64,
    /// t2v or v2t.
    #[arg(long)]
    direction: String,
    #[arg(long)]
    out: PathBuf,
    /// Restrict the prior normalization to blocks of this size (0 = full).
    #[arg(long, default_value_t = 0)]
    window: usize,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Comma-separated BxCxd shapes, e.g. 2x1x4,8x3x16. Defaults to the
    /// full verification grid.
    #[arg(long, value_delimiter = ',')]
    sizes: Vec<String>,
    #[arg(long, default_value_t = gradcheck::DEFAULT_TOL)]
    tol: f64,
    #[arg(long, default_value_t = gradcheck::DEFAULT_H)]
    step: f64,
}

#[derive(Args)]
struct InspectGatesArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Write records here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn run() {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => {}
        Err(e) => {
            let record = serde_json::json!({
                "error": e.kind(),
                "message": e.to_string(),
            });
            eprintln!("{record}");
            std::process::exit(1);
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen(args) => cmd_gen(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Rerank(args) => cmd_rerank(args),
        Command::Gradcheck(args) => cmd_gradcheck(args),
        Command::InspectGates(args) => cmd_inspect_gates(args),
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => formats::util::atomic_write(path, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_gen(args: GenArgs) -> Result<()> {
    let spec = SyntheticSpec {
        pairs: args.pairs,
        dim: args.dim,
        frames: args.frames,
        tokens: args.tokens,
        entity_concepts: args.entity_concepts,
        action_concepts: args.action_concepts,
        noise: args.noise,
        ambiguity: args.ambiguity,
        seed: args.seed,
    };
    let files = synth::generate_to_dir(&spec, &args.out)?;
    let marked = files.manifest.pairs.iter().filter(|p| p.ambiguous).count();
    println!(
        "wrote {} pairs (dim {}, {} frames, {} tokens, {marked} ambiguous) to {}",
        args.pairs,
        args.dim,
        args.frames,
        args.tokens,
        args.out.display()
    );
    Ok(())
}

fn parse_mode(s: &str) -> Result<ModelMode> {
    ModelMode::parse(s).ok_or_else(|| {
        HarnessError::InvalidArgument(format!(
            "unknown mode {s:?}; expected single-task, mtac, multi-gate or camoe"
        ))
    })
}

fn build_configs(args: &TrainArgs) -> Result<(TrainConfig, LossConfig)> {
    let mut tcfg = TrainConfig::default();
    let mut lcfg = LossConfig::default();
    if let Some(path) = &args.config {
        TrainFileConfig::read(path)?.apply(&mut tcfg, &mut lcfg)?;
    }
    if let Some(v) = args.epochs {
        tcfg.epochs = v;
    }
    if let Some(v) = args.batch_size {
        tcfg.batch_size = v;
    }
    if let Some(v) = args.seed {
        tcfg.seed = v;
    }
    if let Some(v) = args.lr_heads {
        tcfg.lr_heads = v;
    }
    if let Some(v) = args.lr_encoder {
        tcfg.lr_encoder = v;
    }
    if let Some(v) = args.holdout_fraction {
        tcfg.holdout_fraction = v;
    }
    if let Some(v) = &args.optimizer {
        tcfg.optimizer = Optimizer::parse(v)
            .ok_or_else(|| HarnessError::InvalidArgument(format!("unknown optimizer {v:?}")))?;
    }
    tcfg.gradcheck_every = args.gradcheck_every;
    if args.dsl {
        lcfg.dsl_enabled = true;
    }
    if let Some(v) = args.temp {
        lcfg.temperature = v;
    }
    Ok((tcfg, lcfg))
}

fn train_one(
    data: &camoe_core::dataset::Dataset,
    model_cfg: &ModelConfig,
    tcfg: &TrainConfig,
    lcfg: &LossConfig,
    out_dir: &Path,
) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| HarnessError::io(out_dir, e))?;
    let init = init_model(model_cfg, tcfg.seed)?;
    let (params, log) = trainer::train(data, model_cfg, init, tcfg, lcfg)?;
    persist_model(&out_dir.join("model.camoe"), model_cfg, &params)?;
    write_train_log(&out_dir.join("trainlog.jsonl"), &log)?;
    let last = log.final_epoch().expect("at least one epoch");
    println!(
        "mode {}: {} epochs, {} steps, final train loss {:.6}, train R@1 t2v {:.4} v2t {:.4}",
        model_cfg.mode.name(),
        log.epochs.len(),
        log.total_steps,
        last.train_loss,
        last.train_r1_t2v,
        last.train_r1_v2t
    );
    if let (Some(hl), Some(t2v), Some(v2t)) =
        (last.holdout_loss, last.holdout_r1_t2v, last.holdout_r1_v2t)
    {
        println!(
            "mode {}: final holdout loss {:.6}, holdout R@1 t2v {:.4} v2t {:.4}",
            model_cfg.mode.name(),
            hl,
            t2v,
            v2t
        );
    }
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let (data, _) = load_dataset_dir(&args.data)?;
    let (tcfg, lcfg) = build_configs(&args)?;
    let mut base_cfg = ModelConfig::new(data.dim(), data.token_dim(), data.max_frames());
    if let Some(s) = &args.strategy {
        base_cfg.strategy = SentenceStrategy::parse(s)
            .ok_or_else(|| HarnessError::InvalidArgument(format!("unknown strategy {s:?}")))?;
    }
    if args.mode == "ablation" {
        for mode in [
            ModelMode::SingleTask,
            ModelMode::Mtac,
            ModelMode::MultiGate,
            ModelMode::Camoe,
        ] {
            let model_cfg = base_cfg.clone().with_mode(mode);
            train_one(&data, &model_cfg, &tcfg, &lcfg, &args.out.join(mode.name()))?;
        }
        Ok(())
    } else {
        let model_cfg = base_cfg.with_mode(parse_mode(&args.mode)?);
        train_one(&data, &model_cfg, &tcfg, &lcfg, &args.out)
    }
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let saved = load_model(&args.model, None)?;
    let (data, _) = load_dataset_dir(&args.data)?;
    let mut text = String::new();
    let mut temps: Vec<Option<f64>> = Vec::new();
    if args.dsl {
        temps.push(Some(args.temp));
    }
    for t in &args.temp_sweep {
        temps.push(Some(*t));
    }
    if temps.is_empty() {
        temps.push(None);
    }
    for (i, dsl_temp) in temps.iter().enumerate() {
        let opts = EvalOptions {
            per_expert: args.per_expert,
            dsl_temp: *dsl_temp,
            dsl_window: args.dsl_window,
        };
        let mut rep = retrieval::evaluate(&saved.config, &saved.params, &data, &opts)?;
        if i > 0 {
            // plain rows are identical across sweep entries; keep them once
            rep.rows.retain(|r| r.dsl);
        }
        text.push_str(&report::render_eval_report(&rep));
    }
    emit(args.out.as_deref(), &text)?;
    if let Some(dump) = &args.dump_sim {
        let (mats, _) = retrieval::dataset_similarities(&saved.config, &saved.params, &data)?;
        let fusion = mats
            .iter()
            .find(|(t, _)| *t == camoe_core::TaskId::Fusion)
            .expect("fusion always evaluated");
        write_similarity_csv(dump, fusion.1.matrix())?;
    }
    Ok(())
}

fn cmd_rerank(args: RerankArgs) -> Result<()> {
    let direction = Direction::parse(&args.direction).ok_or_else(|| {
        HarnessError::InvalidArgument(format!(
            "unknown direction {:?}; expected t2v or v2t",
            args.direction
        ))
    })?;
    let s = read_similarity_csv(&args.sim)?;
    let corrected = retrieval::dsl_rerank_windowed(&s, args.temp, direction, args.window)?;
    write_similarity_csv(&args.out, &corrected)?;
    println!(
        "reranked {}x{} matrix ({}, temp {}) -> {}",
        corrected.rows(),
        corrected.cols(),
        direction.name(),
        args.temp,
        args.out.display()
    );
    Ok(())
}

fn parse_shape(s: &str) -> Result<InstanceShape> {
    let parts: Vec<&str> = s.split('x').collect();
    let invalid = || {
        HarnessError::InvalidArgument(format!(
            "bad size {s:?}; expected BxCxd such as 4x3x8"
        ))
    };
    if parts.len() != 3 {
        return Err(invalid());
    }
    let nums: Vec<usize> = parts
        .iter()
        .map(|p| p.parse().map_err(|_| invalid()))
        .collect::<Result<_>>()?;
    Ok(InstanceShape {
        batch: nums[0],
        frames: nums[1],
        dim: nums[2],
    })
}

fn cmd_gradcheck(args: GradcheckArgs) -> Result<()> {
    let shapes: Vec<InstanceShape> = if args.sizes.is_empty() {
        gradcheck::standard_shapes()
    } else {
        args.sizes
            .iter()
            .map(|s| parse_shape(s))
            .collect::<Result<_>>()?
    };
    let mut worst = 0.0f64;
    let mut failures = 0usize;
    for (i, &shape) in shapes.iter().enumerate() {
        for (label, lcfg) in [
            ("plain", LossConfig::default()),
            (
                "dsl",
                LossConfig {
                    dsl_enabled: true,
                    ..LossConfig::default()
                },
            ),
            (
                "dsl-backprop-prior",
                LossConfig {
                    dsl_enabled: true,
                    dsl_backprop_prior: true,
                    ..LossConfig::default()
                },
            ),
        ] {
            let seed = args.seed.wrapping_add(i as u64 * 101);
            let inst = gradcheck::random_instance(
                shape,
                ModelMode::Camoe,
                SentenceStrategy::Muw,
                seed,
            )?;
            let rep = gradcheck::check(&inst.cfg, &inst.params, &inst.batch, &lcfg, args.step)?;
            let ok = rep.passed(args.tol);
            if !ok {
                failures += 1;
            }
            worst = worst.max(rep.max_rel_err);
            println!(
                "shape {}x{}x{} seed {} loss {label}: params {} max_rel_err {:.3e} ({}) {}",
                shape.batch,
                shape.frames,
                shape.dim,
                inst.seed,
                rep.n_checked,
                rep.max_rel_err,
                rep.worst_param,
                if ok { "ok" } else { "FAIL" }
            );
        }
    }
    println!(
        "checked {} instances x 3 loss configs, worst rel err {:.3e}, tolerance {:.1e}",
        shapes.len(),
        worst,
        args.tol
    );
    if failures > 0 {
        return Err(HarnessError::CheckFailed(format!(
            "{failures} gradient checks exceeded tolerance {:.1e} (worst {:.3e})",
            args.tol, worst
        )));
    }
    Ok(())
}

fn cmd_inspect_gates(args: InspectGatesArgs) -> Result<()> {
    let saved = load_model(&args.model, None)?;
    let (data, _) = load_dataset_dir(&args.data)?;
    let report = retrieval::gate_report(&saved.config, &saved.params, &data)?;
    emit(args.out.as_deref(), &report::render_gate_report(&report))
}
