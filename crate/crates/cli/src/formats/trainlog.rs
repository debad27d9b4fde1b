//! Training logs as JSON lines, one record per epoch plus a trailing
//! summary record.

use std::path::Path;

use camoe_core::trainer::{EpochLog, TrainLog};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::formats::util::atomic_write;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "record")]
pub enum TrainLogLine {
    #[serde(rename = "epoch")]
    Epoch(EpochRecord),
    #[serde(rename = "summary")]
    Summary(SummaryRecord),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochRecord {
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

impl From<&EpochLog> for EpochRecord {
    fn from(e: &EpochLog) -> Self {
        EpochRecord {
            epoch: e.epoch,
            steps_done: e.steps_done,
            train_loss: e.train_loss,
            train_loss_fusion: e.train_loss_fusion,
            holdout_loss: e.holdout_loss,
            holdout_loss_fusion: e.holdout_loss_fusion,
            train_r1_t2v: e.train_r1_t2v,
            train_r1_v2t: e.train_r1_v2t,
            holdout_r1_t2v: e.holdout_r1_t2v,
            holdout_r1_v2t: e.holdout_r1_v2t,
            gate_mean: e.gate_mean.clone(),
            fallbacks: e.fallbacks,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub total_steps: usize,
    pub train_pairs: usize,
    pub holdout_pairs: usize,
}

pub fn render_train_log(log: &TrainLog) -> String {
    let mut out = String::new();
    for epoch in &log.epochs {
        let line = TrainLogLine::Epoch(EpochRecord::from(epoch));
        out.push_str(&serde_json::to_string(&line).expect("log serializes"));
        out.push('\n');
    }
    let summary = TrainLogLine::Summary(SummaryRecord {
        total_steps: log.total_steps,
        train_pairs: log.train_indices.len(),
        holdout_pairs: log.holdout_indices.len(),
    });
    out.push_str(&serde_json::to_string(&summary).expect("log serializes"));
    out.push('\n');
    out
}

pub fn write_train_log(path: &Path, log: &TrainLog) -> Result<()> {
    atomic_write(path, render_train_log(log).as_bytes())
}
