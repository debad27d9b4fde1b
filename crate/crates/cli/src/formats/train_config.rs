//! Optional JSON training-configuration file for `camoe train --config`.
//! Every field has a default; command-line flags override file values.

use std::fs;
use std::path::Path;

use camoe_core::loss::LossConfig;
use camoe_core::trainer::{Optimizer, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainFileConfig {
    pub lr_heads: Option<f64>,
    pub lr_encoder: Option<f64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub seed: Option<u64>,
    /// "adam" or "sgd".
    pub optimizer: Option<String>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub adam_eps: Option<f64>,
    pub warmup_steps: Option<usize>,
    pub holdout_fraction: Option<f64>,
    pub dsl: Option<bool>,
    pub temperature: Option<f64>,
    pub dsl_backprop_prior: Option<bool>,
    pub dsl_literal_numerator: Option<bool>,
    pub logit_scale_trainable: Option<bool>,
}

impl TrainFileConfig {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| HarnessError::Format {
            path: path.to_path_buf(),
            offset: e.column() as u64,
            detail: e.to_string(),
        })
    }

    pub fn apply(&self, train: &mut TrainConfig, loss: &mut LossConfig) -> Result<()> {
        if let Some(v) = self.lr_heads {
            train.lr_heads = v;
        }
        if let Some(v) = self.lr_encoder {
            train.lr_encoder = v;
        }
        if let Some(v) = self.epochs {
            train.epochs = v;
        }
        if let Some(v) = self.batch_size {
            train.batch_size = v;
        }
        if let Some(v) = self.seed {
            train.seed = v;
        }
        if let Some(ref v) = self.optimizer {
            train.optimizer = Optimizer::parse(v)
                .ok_or_else(|| HarnessError::InvalidArgument(format!("unknown optimizer {v:?}")))?;
        }
        if let Some(v) = self.beta1 {
            train.beta1 = v;
        }
        if let Some(v) = self.beta2 {
            train.beta2 = v;
        }
        if let Some(v) = self.adam_eps {
            train.adam_eps = v;
        }
        if let Some(v) = self.warmup_steps {
            train.warmup_steps = Some(v);
        }
        if let Some(v) = self.holdout_fraction {
            train.holdout_fraction = v;
        }
        if let Some(v) = self.dsl {
            loss.dsl_enabled = v;
        }
        if let Some(v) = self.temperature {
            loss.temperature = v;
        }
        if let Some(v) = self.dsl_backprop_prior {
            loss.dsl_backprop_prior = v;
        }
        if let Some(v) = self.dsl_literal_numerator {
            loss.dsl_literal_numerator = v;
        }
        if let Some(v) = self.logit_scale_trainable {
            loss.logit_scale_trainable = v;
        }
        Ok(())
    }
}
