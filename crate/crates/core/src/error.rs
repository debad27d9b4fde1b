use thiserror::Error;

/// Errors produced by the numeric engine.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("dimension mismatch in {op}: {detail}")]
    DimensionMismatch { op: &'static str, detail: String },

    #[error("{op} requires a non-empty input")]
    EmptyInput { op: &'static str },

    #[error("non-finite value encountered in {op}")]
    NonFinite { op: &'static str },

    #[error("zero-norm vector passed to {op}")]
    DegenerateInput { op: &'static str },

    #[error("video has no frames")]
    EmptyVideo,

    #[error("video has {frames} frames but the position table holds {capacity}")]
    FrameCapacity { frames: usize, capacity: usize },

    #[error("caption {caption_id} has no active tokens for the {task} task")]
    EmptyKeywords { caption_id: String, task: &'static str },

    #[error("mode {mode} is inconsistent with the supplied parameters: {detail}")]
    ModeMismatch { mode: String, detail: String },

    #[error("batch mismatch: {detail}")]
    BatchMismatch { detail: String },

    #[error("training diverged at step {step}: {detail}")]
    Diverged { step: usize, detail: String },

    #[error("gradient check failed at step {step}: max rel err {max_rel_err:.3e} on {param}")]
    GradcheckFailed {
        step: usize,
        max_rel_err: f64,
        param: String,
    },

    #[error("invalid configuration: {detail}")]
    InvalidConfig { detail: String },
}

pub type Result<T> = std::result::Result<T, CoreError>;
