//! Video-text retrieval scoring engine.
//!
//! Builds per-task video representations from frame features through a
//! mixture of aggregation experts with a softmax gate, encodes captions
//! through keyword-masking strategies, scores pairs by cosine similarity and
//! trains the whole stack with a symmetric contrastive loss, optionally
//! corrected by dual-softmax priors. All gradients are exact reverse-mode
//! derivatives, checked against central finite differences.

pub mod aggregation;
pub mod dataset;
pub mod error;
pub mod gradcheck;
pub mod kernels;
pub mod loss;
pub mod model;
pub mod moe;
pub mod par;
pub mod retrieval;
pub mod rng;
pub mod scalar;
pub mod tape;
pub mod task;
pub mod tensor;
pub mod text;
pub mod trainer;

pub use error::{CoreError, Result};
pub use task::{PerTask, TaskId};
pub use tensor::{Matrix, Tensor3, Vector};
