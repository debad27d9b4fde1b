//! Bit-exact on-disk formats.
//!
//! Dense embeddings travel in a small binary container; captions, manifests,
//! logs and models are line-delimited structured text so desk-scale runs
//! stay debuggable with a pager. Similarity matrices are CSV. Every writer
//! goes through an atomic temp-file rename and every format round-trips
//! byte for byte.

pub mod captions;
pub mod dataset_dir;
pub mod embedding;
pub mod manifest;
pub mod model_file;
pub mod simcsv;
pub mod train_config;
pub mod trainlog;
pub mod util;

pub use captions::{read_caption_file, write_caption_file, CaptionLine};
pub use dataset_dir::{load_dataset_dir, write_dataset_dir, DatasetFiles};
pub use embedding::EmbeddingFile;
pub use manifest::{read_manifest, write_manifest, Manifest, PairRecord};
pub use model_file::{load_model, persist_model, SavedModel};
pub use simcsv::{read_similarity_csv, write_similarity_csv};
pub use train_config::TrainFileConfig;
pub use trainlog::write_train_log;
