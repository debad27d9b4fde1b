//! Operational shell around the retrieval engine: file formats, synthetic
//! data generation, training/evaluation commands and report emission.

pub mod cli;
pub mod error;
pub mod formats;
pub mod report;
pub mod synth;

pub use cli::run;
