//! Dataset files and the synthetic task generator.

pub mod dataset;
pub mod synthetic;

pub use dataset::{emit_dataset, ingest_dataset, tokenize_question, IngestOptions};
pub use synthetic::{gen_synthetic, write_synthetic, SyntheticData, SyntheticSpec};
