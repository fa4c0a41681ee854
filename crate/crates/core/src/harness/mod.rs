//! End-to-end driver: feature files, synthetic corpora, encoder training
//! and persistence, indexing and evaluation reports.

mod codec;
pub mod format;
pub mod model;
pub mod pipeline;
pub mod store;
pub mod synth;

pub use format::{ingest, FeatureFile};
pub use model::{train_encoder, EncoderModel, EncoderParams};
pub use pipeline::{
    encode_file, evaluate_encoder, map_labels, run_pipeline, EncoderResult, EvalReport, RunConfig, StageTimings,
};
pub use store::{IndexFile, SignatureFile};
pub use synth::{synth_corpus, SynthConfig};
