//! Streaming anomaly detection with a fixed-size memory of recent normal records.
//!
//! Records are normalized with statistics of the memory's raw buffer, embedded
//! by a feature extractor, and scored by their discounted l1 distance to the
//! nearest memory embeddings. Records scoring below a threshold replace a
//! memory entry, so the reference set follows the stream as it drifts.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data_io;
pub mod datagen;
pub mod engine;
pub mod error;
pub mod evaluation;
pub mod extractor;
pub mod memory;
pub mod rng;
pub mod types;

pub use engine::{
    discounted_score, memory_size_bound, retrain_schedule, DriftBound, DriftBoundInputs, Engine, EventSink,
    ScoredEvent, StreamReport, StreamSummary,
};
pub use error::{Error, Result};
pub use extractor::{ExtractorModel, FeatureExtractor};
pub use memory::Memory;
pub use types::{
    AeHyperparams, Embedding, EngineConfig, ExtractorKind, NormalizationStats, RawRecord, ReplacementPolicy,
};
