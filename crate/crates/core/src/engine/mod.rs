//! The streaming loop: embed, query memory, score, gate the update.
//!
//! For each record `x`:
//!
//! 1. normalize with the statistics of the raw records backing memory;
//! 2. embed, `z = f(x)`;
//! 3. fetch the `K` nearest memory embeddings under l1, distances `R_1 <= .. <= R_K`;
//! 4. score `sum gamma^(i-1) R_i / sum gamma^(i-1)` (with `0^0 = 1`);
//! 5. if `score < beta`, replace a memory entry with `(z, x)` and recompute the
//!    statistics from the updated raw buffer.

pub mod bound;

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::time::{Duration, Instant};

pub use bound::{memory_size_bound, DriftBound, DriftBoundInputs};

use crate::error::{Error, Result};
use crate::extractor::{check_architecture, train_extractor, ArchitectureCheck, ExtractorModel, FeatureExtractor};
use crate::memory::{Memory, Neighbour};
use crate::rng::{derive_seed, tag};
use crate::types::{EngineConfig, Embedding, NormalizationStats, RawRecord};

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredEvent {
    pub index: usize,
    pub score: f64,
    pub memory_updated: bool,
    /// The `K` raw l1 distances, ascending.
    pub neighbour_distances: Vec<f64>,
}

#[inline]
fn discounted(distances: &[f64], gamma: f64) -> f64 {
    let mut weight = 1.0;
    let mut num = 0.0;
    let mut den = 0.0;
    for &r in distances {
        num += weight * r;
        den += weight;
        weight *= gamma;
    }
    num / den
}

/// Exponentially weighted mean of ascending neighbour distances.
pub fn discounted_score(distances: &[f64], gamma: f64) -> Result<f64> {
    if distances.is_empty() {
        return Err(Error::config("no neighbour distances to score"));
    }
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::config(format!("gamma must be in [0, 1], got {gamma}")));
    }
    Ok(discounted(distances, gamma))
}

/// Positions `floor(j S / (k + 1))`, `j = 1..=k`, before which the extractor is retrained.
pub fn retrain_schedule(stream_size: usize, k: usize) -> Vec<usize> {
    (1..=k)
        .map(|j| ((j as u128 * stream_size as u128) / (k as u128 + 1)) as usize)
        .collect()
}

/// Receives events as they are produced.
pub trait EventSink {
    fn emit(&mut self, event: &ScoredEvent) -> Result<()>;
}

impl EventSink for Vec<ScoredEvent> {
    fn emit(&mut self, event: &ScoredEvent) -> Result<()> {
        self.push(event.clone());
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct RejectedRecord {
    /// Position within the processed sequence.
    pub position: usize,
    pub index: usize,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct RetrainEvent {
    /// Number of stream records processed before this retraining.
    pub position: usize,
    pub duration: Duration,
    /// Set when training failed and the previous extractor was kept.
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default)]
pub struct StreamSummary {
    pub processed: usize,
    pub updates: usize,
    pub rejected: Vec<RejectedRecord>,
    pub retrains: Vec<RetrainEvent>,
    pub elapsed: Duration,
}

impl StreamSummary {
    pub fn retrain_time(&self) -> Duration {
        self.retrains.iter().map(|r| r.duration).sum()
    }
}

#[derive(Debug, Clone, Default)]
pub struct StreamReport {
    pub events: Vec<ScoredEvent>,
    pub summary: StreamSummary,
}

impl StreamReport {
    pub fn scores(&self) -> Vec<f64> {
        self.events.iter().map(|e| e.score).collect()
    }
}

#[derive(Debug, Clone)]
pub struct Engine {
    config: EngineConfig,
    input_dim: usize,
    stats: NormalizationStats,
    extractor: ExtractorModel,
    memory: Memory,
    retrains: u64,
    init_duration: Duration,
    norm_buf: Vec<f64>,
    emb_buf: Vec<f64>,
    neighbours: Vec<Neighbour>,
}

impl Engine {
    /// Trains the extractor on `training` (exactly `N` records) and fills memory
    /// with their embeddings in arrival order.
    ///
    /// A `poison` record, when given, takes slot 0 after the fill. It inherits
    /// slot 0's insertion stamp unless `config.poison_advances_cursor` is set.
    pub fn init(training: &[RawRecord], config: EngineConfig, poison: Option<&RawRecord>) -> Result<Self> {
        let start = Instant::now();
        config.validate()?;
        if training.len() != config.memory_size {
            return Err(Error::config(format!(
                "training subset must hold exactly N = {} records, got {}",
                config.memory_size,
                training.len()
            )));
        }
        let input_dim = training[0].dim();
        if let Some(bad) = training.iter().find(|r| r.dim() != input_dim) {
            return Err(Error::config(format!(
                "training record {} has {} features, expected {input_dim}",
                bad.index,
                bad.dim()
            )));
        }
        let embedding_dim = config.resolve_embedding_dim(input_dim)?;
        if let ArchitectureCheck::Warn(msg) = check_architecture(input_dim, embedding_dim) {
            log::warn!("{msg}");
        }

        let train_stats = NormalizationStats::from_records(training)?;
        let normalized = normalize_all(training, &train_stats);
        let extractor = train_extractor(
            config.extractor,
            &normalized,
            embedding_dim,
            &config.ae,
            derive_seed(config.seed, tag::EXTRACTOR, 0),
            None,
        )?;
        let embeddings = normalized.iter().map(|x| embed_with(&extractor, x));
        let memory = Memory::fill(
            embeddings.zip(training.iter().cloned()),
            config.policy,
            derive_seed(config.seed, tag::MEMORY, 0),
        )?;

        let mut engine = Self {
            input_dim,
            stats: train_stats,
            extractor,
            memory,
            retrains: 0,
            init_duration: Duration::ZERO,
            norm_buf: vec![0.0; input_dim],
            emb_buf: vec![0.0; embedding_dim],
            neighbours: Vec::with_capacity(config.neighbours),
            config,
        };
        if let Some(p) = poison {
            engine.check_dim(p)?;
            let z = engine.embed(p)?;
            let fresh = engine.config.poison_advances_cursor;
            engine.memory.overwrite(0, z, p.clone(), fresh)?;
            engine.stats = NormalizationStats::from_rows(engine.memory.raw_rows())?;
        }
        engine.init_duration = start.elapsed();
        Ok(engine)
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn stats(&self) -> &NormalizationStats {
        &self.stats
    }

    pub fn extractor(&self) -> &ExtractorModel {
        &self.extractor
    }

    pub fn memory(&self) -> &Memory {
        &self.memory
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn embedding_dim(&self) -> usize {
        self.emb_buf.len()
    }

    /// Wall time spent in [`Engine::init`].
    pub fn init_duration(&self) -> Duration {
        self.init_duration
    }

    fn check_dim(&self, record: &RawRecord) -> Result<()> {
        if record.dim() != self.input_dim {
            return Err(Error::config(format!(
                "record {} has {} features, stream has {}",
                record.index,
                record.dim(),
                self.input_dim
            )));
        }
        if record.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::config(format!("record {} has non-finite values", record.index)));
        }
        Ok(())
    }

    /// Embedding of `record` under the current statistics and extractor.
    pub fn embed(&self, record: &RawRecord) -> Result<Embedding> {
        self.check_dim(record)?;
        let mut x = vec![0.0; self.input_dim];
        self.stats.normalize_into(&record.values, &mut x);
        Ok(embed_with(&self.extractor, &x))
    }

    /// Score and ascending neighbour distances of `z` against the current
    /// memory, without touching any state.
    pub fn score_embedding(&self, z: &[f64]) -> Result<(f64, Vec<f64>)> {
        let mut nn = Vec::with_capacity(self.config.neighbours);
        self.memory.nearest_into(z, self.config.neighbours, &mut nn)?;
        let distances: Vec<f64> = nn.iter().map(|n| n.distance).collect();
        Ok((discounted(&distances, self.config.gamma), distances))
    }

    pub fn process_record(&mut self, record: &RawRecord) -> Result<ScoredEvent> {
        self.check_dim(record)?;
        self.stats.normalize_into(&record.values, &mut self.norm_buf);
        self.extractor.extract_into(&self.norm_buf, &mut self.emb_buf);
        self.memory
            .knn_query_into(&self.emb_buf, self.config.neighbours, &mut self.neighbours)?;
        let distances: Vec<f64> = self.neighbours.iter().map(|n| n.distance).collect();
        let score = discounted(&distances, self.config.gamma);
        let memory_updated = !self.config.freeze_memory && score < self.config.beta;
        if memory_updated {
            self.memory
                .replace(Embedding(self.emb_buf.clone()), record.clone())?;
            self.stats = NormalizationStats::from_rows(self.memory.raw_rows())?;
        }
        Ok(ScoredEvent {
            index: record.index,
            score,
            memory_updated,
            neighbour_distances: distances,
        })
    }

    /// Refreshes the statistics from the raw buffer, refits the extractor on the
    /// normalized buffer and re-embeds every memory entry. On training failure
    /// the previous extractor is kept and the error returned.
    pub fn retrain(&mut self) -> Result<()> {
        let index = self.retrains;
        self.retrains += 1;
        let stats = NormalizationStats::from_rows(self.memory.raw_rows())?;
        let normalized: Vec<Vec<f64>> = self
            .memory
            .entries()
            .iter()
            .map(|e| {
                let mut x = vec![0.0; self.input_dim];
                stats.normalize_into(&e.raw.values, &mut x);
                x
            })
            .collect();
        let warm = self.config.warm_start_retrain.then_some(&self.extractor);
        let extractor = train_extractor(
            self.config.extractor,
            &normalized,
            self.embedding_dim(),
            &self.config.ae,
            derive_seed(self.config.seed, tag::RETRAIN, index),
            warm,
        )?;
        for (slot, x) in normalized.iter().enumerate() {
            self.memory.set_embedding(slot, embed_with(&extractor, x));
        }
        self.extractor = extractor;
        self.stats = stats;
        Ok(())
    }

    /// Processes `records` in order, retraining per the schedule for
    /// `config.retrain_count`, and sends every event to `sink`. Records that
    /// fail validation are skipped and reported; only sink errors abort.
    pub fn run_stream_into(&mut self, records: &[RawRecord], sink: &mut dyn EventSink) -> Result<StreamSummary> {
        let start = Instant::now();
        let schedule = retrain_schedule(records.len(), self.config.retrain_count);
        let mut next = 0;
        let mut summary = StreamSummary::default();
        for (position, record) in records.iter().enumerate() {
            while next < schedule.len() && schedule[next] == position {
                summary.retrains.push(self.timed_retrain(position));
                next += 1;
            }
            match self.process_record(record) {
                Ok(event) => {
                    summary.processed += 1;
                    summary.updates += usize::from(event.memory_updated);
                    sink.emit(&event)?;
                }
                Err(e) => {
                    log::warn!("skipping record {}: {e}", record.index);
                    summary.rejected.push(RejectedRecord {
                        position,
                        index: record.index,
                        reason: e.to_string(),
                    });
                }
            }
        }
        while next < schedule.len() {
            summary.retrains.push(self.timed_retrain(records.len()));
            next += 1;
        }
        summary.elapsed = start.elapsed();
        Ok(summary)
    }

    pub fn run_stream(&mut self, records: &[RawRecord]) -> StreamReport {
        let mut events = Vec::with_capacity(records.len());
        let summary = self
            .run_stream_into(records, &mut events)
            .expect("collecting into a Vec cannot fail");
        StreamReport { events, summary }
    }

    fn timed_retrain(&mut self, position: usize) -> RetrainEvent {
        let start = Instant::now();
        let error = self.retrain().err().map(|e| {
            log::warn!("retraining at position {position} failed, keeping previous extractor: {e}");
            e.to_string()
        });
        RetrainEvent {
            position,
            duration: start.elapsed(),
            error,
        }
    }

    /// Hash of memory, statistics and extractor parameters.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.memory.fingerprint().hash(&mut h);
        self.stats.count.hash(&mut h);
        for v in self.stats.mean.iter().chain(&self.stats.std) {
            v.to_bits().hash(&mut h);
        }
        match &self.extractor {
            ExtractorModel::Identity(m) => m.dim.hash(&mut h),
            ExtractorModel::Pca(p) => {
                for v in p.components.iter().chain(&p.mean) {
                    v.to_bits().hash(&mut h);
                }
            }
            ExtractorModel::Autoencoder(a) => {
                for v in a.params() {
                    v.to_bits().hash(&mut h);
                }
            }
        }
        h.finish()
    }
}

fn normalize_all(records: &[RawRecord], stats: &NormalizationStats) -> Vec<Vec<f64>> {
    records
        .iter()
        .map(|r| {
            let mut x = vec![0.0; r.dim()];
            stats.normalize_into(&r.values, &mut x);
            x
        })
        .collect()
}

fn embed_with(extractor: &ExtractorModel, x: &[f64]) -> Embedding {
    let mut z = vec![0.0; extractor.output_dim()];
    extractor.extract_into(x, &mut z);
    Embedding(z)
}
