//! Domain types shared by every stage of the pipeline.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower bound applied to per-feature standard deviations before dividing.
pub const SIGMA_FLOOR: f64 = 1e-8;

/// One observation from the stream.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    pub index: usize,
    pub values: Vec<f64>,
    /// Ground truth, `true` for anomalous, when the source carries labels.
    pub label: Option<bool>,
}

impl RawRecord {
    /// Builds a record, rejecting empty or non-finite feature vectors.
    pub fn new(index: usize, values: Vec<f64>, label: Option<bool>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::config(format!("record {index} has no features")));
        }
        if let Some(j) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::config(format!(
                "record {index} feature {j} is not finite ({})",
                values[j]
            )));
        }
        Ok(Self {
            index,
            values,
            label,
        })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn is_anomalous(&self) -> bool {
        self.label == Some(true)
    }
}

impl AsRef<[f64]> for RawRecord {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(pub Vec<f64>);

impl Embedding {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Per-feature mean and population standard deviation of a set of raw records.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub count: usize,
}

impl NormalizationStats {
    /// Single-pass (Welford) mean and population standard deviation.
    pub fn from_rows<'a, I>(rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut rows = rows.into_iter();
        let first = rows
            .next()
            .ok_or_else(|| Error::InvalidState("cannot summarize an empty buffer".into()))?;
        let d = first.len();
        let mut mean = first.to_vec();
        let mut m2 = vec![0.0; d];
        let mut count = 1usize;
        for row in rows {
            if row.len() != d {
                return Err(Error::config(format!(
                    "buffer row has {} features, expected {d}",
                    row.len()
                )));
            }
            count += 1;
            let n = count as f64;
            for ((m, s), &x) in mean.iter_mut().zip(m2.iter_mut()).zip(row) {
                let delta = x - *m;
                *m += delta / n;
                *s += delta * (x - *m);
            }
        }
        let std = m2
            .into_iter()
            .map(|s| (s.max(0.0) / count as f64).sqrt())
            .collect();
        Ok(Self { mean, std, count })
    }

    pub fn from_records(records: &[RawRecord]) -> Result<Self> {
        Self::from_rows(records.iter().map(|r| r.values.as_slice()))
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Writes the normalized copy of `x` into `out`. Lengths must match `dim()`.
    #[inline]
    pub fn normalize_into(&self, x: &[f64], out: &mut [f64]) {
        for (((o, &v), &m), &s) in out.iter_mut().zip(x).zip(&self.mean).zip(&self.std) {
            *o = (v - m) / s.max(SIGMA_FLOOR);
        }
    }
}

/// `(x_j - mean_j) / max(std_j, SIGMA_FLOOR)`, keeping label and index.
pub fn normalize(record: &RawRecord, stats: &NormalizationStats) -> Result<RawRecord> {
    if record.dim() != stats.dim() {
        return Err(Error::config(format!(
            "record {} has {} features, statistics have {}",
            record.index,
            record.dim(),
            stats.dim()
        )));
    }
    let mut values = vec![0.0; record.dim()];
    stats.normalize_into(&record.values, &mut values);
    Ok(RawRecord {
        index: record.index,
        values,
        label: record.label,
    })
}

/// Recomputes `stats` from scratch over `raw_buffer`.
pub fn update_stats(
    stats: &NormalizationStats,
    raw_buffer: &[RawRecord],
) -> Result<NormalizationStats> {
    let fresh = NormalizationStats::from_records(raw_buffer)?;
    if fresh.dim() != stats.dim() {
        return Err(Error::config(format!(
            "buffer has {} features, statistics have {}",
            fresh.dim(),
            stats.dim()
        )));
    }
    Ok(fresh)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractorKind {
    Identity,
    Pca,
    Autoencoder,
}

impl ExtractorKind {
    pub fn name(self) -> &'static str {
        match self {
            ExtractorKind::Identity => "identity",
            ExtractorKind::Pca => "pca",
            ExtractorKind::Autoencoder => "autoencoder",
        }
    }
}

impl std::str::FromStr for ExtractorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "identity" => Ok(Self::Identity),
            "pca" => Ok(Self::Pca),
            "autoencoder" | "ae" => Ok(Self::Autoencoder),
            other => Err(Error::config(format!("unknown extractor '{other}'"))),
        }
    }
}

/// Which memory slot gives way when a new embedding is admitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplacementPolicy {
    /// Earliest inserted entry.
    Fifo,
    /// Entry that least recently appeared in a nearest-neighbour result.
    Lru,
    /// Uniformly random slot.
    Random,
}

impl ReplacementPolicy {
    pub fn name(self) -> &'static str {
        match self {
            ReplacementPolicy::Fifo => "fifo",
            ReplacementPolicy::Lru => "lru",
            ReplacementPolicy::Random => "rr",
        }
    }

    pub(crate) fn tag(self) -> u8 {
        match self {
            ReplacementPolicy::Fifo => 0,
            ReplacementPolicy::Lru => 1,
            ReplacementPolicy::Random => 2,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Self::Fifo),
            1 => Some(Self::Lru),
            2 => Some(Self::Random),
            _ => None,
        }
    }
}

impl std::str::FromStr for ReplacementPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fifo" => Ok(Self::Fifo),
            "lru" => Ok(Self::Lru),
            "rr" | "random" => Ok(Self::Random),
            other => Err(Error::config(format!("unknown policy '{other}'"))),
        }
    }
}

/// Autoencoder training hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AeHyperparams {
    pub learning_rate: f64,
    pub epochs: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    /// Standard deviation of the additive Gaussian corruption, in normalized units.
    pub noise_std: f64,
}

impl Default for AeHyperparams {
    fn default() -> Self {
        Self {
            learning_rate: 1e-2,
            epochs: 5000,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            noise_std: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    /// Memory capacity `N`; also the size of the training subset.
    pub memory_size: usize,
    /// Neighbours `K` retrieved per query.
    pub neighbours: usize,
    /// Discount `gamma` applied to the i-th neighbour as `gamma^(i-1)`.
    pub gamma: f64,
    /// Update threshold `beta`; a record enters memory iff its score is below it.
    pub beta: f64,
    pub extractor: ExtractorKind,
    /// Embedding dimension `D`. `None` resolves to `2d` for the autoencoder,
    /// `min(d, 8)` for PCA and `d` for identity.
    pub embedding_dim: Option<usize>,
    pub policy: ReplacementPolicy,
    /// Disables memory updates entirely (the "no update" ablation).
    pub freeze_memory: bool,
    /// Number of extractor retrainings `k` spread uniformly over the stream.
    pub retrain_count: usize,
    /// Continue from the current weights on retraining instead of reinitializing.
    pub warm_start_retrain: bool,
    /// With a poisoned initialization, give the poison a fresh insertion stamp
    /// instead of inheriting slot 0's, so it is evicted last rather than first.
    pub poison_advances_cursor: bool,
    pub seed: u64,
    pub ae: AeHyperparams,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            memory_size: 16,
            neighbours: 3,
            gamma: 0.0,
            beta: 1.0,
            extractor: ExtractorKind::Autoencoder,
            embedding_dim: None,
            policy: ReplacementPolicy::Fifo,
            freeze_memory: false,
            retrain_count: 0,
            warm_start_retrain: false,
            poison_advances_cursor: false,
            seed: 0,
            ae: AeHyperparams::default(),
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.memory_size == 0 {
            return Err(Error::config("memory size must be positive"));
        }
        if self.neighbours == 0 || self.neighbours > self.memory_size {
            return Err(Error::config(format!(
                "neighbours must be in 1..={}, got {}",
                self.memory_size, self.neighbours
            )));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::config(format!(
                "gamma must be in [0, 1], got {}",
                self.gamma
            )));
        }
        if !(self.beta > 0.0) {
            return Err(Error::config(format!(
                "beta must be positive, got {}",
                self.beta
            )));
        }
        if self.embedding_dim == Some(0) {
            return Err(Error::config("embedding dimension must be positive"));
        }
        let ae = &self.ae;
        if !(ae.learning_rate > 0.0) || !ae.learning_rate.is_finite() {
            return Err(Error::config("learning rate must be positive"));
        }
        if !(0.0..1.0).contains(&ae.adam_beta1) || !(0.0..1.0).contains(&ae.adam_beta2) {
            return Err(Error::config("Adam betas must be in [0, 1)"));
        }
        if !(ae.noise_std >= 0.0) || !ae.noise_std.is_finite() {
            return Err(Error::config("noise std must be a finite non-negative number"));
        }
        Ok(())
    }

    pub fn resolve_embedding_dim(&self, input_dim: usize) -> Result<usize> {
        let dim = match (self.extractor, self.embedding_dim) {
            (ExtractorKind::Identity, Some(d)) if d != input_dim => {
                return Err(Error::config(format!(
                    "identity extractor needs D = d = {input_dim}, got {d}"
                )))
            }
            (ExtractorKind::Identity, _) => input_dim,
            (ExtractorKind::Pca, Some(d)) => d,
            (ExtractorKind::Pca, None) => input_dim.min(8),
            (ExtractorKind::Autoencoder, Some(d)) => d,
            (ExtractorKind::Autoencoder, None) => 2 * input_dim,
        };
        if self.extractor == ExtractorKind::Pca && dim > input_dim {
            return Err(Error::config(format!(
                "PCA cannot produce {dim} components from {input_dim} features"
            )));
        }
        Ok(dim)
    }
}
