//! ROC-AUC, average precision, and the configuration sweep runner.

use std::fmt::Write as _;
use std::path::Path;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::engine::Engine;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, tag};
use crate::types::{EngineConfig, RawRecord};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricResult {
    pub metric: &'static str,
    pub value: f64,
    pub n_pos: usize,
    pub n_neg: usize,
}

fn check_inputs(metric: &'static str, scores: &[f64], labels: &[bool]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::UndefinedMetric {
            metric,
            reason: format!("{} scores but {} labels", scores.len(), labels.len()),
        });
    }
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(Error::UndefinedMetric { metric, reason: format!("score {i} is NaN") });
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric {
            metric,
            reason: format!("needs both classes, got {n_pos} positive and {n_neg} negative"),
        });
    }
    Ok((n_pos, n_neg))
}

/// Indices sorted by ascending score.
fn order(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    idx
}

/// Mann–Whitney: `P(s_pos > s_neg) + P(s_pos = s_neg) / 2`, over all pairs.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<MetricResult> {
    let (n_pos, n_neg) = check_inputs("roc_auc", scores, labels)?;
    let idx = order(scores);
    // Pairs won by positives: for each tie block, positives beat every
    // negative seen in lower blocks and draw with the block's negatives.
    let mut neg_below = 0u64;
    let mut twice_wins = 0u128;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j < idx.len() && scores[idx[j]] == scores[idx[i]] {
            j += 1;
        }
        let pos = idx[i..j].iter().filter(|&&k| labels[k]).count() as u64;
        let neg = (j - i) as u64 - pos;
        twice_wins += u128::from(pos) * u128::from(2 * neg_below + neg);
        neg_below += neg;
        i = j;
    }
    let value = twice_wins as f64 / (2.0 * n_pos as f64 * n_neg as f64);
    Ok(MetricResult { metric: "roc_auc", value, n_pos, n_neg })
}

/// Average precision `sum_k (R_k - R_{k-1}) P_k` over descending score
/// thresholds, each group of tied scores entering as one step.
pub fn auc_pr(scores: &[f64], labels: &[bool]) -> Result<MetricResult> {
    let (n_pos, n_neg) = check_inputs("auc_pr", scores, labels)?;
    let mut idx = order(scores);
    idx.reverse();
    let (mut tp, mut seen) = (0usize, 0usize);
    let mut value = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j < idx.len() && scores[idx[j]] == scores[idx[i]] {
            j += 1;
        }
        let block_pos = idx[i..j].iter().filter(|&&k| labels[k]).count();
        tp += block_pos;
        seen += j - i;
        if block_pos > 0 {
            value += (block_pos as f64 / n_pos as f64) * (tp as f64 / seen as f64);
        }
        i = j;
    }
    Ok(MetricResult { metric: "auc_pr", value, n_pos, n_neg })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    RocAuc,
    AucPr,
}

impl Metric {
    pub fn compute(self, scores: &[f64], labels: &[bool]) -> Result<MetricResult> {
        match self {
            Metric::RocAuc => roc_auc(scores, labels),
            Metric::AucPr => auc_pr(scores, labels),
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "auc" | "rocauc" | "roc" => Ok(Metric::RocAuc),
            "aucpr" | "ap" | "pr" => Ok(Metric::AucPr),
            other => Err(Error::config(format!("unknown metric '{other}'"))),
        }
    }
}

/// Outcome of one engine run over a labelled stream.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub scores: Vec<f64>,
    pub labels: Vec<bool>,
    pub updates: usize,
    pub roc_auc: Option<f64>,
    pub auc_pr: Option<f64>,
    /// Initialization (training) time.
    pub init_time: Duration,
    /// Streaming time, retraining included.
    pub stream_time: Duration,
    pub retrain_time: Duration,
}

/// Trains on the first `N` records, scores the rest, and computes both metrics
/// when the scored part has both classes.
pub fn evaluate_run(records: &[RawRecord], config: &EngineConfig, poison: Option<&RawRecord>) -> Result<RunOutcome> {
    let n = config.memory_size;
    if records.len() <= n {
        return Err(Error::config(format!(
            "stream of {} records leaves nothing to score after N = {n}",
            records.len()
        )));
    }
    let (training, stream) = records.split_at(n);
    let mut engine = Engine::init(training, config.clone(), poison)?;
    let report = engine.run_stream(stream);
    let labels: Vec<bool> = report
        .events
        .iter()
        .map(|e| stream[e.index - stream[0].index].is_anomalous())
        .collect();
    let scores = report.scores();
    Ok(RunOutcome {
        roc_auc: roc_auc(&scores, &labels).ok().map(|m| m.value),
        auc_pr: auc_pr(&scores, &labels).ok().map(|m| m.value),
        updates: report.summary.updates,
        init_time: engine.init_duration(),
        stream_time: report.summary.elapsed,
        retrain_time: report.summary.retrain_time(),
        scores,
        labels,
    })
}

#[derive(Debug, Clone)]
pub struct GridCell {
    pub name: String,
    pub config: EngineConfig,
}

#[derive(Debug, Clone)]
pub struct CellResult {
    pub cell: usize,
    pub name: String,
    pub config: EngineConfig,
    pub roc_auc: Option<f64>,
    pub auc_pr: Option<f64>,
    pub wall_time: Duration,
    pub error: Option<String>,
}

/// One run per cell; cell `i` gets seed `derive_seed(master_seed, CELL, i)`.
/// Cells run in parallel, results come back in cell order, and a failing cell
/// is recorded without stopping the others.
pub fn run_benchmark(records: &[RawRecord], grid: &[GridCell], master_seed: u64) -> Result<Vec<CellResult>> {
    if grid.is_empty() {
        return Err(Error::config("benchmark grid is empty"));
    }
    Ok(grid
        .par_iter()
        .enumerate()
        .map(|(i, cell)| {
            let mut config = cell.config.clone();
            config.seed = derive_seed(master_seed, tag::CELL, i as u64);
            let start = Instant::now();
            let outcome = evaluate_run(records, &config, None);
            let wall_time = start.elapsed();
            let (roc_auc, auc_pr, error) = match outcome {
                Ok(o) => {
                    let err = o.roc_auc.is_none().then(|| "scored records lack one class".to_string());
                    (o.roc_auc, o.auc_pr, err)
                }
                Err(e) => (None, None, Some(e.to_string())),
            };
            CellResult { cell: i, name: cell.name.clone(), config, roc_auc, auc_pr, wall_time, error }
        })
        .collect())
}

/// Replacement policies plus a frozen memory.
pub fn policy_grid(base: &EngineConfig) -> Vec<GridCell> {
    use crate::types::ReplacementPolicy::*;
    let mut cells = vec![GridCell {
        name: "none".into(),
        config: EngineConfig { freeze_memory: true, ..base.clone() },
    }];
    for p in [Lru, Random, Fifo] {
        cells.push(GridCell {
            name: p.name().into(),
            config: EngineConfig { policy: p, freeze_memory: false, ..base.clone() },
        });
    }
    cells
}

/// Memory sizes `2^lo ..= 2^hi`.
pub fn memory_grid(base: &EngineConfig, lo: u32, hi: u32) -> Vec<GridCell> {
    (lo..=hi)
        .map(|e| GridCell {
            name: format!("N={}", 1usize << e),
            config: EngineConfig { memory_size: 1 << e, ..base.clone() },
        })
        .collect()
}

pub fn gamma_grid(base: &EngineConfig, gammas: &[f64]) -> Vec<GridCell> {
    gammas
        .iter()
        .map(|&g| GridCell { name: format!("gamma={g}"), config: EngineConfig { gamma: g, ..base.clone() } })
        .collect()
}

pub fn beta_grid(base: &EngineConfig, betas: &[f64]) -> Vec<GridCell> {
    betas
        .iter()
        .map(|&b| GridCell { name: format!("beta={b}"), config: EngineConfig { beta: b, ..base.clone() } })
        .collect()
}

pub fn extractor_grid(base: &EngineConfig) -> Vec<GridCell> {
    use crate::types::ExtractorKind::*;
    [Identity, Pca, Autoencoder]
        .into_iter()
        .map(|k| GridCell {
            name: k.name().into(),
            config: EngineConfig {
                extractor: k,
                embedding_dim: if k == Autoencoder { base.embedding_dim } else { None },
                ..base.clone()
            },
        })
        .collect()
}

const COLUMNS: [&str; 16] = [
    "cell", "name", "extractor", "embedding_dim", "memory_size", "neighbours", "gamma", "beta", "policy",
    "freeze_memory", "retrain_count", "epochs", "seed", "roc_auc", "auc_pr", "seconds",
];

fn row(r: &CellResult) -> Vec<String> {
    let c = &r.config;
    let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"));
    vec![
        r.cell.to_string(),
        r.name.clone(),
        c.extractor.name().into(),
        c.embedding_dim.map_or_else(|| "auto".into(), |d| d.to_string()),
        c.memory_size.to_string(),
        c.neighbours.to_string(),
        c.gamma.to_string(),
        c.beta.to_string(),
        c.policy.name().into(),
        c.freeze_memory.to_string(),
        c.retrain_count.to_string(),
        c.ae.epochs.to_string(),
        c.seed.to_string(),
        opt(r.roc_auc),
        opt(r.auc_pr),
        format!("{:.3}", r.wall_time.as_secs_f64()),
    ]
}

/// Results CSV: stable column order plus a trailing `error` column.
pub fn write_benchmark_csv(results: &[CellResult], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let wrap = |e: csv::Error| Error::Format(format!("{}: {e}", path.display()));
    w.write_record(COLUMNS.iter().copied().chain(["error"])).map_err(wrap)?;
    for r in results {
        let mut fields = row(r);
        fields.push(r.error.clone().unwrap_or_default());
        w.write_record(&fields).map_err(wrap)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn format_benchmark_table(results: &[CellResult]) -> String {
    let rows: Vec<Vec<String>> = results.iter().map(row).collect();
    let widths: Vec<usize> = (0..COLUMNS.len())
        .map(|j| rows.iter().map(|r| r[j].len()).chain([COLUMNS[j].len()]).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    let line = |out: &mut String, cells: &[&str]| {
        let parts: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect();
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(&mut out, &COLUMNS);
    for (r, res) in rows.iter().zip(results) {
        let cells: Vec<&str> = r.iter().map(String::as_str).collect();
        line(&mut out, &cells);
        if let Some(e) = &res.error {
            let _ = writeln!(out, "    cell {} failed: {e}", res.cell);
        }
    }
    out
}
