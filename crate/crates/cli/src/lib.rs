//! `driftmem` command-line front end. The binary is a thin wrapper around
//! [`run`], which tests can also call in-process.
//!
//! Exit codes: 0 success, 2 bad flags or parameter ranges, 3 I/O or malformed
//! input files, 4 extractor training diverged, 5 misaligned score/label files
//! or an undefined metric.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use driftmem_core::data_io::{
    self, load_dataset, write_dataset, CategoricalEncoding, DatasetSchema, LoadedDataset, ScoresWriter,
};
use driftmem_core::datagen::{
    generate_drift_scenario, generate_drifting_gaussian, generate_syn, DriftScenarioParams, GaussianDriftParams,
    SynParams, StaleAnomalies,
};
use driftmem_core::evaluation::{
    self, format_benchmark_table, run_benchmark, write_benchmark_csv, GridCell, Metric,
};
use driftmem_core::extractor::container::save_extractor;
use driftmem_core::{
    memory_size_bound, AeHyperparams, DriftBoundInputs, Engine, EngineConfig, Error, ExtractorKind, RawRecord,
    ReplacementPolicy,
};

#[derive(Debug, Parser)]
#[command(name = "driftmem", version, about = "Streaming anomaly detection with a drift-following memory")]
#[command(args_conflicts_with_subcommands = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic labelled stream as CSV.
    Generate {
        #[command(subcommand)]
        kind: GenerateKind,
    },
    /// Score a stream; the first N records train the extractor and fill memory.
    #[command(allow_negative_numbers = true)]
    Run(RunArgs),
    /// Compute a metric from a scores file and the labelled dataset it came from.
    #[command(allow_negative_numbers = true)]
    Eval(EvalArgs),
    /// Sweep a configuration grid over one dataset.
    #[command(allow_negative_numbers = true)]
    Bench(BenchArgs),
    /// Memory-size horizon for a Gaussian stream drifting at speed alpha.
    #[command(allow_negative_numbers = true)]
    Bound(BoundArgs),
}

#[derive(Debug, Args)]
struct SeedArg {
    /// Master seed; every random draw derives from it.
    #[arg(long, env = "DRIFTMEM_SEED", default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Subcommand)]
enum GenerateKind {
    /// Linear trend, two sinusoids, Gaussian noise and offset anomalies.
    #[command(allow_negative_numbers = true)]
    Syn {
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 2e-3)]
        slope: f64,
        /// Fraction of records turned into anomalies, in (0, 1).
        #[arg(long, default_value_t = 0.10)]
        anomaly_frac: f64,
        #[arg(long, default_value_t = 1.0)]
        noise_std: f64,
        #[command(flatten)]
        seed: SeedArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Piecewise drift scenario described by a TOML spec.
    #[command(allow_negative_numbers = true)]
    Drift {
        /// Scenario spec; defaults to the built-in scenario (scenarios/default_drift.toml).
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Stretch the scenario to this many records.
        #[arg(long)]
        length: Option<usize>,
        #[command(flatten)]
        seed: SeedArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Gaussian stream whose mean moves by alpha per step along the first axis.
    #[command(allow_negative_numbers = true)]
    Gaussian {
        #[arg(long, default_value_t = 2)]
        dim: usize,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        #[arg(long)]
        alpha: f64,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        /// Fraction of records replaced by draws from the distribution `stale_lag` steps back.
        #[arg(long)]
        stale_frac: Option<f64>,
        #[arg(long, default_value_t = 300)]
        stale_lag: usize,
        #[command(flatten)]
        seed: SeedArg,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PolicyArg {
    Fifo,
    Lru,
    Rr,
    /// Never update memory.
    None,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ExtractorArg {
    Identity,
    Pca,
    Autoencoder,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EncodingArg {
    OneHot,
    Binary,
}

#[derive(Debug, Args)]
struct SchemaArgs {
    /// Name of the 0/1 label column.
    #[arg(long, default_value = "label", conflicts_with = "no_label")]
    label: String,
    /// The input has no label column.
    #[arg(long)]
    no_label: bool,
    /// Categorical column (repeatable).
    #[arg(long = "categorical", value_name = "COLUMN")]
    categorical: Vec<String>,
    /// Column to skip (repeatable).
    #[arg(long = "ignore", value_name = "COLUMN")]
    ignore: Vec<String>,
    #[arg(long, value_enum, default_value_t = EncodingArg::OneHot)]
    encoding: EncodingArg,
    /// TOML schema sidecar; overrides the other schema flags.
    #[arg(long)]
    schema: Option<PathBuf>,
}

impl SchemaArgs {
    fn resolve(&self) -> Result<DatasetSchema, Error> {
        if let Some(path) = &self.schema {
            return DatasetSchema::from_file(path);
        }
        Ok(DatasetSchema {
            label: (!self.no_label).then(|| self.label.clone()),
            categorical: self.categorical.clone(),
            ignore: self.ignore.clone(),
            encoding: match self.encoding {
                EncodingArg::OneHot => CategoricalEncoding::OneHot,
                EncodingArg::Binary => CategoricalEncoding::Binary,
            },
        })
    }
}

#[derive(Debug, Args)]
struct EngineArgs {
    /// Memory size N (also the number of training records).
    #[arg(long, default_value_t = 16)]
    memory: usize,
    /// Neighbours K used in the score.
    #[arg(long, default_value_t = 3)]
    neighbours: usize,
    /// Discount gamma in [0, 1] over the K nearest distances.
    #[arg(long, default_value_t = 0.0)]
    gamma: f64,
    /// Update threshold beta: records scoring below it enter memory.
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long, value_enum, default_value_t = ExtractorArg::Autoencoder)]
    extractor: ExtractorArg,
    /// Embedding dimension D (default 2d for the autoencoder, min(d, 8) for PCA).
    #[arg(long)]
    embedding_dim: Option<usize>,
    #[arg(long, value_enum, default_value_t = PolicyArg::Fifo)]
    policy: PolicyArg,
    /// Number of extractor retrainings spread uniformly over the stream.
    #[arg(long = "retrain", default_value_t = 0)]
    retrain: usize,
    /// Continue from current weights when retraining.
    #[arg(long)]
    warm_start: bool,
    #[arg(long, default_value_t = 1e-2)]
    lr: f64,
    #[arg(long, default_value_t = 5000)]
    epochs: usize,
    #[arg(long, default_value_t = 0.9)]
    adam_beta1: f64,
    #[arg(long, default_value_t = 0.999)]
    adam_beta2: f64,
    /// Std of the training-time input corruption, in normalized units.
    #[arg(long, default_value_t = 0.1)]
    noise_std: f64,
    #[command(flatten)]
    seed: SeedArg,
}

impl EngineArgs {
    fn config(&self) -> EngineConfig {
        let (policy, freeze_memory) = match self.policy {
            PolicyArg::Fifo => (ReplacementPolicy::Fifo, false),
            PolicyArg::Lru => (ReplacementPolicy::Lru, false),
            PolicyArg::Rr => (ReplacementPolicy::Random, false),
            PolicyArg::None => (ReplacementPolicy::Fifo, true),
        };
        EngineConfig {
            memory_size: self.memory,
            neighbours: self.neighbours,
            gamma: self.gamma,
            beta: self.beta,
            extractor: match self.extractor {
                ExtractorArg::Identity => ExtractorKind::Identity,
                ExtractorArg::Pca => ExtractorKind::Pca,
                ExtractorArg::Autoencoder => ExtractorKind::Autoencoder,
            },
            embedding_dim: self.embedding_dim,
            policy,
            freeze_memory,
            retrain_count: self.retrain,
            warm_start_retrain: self.warm_start,
            poison_advances_cursor: false,
            seed: self.seed.seed,
            ae: AeHyperparams {
                learning_rate: self.lr,
                epochs: self.epochs,
                adam_beta1: self.adam_beta1,
                adam_beta2: self.adam_beta2,
                noise_std: self.noise_std,
            },
        }
    }
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    schema: SchemaArgs,
    #[command(flatten)]
    engine: EngineArgs,
    /// Put the first labelled anomaly after the training rows into memory slot 0.
    #[arg(long)]
    poison_first_anomaly: bool,
    /// Give the poison a fresh insertion stamp so FIFO evicts it last.
    #[arg(long, requires = "poison_first_anomaly")]
    poison_advances_cursor: bool,
    /// Scores CSV to write (index,score,updated).
    #[arg(long)]
    out: PathBuf,
    /// Save the final extractor and normalization statistics.
    #[arg(long)]
    save_model: Option<PathBuf>,
    /// Save the final memory snapshot.
    #[arg(long)]
    save_memory: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MetricArg {
    Auc,
    Aucpr,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    scores: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, value_enum, default_value_t = MetricArg::Auc)]
    metric: MetricArg,
    #[command(flatten)]
    schema: SchemaArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum GridArg {
    /// none, lru, rr, fifo
    Policy,
    /// N = 2^min_exp ..= 2^max_exp
    Memory,
    Gamma,
    Beta,
    /// identity, pca, autoencoder
    Extractor,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    schema: SchemaArgs,
    #[command(flatten)]
    engine: EngineArgs,
    #[arg(long, value_enum)]
    grid: GridArg,
    /// Values for the gamma or beta grid (comma separated).
    #[arg(long, value_delimiter = ',')]
    values: Vec<f64>,
    #[arg(long, default_value_t = 4)]
    min_exp: u32,
    #[arg(long, default_value_t = 10)]
    max_exp: u32,
    /// Results CSV; the aligned table always goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BoundArgs {
    #[arg(long)]
    sigma: f64,
    #[arg(long)]
    dim: usize,
    #[arg(long)]
    epsilon: f64,
    #[arg(long)]
    alpha: f64,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Config(_) | Error::InvalidState(_) | Error::AmbiguousActivation { .. } => 2,
            Error::Io { .. } | Error::Parse { .. } | Error::Format(_) => 3,
            Error::Diverged { .. } => 4,
            Error::UndefinedMetric { .. } => 5,
        };
        Failure { code, message: e.to_string() }
    }
}

type CliResult = Result<(), Failure>;

/// Parses `args` (program name first) and executes the subcommand. Returns
/// the process exit code; errors are reported on stderr.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests land here too, with exit code 0.
            let _ = e.print();
            return u8::try_from(e.exit_code()).unwrap_or(2);
        }
    };
    let outcome = match cli.command {
        Command::Generate { kind } => cmd_generate(kind),
        Command::Run(args) => cmd_run(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Bound(args) => cmd_bound(args),
    };
    match outcome {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn cmd_generate(kind: GenerateKind) -> CliResult {
    let (records, out) = match kind {
        GenerateKind::Syn { samples, slope, anomaly_frac, noise_std, seed, out } => {
            let params = SynParams {
                samples,
                slope,
                anomaly_fraction: anomaly_frac,
                noise_std,
                seed: seed.seed,
                ..Default::default()
            };
            (generate_syn(&params)?, out)
        }
        GenerateKind::Drift { spec, length, seed, out } => {
            let mut params = match spec {
                Some(path) => DriftScenarioParams::from_file(&path)?,
                None => DriftScenarioParams::default(),
            };
            if let Some(len) = length {
                params = params.scaled(len);
            }
            params.seed = seed.seed;
            (generate_drift_scenario(&params)?, out)
        }
        GenerateKind::Gaussian { dim, sigma, alpha, samples, stale_frac, stale_lag, seed, out } => {
            let params = GaussianDriftParams {
                dim,
                sigma,
                alpha,
                samples,
                seed: seed.seed,
                stale: stale_frac.map(|fraction| StaleAnomalies { fraction, lag: stale_lag }),
            };
            (generate_drifting_gaussian(&params)?, out)
        }
    };
    write_dataset(&out, &records)?;
    let anomalies = records.iter().filter(|r| r.is_anomalous()).count();
    println!("wrote {} records ({anomalies} labelled anomalous) to {}", records.len(), out.display());
    Ok(())
}

fn load(path: &Path, schema: &SchemaArgs) -> Result<LoadedDataset, Failure> {
    Ok(load_dataset(path, &schema.resolve()?)?)
}

fn cmd_run(args: RunArgs) -> CliResult {
    let dataset = load(&args.input, &args.schema)?;
    let mut config = args.engine.config();
    config.poison_advances_cursor = args.poison_advances_cursor;
    let n = config.memory_size;
    if dataset.records.len() < n {
        return Err(Error::Config(format!(
            "{} has {} records, fewer than the N = {n} needed for training",
            args.input.display(),
            dataset.records.len()
        ))
        .into());
    }
    let (training, stream) = dataset.records.split_at(n);
    let poison: Option<&RawRecord> = if args.poison_first_anomaly {
        Some(
            stream
                .iter()
                .find(|r| r.is_anomalous())
                .ok_or_else(|| Error::Config("no labelled anomaly to poison memory with".into()))?,
        )
    } else {
        None
    };

    let start = Instant::now();
    let mut engine = Engine::init(training, config, poison)?;
    let mut sink = ScoresWriter::create(&args.out)?;
    let mut events = Vec::new();
    struct Tee<'a> {
        file: &'a mut ScoresWriter,
        events: &'a mut Vec<(usize, f64)>,
    }
    impl driftmem_core::EventSink for Tee<'_> {
        fn emit(&mut self, e: &driftmem_core::ScoredEvent) -> driftmem_core::Result<()> {
            self.events.push((e.index, e.score));
            self.file.emit(e)
        }
    }
    let summary = engine.run_stream_into(stream, &mut Tee { file: &mut sink, events: &mut events })?;
    sink.finish()?;
    let elapsed = start.elapsed();

    if let Some(path) = &args.save_model {
        save_extractor(path, engine.extractor(), Some(engine.stats()))?;
    }
    if let Some(path) = &args.save_memory {
        engine.memory().save(path)?;
    }

    println!("training records: {n}");
    println!("scored records:   {}", summary.processed);
    println!("rejected records: {}", summary.rejected.len());
    println!("memory updates:   {}", summary.updates);
    for r in &summary.retrains {
        match &r.error {
            None => println!("retrain at stream position {} ({:.3} s)", r.position, r.duration.as_secs_f64()),
            Some(e) => println!("retrain at stream position {} failed, kept previous extractor: {e}", r.position),
        }
    }
    println!("wall time:        {:.3} s", elapsed.as_secs_f64());
    let labels: Option<Vec<bool>> = events
        .iter()
        .map(|(idx, _)| dataset.records[*idx].label)
        .collect();
    if let Some(labels) = labels {
        let scores: Vec<f64> = events.iter().map(|(_, s)| *s).collect();
        match evaluation::roc_auc(&scores, &labels) {
            Ok(m) => println!("roc_auc:          {:.6}", m.value),
            Err(e) => println!("roc_auc:          n/a ({e})"),
        }
    }
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> CliResult {
    let scores = data_io::read_scores(&args.scores)?;
    let dataset = load(&args.dataset, &args.schema)?;
    let labels = data_io::labels_by_index(&dataset)?;
    let metric = match args.metric {
        MetricArg::Auc => Metric::RocAuc,
        MetricArg::Aucpr => Metric::AucPr,
    };
    let mut y = Vec::with_capacity(scores.len());
    for row in &scores {
        match labels.get(&row.index) {
            Some(&l) => y.push(l),
            None => {
                return Err(Failure {
                    code: 5,
                    message: format!(
                        "scores and dataset are misaligned: index {} is not in {}",
                        row.index,
                        args.dataset.display()
                    ),
                })
            }
        }
    }
    let s: Vec<f64> = scores.iter().map(|r| r.score).collect();
    let m = metric.compute(&s, &y)?;
    println!("{:.6}", m.value);
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> CliResult {
    let dataset = load(&args.input, &args.schema)?;
    let base = args.engine.config();
    base.validate()?;
    let values = |default: &[f64]| if args.values.is_empty() { default.to_vec() } else { args.values.clone() };
    let grid: Vec<GridCell> = match args.grid {
        GridArg::Policy => evaluation::policy_grid(&base),
        GridArg::Memory => {
            if args.min_exp > args.max_exp || args.max_exp > 20 {
                return Err(Error::Config("need min_exp <= max_exp <= 20".into()).into());
            }
            evaluation::memory_grid(&base, args.min_exp, args.max_exp)
        }
        GridArg::Gamma => evaluation::gamma_grid(&base, &values(&[0.0, 0.25, 0.5, 0.75, 1.0])),
        GridArg::Beta => evaluation::beta_grid(&base, &values(&[0.1, 0.5, 1.0, 2.0, 5.0])),
        GridArg::Extractor => evaluation::extractor_grid(&base),
    };
    let results = run_benchmark(&dataset.records, &grid, base.seed)?;
    print!("{}", format_benchmark_table(&results));
    if let Some(path) = &args.out {
        write_benchmark_csv(&results, path)?;
    }
    Ok(())
}

fn cmd_bound(args: BoundArgs) -> CliResult {
    let b = memory_size_bound(&DriftBoundInputs {
        sigma: args.sigma,
        dim: args.dim,
        epsilon: args.epsilon,
        alpha: args.alpha,
    })?;
    println!("bound:       {:.6}", b.horizon);
    let p = b.guarantee();
    if p > 0.0 {
        println!("probability: {p:.6}");
    } else {
        println!("probability: {p:.6} (vacuous: d * epsilon^2 too small)");
    }
    Ok(())
}
