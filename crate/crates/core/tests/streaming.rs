//! Engine-level properties over generated streams.

use driftmem_core::datagen::{generate_drifting_gaussian, generate_mean_shift, generate_syn, GaussianDriftParams, MeanShiftParams, SynParams};
use driftmem_core::rng::SeededRng;
use driftmem_core::{memory_size_bound, DriftBoundInputs, Engine, EngineConfig, ExtractorKind, RawRecord, ReplacementPolicy};
use proptest::prelude::*;

#[test]
fn drift_horizon_monte_carlo() {
    let inputs = DriftBoundInputs { sigma: 2.0, dim: 64, epsilon: 0.5, alpha: 0.5 };
    let bound = memory_size_bound(&inputs).unwrap();
    let tau = bound.horizon.ceil() as usize + 1;
    let trials = 1000;
    let mut hits = 0usize;
    for trial in 0..trials {
        let params = GaussianDriftParams {
            dim: inputs.dim,
            sigma: inputs.sigma,
            alpha: inputs.alpha,
            samples: tau + 1,
            seed: trial as u64,
            stale: None,
        };
        let recs = generate_drifting_gaussian(&params).unwrap();
        let mu = params.mean_at(0);
        let dist = |x: &[f64]| x.iter().zip(&mu).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        hits += usize::from(dist(&recs[0].values) <= inputs.radius() && dist(&recs[tau].values) > inputs.radius());
    }
    let p = bound.guarantee();
    let freq = hits as f64 / trials as f64;
    let se = (p * (1.0 - p) / trials as f64).sqrt();
    assert!(freq >= p - 3.0 * se, "frequency {freq} below {p} - 3 * {se}");
}

fn syn_stream(seed: u64, samples: usize) -> Vec<RawRecord> {
    generate_syn(&SynParams { samples, seed, ..Default::default() }).unwrap()
}

#[test]
fn gamma_zero_scores_equal_nearest_neighbour_scores() {
    let records = syn_stream(4, 3000);
    for extractor in [ExtractorKind::Identity, ExtractorKind::Autoencoder] {
        let base = EngineConfig { extractor, gamma: 0.0, seed: 4, ae: driftmem_core::AeHyperparams { epochs: 300, ..Default::default() }, ..Default::default() };
        let (training, stream) = records.split_at(base.memory_size);
        let run = |k| {
            let mut e = Engine::init(training, EngineConfig { neighbours: k, ..base.clone() }, None).unwrap();
            e.run_stream(stream).events
        };
        let one = run(1);
        for k in [2, 3, 8, 16] {
            let many = run(k);
            assert_eq!(one.len(), many.len());
            for (a, b) in one.iter().zip(&many) {
                assert_eq!(a.score.to_bits(), b.score.to_bits(), "K={k} at {}", a.index);
                assert_eq!(a.memory_updated, b.memory_updated);
            }
        }
    }
}

#[test]
fn equal_normalized_records_score_equally() {
    let records = syn_stream(9, 400);
    let config = EngineConfig { seed: 9, ae: driftmem_core::AeHyperparams { epochs: 200, ..Default::default() }, ..Default::default() };
    let (training, stream) = records.split_at(16);
    let mut engine = Engine::init(training, config, None).unwrap();
    engine.run_stream(&stream[..200]);
    for r in &stream[200..] {
        let twin = RawRecord { index: r.index + 100_000, label: Some(!r.is_anomalous()), ..r.clone() };
        let (a, b) = (engine.embed(r).unwrap(), engine.embed(&twin).unwrap());
        assert_eq!(a, b);
        assert_eq!(
            engine.score_embedding(&a.0).unwrap().0.to_bits(),
            engine.score_embedding(&b.0).unwrap().0.to_bits()
        );
    }
}

/// Mean score over the next `count` normal records, leaving `engine` untouched.
fn mean_normal_score(engine: &Engine, records: &[RawRecord], count: usize) -> f64 {
    let mut engine = engine.clone();
    let mut scores = Vec::new();
    for r in records {
        let e = engine.process_record(r).unwrap();
        if !r.is_anomalous() {
            scores.push(e.score);
            if scores.len() == count {
                break;
            }
        }
    }
    scores.iter().sum::<f64>() / scores.len() as f64
}

#[test]
fn retraining_on_drifted_half_lowers_normal_scores() {
    let mut pairs = Vec::new();
    for seed in 0..5u64 {
        let records = generate_mean_shift(&MeanShiftParams { seed, ..Default::default() }).unwrap();
        let config = EngineConfig { memory_size: 64, beta: 3.0, seed, ..Default::default() };
        let (training, stream) = records.split_at(64);
        let mut engine = Engine::init(training, config, None).unwrap();
        // Midway through a segment in the second half of the stream.
        let cut = 3250 - 64;
        engine.run_stream(&stream[..cut]);
        let rest = &stream[cut..];
        let b = mean_normal_score(&engine, rest, 100);
        engine.retrain().unwrap();
        let a = mean_normal_score(&engine, rest, 100);
        pairs.push((b, a));
    }
    let before: f64 = pairs.iter().map(|p| p.0).sum();
    let after: f64 = pairs.iter().map(|p| p.1).sum();
    assert!(after <= before, "(before, after) per seed: {pairs:?}");
}

fn identity(n: usize, policy: ReplacementPolicy, beta: f64) -> EngineConfig {
    EngineConfig { memory_size: n, neighbours: 1, extractor: ExtractorKind::Identity, policy, beta, ..Default::default() }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    /// Replaying the accepted records reproduces the FIFO memory exactly.
    #[test]
    fn fifo_memory_is_last_n_accepted(
        n in 1usize..12,
        len in 0usize..120,
        beta in 0.05f64..3.0,
        seed in any::<u64>(),
    ) {
        let mut rng = SeededRng::new(seed);
        let records: Vec<RawRecord> = (0..n + len)
            .map(|i| RawRecord::new(i, vec![rng.normal(), 3.0 * rng.uniform()], None).unwrap())
            .collect();
        let (training, stream) = records.split_at(n);
        let mut engine = Engine::init(training, identity(n, ReplacementPolicy::Fifo, beta), None).unwrap();
        let report = engine.run_stream(stream);
        let mut accepted: Vec<usize> = training.iter().map(|r| r.index).collect();
        accepted.extend(report.events.iter().filter(|e| e.memory_updated).map(|e| e.index));
        let mut held: Vec<_> = engine.memory().entries().iter().map(|e| (e.inserted_at, e.raw.index)).collect();
        held.sort_unstable();
        let held: Vec<usize> = held.into_iter().map(|(_, i)| i).collect();
        prop_assert_eq!(&held[..], &accepted[accepted.len() - n..]);
    }

    #[test]
    fn updates_follow_the_strict_gate(
        policy in prop_oneof![Just(ReplacementPolicy::Fifo), Just(ReplacementPolicy::Lru), Just(ReplacementPolicy::Random)],
        beta in 0.0f64..2.0,
        seed in any::<u64>(),
    ) {
        let records = syn_stream(seed, 300);
        let (training, stream) = records.split_at(8);
        let mut engine = Engine::init(training, EngineConfig { seed, ..identity(8, policy, beta) }, None).unwrap();
        for e in engine.run_stream(stream).events {
            prop_assert_eq!(e.memory_updated, e.score < beta);
        }
    }
}
