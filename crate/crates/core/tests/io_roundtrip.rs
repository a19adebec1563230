use std::time::{Duration, Instant};

use driftmem_core::data_io::{load_dataset, read_scores, write_dataset, write_scores, DatasetSchema};
use driftmem_core::datagen::{generate_drift_scenario, generate_mean_shift, DriftScenarioParams, MeanShiftParams};
use driftmem_core::extractor::container::{decode_extractor, encode_extractor, load_extractor, save_extractor};
use driftmem_core::{Engine, EngineConfig, ExtractorKind, ExtractorModel, Memory, ScoredEvent};

fn trained(kind: ExtractorKind) -> Engine {
    let records = generate_mean_shift(&MeanShiftParams { samples: 200, seed: 2, ..Default::default() }).unwrap();
    let config = EngineConfig {
        extractor: kind,
        memory_size: 32,
        seed: 2,
        ae: driftmem_core::AeHyperparams { epochs: 100, ..Default::default() },
        ..Default::default()
    };
    let mut engine = Engine::init(&records[..32], config, None).unwrap();
    engine.run_stream(&records[32..]);
    engine
}

#[test]
fn extractor_containers_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    for kind in [ExtractorKind::Identity, ExtractorKind::Pca, ExtractorKind::Autoencoder] {
        let engine = trained(kind);
        let bytes = encode_extractor(engine.extractor(), Some(engine.stats()));
        let (model, stats) = decode_extractor(&bytes).unwrap();
        assert_eq!(&model, engine.extractor());
        assert_eq!(stats.as_ref(), Some(engine.stats()));

        let path = dir.path().join(format!("{}.bin", kind.name()));
        save_extractor(&path, engine.extractor(), None).unwrap();
        let (model, stats) = load_extractor(&path).unwrap();
        assert_eq!(&model, engine.extractor());
        assert!(stats.is_none());
        assert!(matches!(
            (&model, kind),
            (ExtractorModel::Identity(_), ExtractorKind::Identity)
                | (ExtractorModel::Pca(_), ExtractorKind::Pca)
                | (ExtractorModel::Autoencoder(_), ExtractorKind::Autoencoder)
        ));
    }
}

#[test]
fn corrupted_containers_are_rejected() {
    let engine = trained(ExtractorKind::Pca);
    let bytes = encode_extractor(engine.extractor(), Some(engine.stats()));
    assert!(decode_extractor(&bytes[..bytes.len() - 1]).is_err());
    let mut bad_magic = bytes.clone();
    bad_magic[0] = b'X';
    assert!(decode_extractor(&bad_magic).is_err());
    let mut trailing = bytes;
    trailing.push(0);
    assert!(decode_extractor(&trailing).is_err());
    let memory_bytes = engine.memory().encode();
    assert!(decode_extractor(&memory_bytes).is_err(), "a memory container is not an extractor");
}

#[test]
fn memory_container_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let engine = trained(ExtractorKind::Autoencoder);
    let path = dir.path().join("memory.bin");
    engine.memory().save(&path).unwrap();
    let back = Memory::load(&path, engine.config().seed).unwrap();
    assert_eq!(back.entries(), engine.memory().entries());
    assert_eq!(back.fifo_cursor(), engine.memory().fifo_cursor());
}

#[test]
fn generated_datasets_round_trip_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let spec = DriftScenarioParams::default().scaled(3000);
    let sets = [
        generate_drift_scenario(&spec).unwrap(),
        generate_mean_shift(&MeanShiftParams { samples: 700, seed: 5, ..Default::default() }).unwrap(),
    ];
    for (i, records) in sets.iter().enumerate() {
        let path = dir.path().join(format!("set{i}.csv"));
        write_dataset(&path, records).unwrap();
        let loaded = load_dataset(&path, &DatasetSchema::default()).unwrap();
        assert_eq!(loaded.records.len(), records.len());
        for (a, b) in loaded.records.iter().zip(records) {
            assert_eq!(a.index, b.index);
            assert_eq!(a.label, b.label);
            let bits = |r: &driftmem_core::RawRecord| r.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(a), bits(b));
        }
    }
}

fn events(n: usize) -> Vec<ScoredEvent> {
    let mut x = 0.3f64;
    (0..n)
        .map(|i| {
            // Awkward mantissas: a chaotic logistic sequence scaled across magnitudes.
            x = 3.99 * x * (1.0 - x);
            ScoredEvent {
                index: i + 16,
                score: x * 10f64.powi((i % 9) as i32 - 4),
                memory_updated: i % 3 == 0,
                neighbour_distances: Vec::new(),
            }
        })
        .collect()
}

#[test]
fn scores_round_trip_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scores.csv");
    write_scores(&[], &path).unwrap();
    assert_eq!(std::fs::read_to_string(&path).unwrap(), "index,score,updated\n");

    let evs = events(5000);
    write_scores(&evs, &path).unwrap();
    let rows = read_scores(&path).unwrap();
    assert_eq!(rows.len(), evs.len());
    for (r, e) in rows.iter().zip(&evs) {
        assert_eq!((r.index, r.score.to_bits(), r.updated), (e.index, e.score.to_bits(), e.memory_updated));
    }
}

#[test]
fn million_scores_within_budget() {
    let dir = tempfile::tempdir().unwrap();
    let evs = events(1_000_000);
    let start = Instant::now();
    write_scores(&evs, &dir.path().join("big.csv")).unwrap();
    let took = start.elapsed();
    assert!(took < Duration::from_secs(10), "writing 10^6 scores took {took:?}");
}
