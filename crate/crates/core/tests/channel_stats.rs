//! Noise statistics of the channel and hard decoding against a brute-force
//! nearest-codeword search.

use irml_core::channel::{snr_to_noise_var, transmit, ChannelModel};
use irml_core::codec::{encode, EmbeddingTable};
use irml_core::decoder::{entity_symbols, hard_decode, symbol_error_rate};
use irml_core::kg::{EntityId, LayerAssignment};
use irml_core::rng::seeded;
use rand::Rng as _;

#[test]
fn noise_variance_at_zero_db() {
    let n = 100_000;
    let mut rng = seeded(5);
    let samples: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    // One 1-sample entity symbol per sample keeps the signal well formed.
    let table = EmbeddingTable::zeros(1, 1, 1);
    let mut signal = encode(&[EntityId(0)][..], &table).unwrap();
    signal.symbols = (0..n)
        .map(|i| irml_core::channel::Symbol {
            offset: i,
            ..signal.symbols[0]
        })
        .collect();
    signal.samples = samples;
    for seed in 0..3 {
        let rx = transmit(&signal, &ChannelModel::awgn(0.0, seed)).unwrap();
        let expected = snr_to_noise_var(0.0, signal.power()).unwrap();
        assert_eq!(rx.noise_var, expected);
        let noise: Vec<f64> = rx.signal.samples.iter().zip(&signal.samples).map(|(y, x)| y - x).collect();
        let mean = noise.iter().sum::<f64>() / n as f64;
        let var = noise.iter().map(|z| (z - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        // Sample variance of Gaussian noise has standard deviation σ²·√(2/(n−1)).
        let sd = expected * (2.0 / (n - 1) as f64).sqrt();
        assert!((var - expected).abs() <= 3.0 * sd, "seed {seed}: {var} vs {expected} ± {sd}");
    }
}

/// Independent nearest-codeword search: lowest id among the minimisers.
fn brute_force(y: &[f64], table: &EmbeddingTable) -> EntityId {
    let mut best = 0u32;
    let mut best_d = f64::INFINITY;
    for e in 0..table.num_entities() as u32 {
        let d: f64 = y.iter().zip(table.entity(EntityId(e))).map(|(a, b)| (a - b) * (a - b)).sum();
        if d < best_d {
            best_d = d;
            best = e;
        }
    }
    EntityId(best)
}

#[test]
fn hard_decode_matches_brute_force() {
    for seed in 0..10u64 {
        let mut table = EmbeddingTable::random(12, 2, 4, seed);
        table.normalize_entities();
        let mut rng = seeded(100 + seed);
        let truth: Vec<EntityId> = (0..300).map(|_| EntityId(rng.random_range(0..12))).collect();
        let signal = encode(&truth[..], &table).unwrap();
        for snr in [0.0, 4.0, 8.0] {
            let rx = transmit(&signal, &ChannelModel::awgn(snr, seed * 31 + snr as u64)).unwrap();
            let decoded = entity_symbols(&hard_decode(&rx.signal, &table, rx.gain).unwrap());
            let oracle: Vec<EntityId> = (0..truth.len())
                .map(|i| brute_force(rx.signal.symbol_samples(i), &table))
                .collect();
            assert_eq!(decoded, oracle);
            let report = symbol_error_rate(&decoded, &truth, &LayerAssignment::single(12)).unwrap();
            let errors = oracle.iter().zip(&truth).filter(|(a, b)| a != b).count();
            assert_eq!(report.overall.errors, errors);
            assert_eq!(report.overall.symbols, truth.len());
        }
    }
}
