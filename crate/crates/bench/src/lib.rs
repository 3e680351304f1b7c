//! Shared setup helpers for the pipeline benchmarks.

use confdbg_core::embed::EmbeddingVector;
use confdbg_core::synthbench::{gen_series, SpikeSeriesSpec};
use confdbg_core::telemetry::TelemetrySeries;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A seasonal series with one injected spike, sized like one exported
/// telemetry metric.
pub fn spiked_series(length: usize, period: usize, seed: u64) -> TelemetrySeries {
    let (series, _) = gen_series(&SpikeSeriesSpec {
        length,
        period,
        amplitude: 8.0,
        trend_slope: 0.005,
        noise_sigma: 1.0,
        spikes: vec![(length / 2, 15.0)],
        seed,
    });
    series
}

/// Uniform random vectors for index benchmarks.
pub fn random_vectors(count: usize, dim: usize, seed: u64) -> Vec<EmbeddingVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            EmbeddingVector::new((0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .expect("finite")
        })
        .collect()
}
