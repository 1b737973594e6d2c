//! Shared workloads for the benchmarks in `benches/`.

use litset_core::biencoder::{BiEncoder, EncoderConfig};
use litset_core::synthetic::{generate, SyntheticCorpus, SyntheticSpec};

/// The default toy corpus: 30 frequent labels and 8 rare ones.
pub fn toy_corpus(seed: u64) -> SyntheticCorpus {
    generate(&SyntheticSpec {
        seed,
        ..Default::default()
    })
    .expect("default toy spec is valid")
}

pub fn encoder(hidden_size: usize) -> BiEncoder {
    BiEncoder::new(EncoderConfig {
        hidden_size,
        ..Default::default()
    })
    .expect("tiny encoder config is valid")
}
