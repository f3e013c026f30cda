#![allow(dead_code)]

pub mod oracle;

use std::path::PathBuf;

use memhop::model::{load_model_dir, Gpt2Weights, ModelConfig};

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests").join("fixtures")
}

pub fn tiny_fixture() -> Gpt2Weights {
    load_model_dir(fixtures().join("tiny_gpt2")).expect("tiny fixture loads")
}

pub fn tiny_config() -> ModelConfig {
    ModelConfig {
        n_layer: 2,
        n_head: 2,
        d_model: 8,
        d_mlp: 16,
        vocab_size: 11,
        n_ctx: 16,
        ln_eps: 1e-5,
    }
}

pub fn max_abs(a: &[f32], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "length mismatch");
    a.iter().zip(b).map(|(x, y)| (*x as f64 - y).abs()).fold(0.0, f64::max)
}

pub fn flat(m: &[Vec<f64>]) -> Vec<f64> {
    m.iter().flatten().copied().collect()
}

/// A small random model over a byte-level vocabulary with a few merges.
pub fn small_engine(seed: u64) -> memhop::Engine {
    let vocab = memhop::Vocabulary::byte_level(&[
        (" ", "t"),
        ("h", "e"),
        (" t", "he"),
        (" ", "a"),
        ("o", "n"),
        (" ", "o"),
        (" o", "f"),
        ("i", "s"),
        (" ", "is"),
    ])
    .unwrap();
    let config = ModelConfig {
        n_layer: 3,
        n_head: 2,
        d_model: 16,
        d_mlp: 32,
        vocab_size: vocab.len(),
        n_ctx: 96,
        ln_eps: 1e-5,
    };
    let weights = Gpt2Weights::random_scaled(config, seed, 0.3).unwrap();
    memhop::Engine::new(weights, vocab).unwrap()
}
