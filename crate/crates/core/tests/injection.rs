mod common;

use common::small_engine;
use memhop::injection::{
    build_memory_vector, inject_vector, memory_tokens, memory_vector_from_tokens, run_with_injection, InjectionHook,
    InjectionSpec, MemoryBasis, PositionPolicy,
};
use memhop::model::{forward, next_token_logits};
use memhop::tensor::softmax;
use memhop::Error;
use proptest::prelude::*;

#[test]
fn single_token_memory_is_its_embedding_row() {
    let engine = small_engine(1);
    let w = engine.weights();
    let tokens = memory_tokens(engine.vocab(), "the").unwrap();
    assert_eq!(tokens.len(), 1, "\" the\" is one merged token");
    let m = build_memory_vector(w, engine.vocab(), "the").unwrap();
    assert_eq!(m.q(), 1);
    assert_eq!(m.b_star.as_slice(), w.wte.row(tokens[0] as usize));
}

#[test]
fn repeated_tokens_are_counted() {
    let engine = small_engine(2);
    let tokens = memory_tokens(engine.vocab(), "the the").unwrap();
    assert_eq!(tokens.len(), 2);
    let m = memory_vector_from_tokens(engine.weights(), &tokens, MemoryBasis::Unembedding).unwrap();
    assert_eq!(m.counts.len(), 1);
    assert_eq!(m.counts[&tokens[0]], 2);
    assert_eq!(m.counts.values().sum::<u32>() as usize, m.q());
}

#[test]
fn memory_vector_is_the_sum_of_token_rows() {
    let engine = small_engine(3);
    let w = engine.weights();
    let m = build_memory_vector(w, engine.vocab(), "The Great Barrier Reef").unwrap();
    let mut oracle = vec![0.0f64; 16];
    for &t in &m.tokens {
        for (acc, v) in oracle.iter_mut().zip(w.wte.row(t as usize)) {
            *acc += *v as f64;
        }
    }
    for (a, b) in m.b_star.iter().zip(&oracle) {
        assert!((*a as f64 - b).abs() < 1e-6);
    }
    assert_eq!(m.counts.values().sum::<u32>() as usize, m.q());
}

#[test]
fn folded_basis_centres_and_scales() {
    let engine = small_engine(4);
    let w = engine.weights();
    let tokens = memory_tokens(engine.vocab(), "sea").unwrap();
    let raw = memory_vector_from_tokens(w, &tokens, MemoryBasis::Unembedding).unwrap();
    let folded = memory_vector_from_tokens(w, &tokens, MemoryBasis::FoldedUnembedding).unwrap();
    let v = w.config.vocab_size as f64;
    for i in 0..16 {
        let mean: f64 = (0..w.config.vocab_size).map(|t| w.wte.get(t, i) as f64).sum::<f64>() / v;
        let want = (raw.b_star[i] as f64 - tokens.len() as f64 * mean) * w.lnf_gamma[i] as f64;
        assert!((folded.b_star[i] as f64 - want).abs() < 1e-5);
    }
}

#[test]
fn empty_memory_is_rejected() {
    let engine = small_engine(5);
    assert!(matches!(build_memory_vector(engine.weights(), engine.vocab(), ""), Err(Error::Argument(_))));
    assert!(matches!(build_memory_vector(engine.weights(), engine.vocab(), "   "), Err(Error::Argument(_))));
}

#[test]
fn bad_sites_are_rejected() {
    let engine = small_engine(6);
    let tokens = engine.encode_prompt("the sea").unwrap();
    let w = engine.weights();
    let v = engine.vocab();
    assert!(run_with_injection(w, v, &tokens, &InjectionSpec::new("sea", 3, 1.0)).is_err());
    assert!(run_with_injection(w, v, &tokens, &InjectionSpec::new("sea", 0, -1.0)).is_err());
    assert!(run_with_injection(w, v, &tokens, &InjectionSpec::new("sea", 0, f32::NAN)).is_err());
}

#[test]
fn pre_distribution_is_the_clean_run() {
    let engine = small_engine(7);
    let tokens = engine.encode_prompt("is the one of").unwrap();
    let clean = softmax(&next_token_logits(engine.weights(), &tokens, None).unwrap());
    for layer in 0..3 {
        let r = run_with_injection(engine.weights(), engine.vocab(), &tokens, &InjectionSpec::new("sea", layer, 2.0)).unwrap();
        assert_eq!(r.pre, clean);
        assert_ne!(r.post, clean);
    }
}

#[test]
fn activation_delta_is_tau_times_the_memory() {
    let engine = small_engine(8);
    let w = engine.weights();
    let tokens = engine.encode_prompt("the sea of").unwrap();
    let m = build_memory_vector(w, engine.vocab(), "on the").unwrap();
    let tau = 3.5f32;
    for policy in [PositionPolicy::All, PositionPolicy::Last] {
        let hook = InjectionHook {
            layer: 1,
            tau,
            vector: &m.b_star,
            policy,
        };
        let clean = forward(w, &tokens, None).unwrap();
        let hooked = forward(w, &tokens, Some(&hook)).unwrap();
        assert_eq!(clean.layers[0].attn_out, hooked.layers[0].attn_out);
        let delta = hooked.layers[1].attn_out.sub(&clean.layers[1].attn_out).unwrap();
        let n = tokens.len();
        for r in 0..n {
            let injected = policy == PositionPolicy::All || r == n - 1;
            for (d, v) in delta.row(r).iter().zip(&m.b_star) {
                let want = if injected { tau * v } else { 0.0 };
                assert!((d - want).abs() < 1e-5, "row {r}: {d} vs {want}");
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn zero_tau_is_a_no_op(seed in 0u64..1000, layer in 0usize..3, last in any::<bool>(), prompt in "[a-z ]{1,20}") {
        prop_assume!(!prompt.trim().is_empty());
        let engine = small_engine(seed);
        let tokens = engine.encode_prompt(&prompt).unwrap();
        let policy = if last { PositionPolicy::Last } else { PositionPolicy::All };
        let m = build_memory_vector(engine.weights(), engine.vocab(), "the sea").unwrap();
        let r = inject_vector(engine.weights(), &tokens, layer, 0.0, &m.b_star, policy).unwrap();
        let diff = r.pre.iter().zip(&r.post).map(|(a, b)| (a - b).abs()).fold(0.0f32, f32::max);
        prop_assert!(diff < 1e-6);
    }
}
