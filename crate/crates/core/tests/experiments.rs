mod common;

use common::small_engine;
use memhop::datasets::{PartOfSpeech, PosLexicon, PromptPair, Source};
use memhop::experiments::{
    best_cell, curated_sweep, dataset_stats, pos_sweep, random_injection_eval, robust_mean, SweepSettings,
};
use memhop::injection::{MemoryBasis, PositionPolicy};
use memhop::percent_difference;
use proptest::prelude::*;

fn pair(id: &str, multi: &str, answer: &str, memory: &str) -> PromptPair {
    PromptPair {
        id: id.into(),
        single_hop: format!("{memory} is"),
        multi_hop: multi.into(),
        answer: answer.into(),
        memory: memory.into(),
        source: Source::Hand,
    }
}

fn pairs() -> Vec<PromptPair> {
    vec![
        pair("p0", "the sea is on the", "island", "the reef"),
        pair("p1", "one of the", "one", "a son"),
        pair("p2", "is the son of", "the", "the god"),
        pair("p3", "on a", "sea", "the one"),
        pair("p4", "the sea of the", "sea", "is on"),
    ]
}

fn lexicon() -> PosLexicon {
    let words = |ws: &[&str]| ws.iter().map(|w| w.to_string()).collect::<Vec<_>>();
    PosLexicon::from_lists([
        (PartOfSpeech::Conjunctions, words(&["and", "or", "but"])),
        (PartOfSpeech::Nouns, words(&["sea", "son", "island", "god"])),
        (PartOfSpeech::Verbs, words(&["is", "run", "sit"])),
    ])
}

#[test]
fn grid_has_one_cell_per_site() {
    let engine = small_engine(1);
    let settings = SweepSettings::new(vec![0, 1, 2], vec![1.0, 2.0, 3.0, 4.0]);
    let out = curated_sweep(&engine, &pairs(), &settings).unwrap();
    assert_eq!(out.cells.len(), 12);
    assert_eq!(out.records.len(), 5 * 12);
    for c in &out.cells {
        assert_eq!(c.n_used + c.n_excluded + c.n_undefined, 5);
    }
    assert!(out.best().is_some());
    assert_eq!(best_cell(&out.cells), out.best());
}

#[test]
fn zero_tau_sweep_is_all_zero() {
    let engine = small_engine(2);
    let out = curated_sweep(&engine, &pairs(), &SweepSettings::new(vec![0, 1, 2], vec![0.0])).unwrap();
    for c in &out.cells {
        assert_eq!(c.mean_pct, 0.0);
        assert_eq!(c.std_pct, 0.0);
        assert_eq!(c.n_excluded, 0);
    }
}

#[test]
fn records_recompute_their_percent_difference() {
    let engine = small_engine(3);
    let mut settings = SweepSettings::new(vec![1, 2], vec![2.0, 7.5]);
    settings.policy = PositionPolicy::Last;
    let out = curated_sweep(&engine, &pairs(), &settings).unwrap();
    for r in &out.records {
        let again = percent_difference(r.pre_prob, r.post_prob).unwrap();
        let stored = r.pct_diff.unwrap();
        assert!((again - stored).abs() <= 1e-9 * again.abs().max(1.0));
        assert_eq!(r.policy, PositionPolicy::Last);
    }
}

#[test]
fn sweep_does_not_depend_on_prompt_order() {
    let engine = small_engine(4);
    let settings = SweepSettings::new(vec![0, 2], vec![1.0, 5.0]);
    let forward = curated_sweep(&engine, &pairs(), &settings).unwrap();
    let mut reversed_pairs = pairs();
    reversed_pairs.reverse();
    let reversed = curated_sweep(&engine, &reversed_pairs, &settings).unwrap();
    assert_eq!(forward.cells, reversed.cells);
}

#[test]
fn failing_prompts_are_skipped_not_fatal() {
    let engine = small_engine(5);
    let mut ps = pairs();
    ps.push(pair("too-long", &"the sea ".repeat(100), "sea", "reef"));
    let out = curated_sweep(&engine, &ps, &SweepSettings::new(vec![1], vec![1.0])).unwrap();
    assert_eq!(out.failures.len(), 1);
    assert_eq!(out.failures[0].pair_id, "too-long");
    assert_eq!(out.records.len(), 5);
}

#[test]
fn bad_settings_are_rejected() {
    let engine = small_engine(6);
    assert!(curated_sweep(&engine, &pairs(), &SweepSettings::new(vec![3], vec![1.0])).is_err());
    assert!(curated_sweep(&engine, &pairs(), &SweepSettings::new(vec![0], vec![-1.0])).is_err());
    assert!(curated_sweep(&engine, &[], &SweepSettings::new(vec![0], vec![1.0])).is_err());
}

#[test]
fn outputs_are_written() {
    let engine = small_engine(7);
    let out = curated_sweep(&engine, &pairs(), &SweepSettings::new(vec![0, 1], vec![1.0, 2.0])).unwrap();
    let dir = tempfile::tempdir().unwrap();
    out.write(dir.path(), serde_json::json!({"dataset": "test"})).unwrap();
    let grid = std::fs::read_to_string(dir.path().join("grid.csv")).unwrap();
    let mut lines = grid.lines();
    assert_eq!(lines.next().unwrap(), "layer,tau,mean_pct,std_pct,n_used,n_excluded,n_undefined");
    assert_eq!(lines.count(), 4);
    let records = std::fs::read_to_string(dir.path().join("records.jsonl")).unwrap();
    assert_eq!(records.lines().count(), 20);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert!(summary["best"]["mean_pct"].is_number());
    assert_eq!(summary["extra"]["dataset"], "test");
}

#[test]
fn random_eval_with_zero_tau_changes_nothing() {
    let engine = small_engine(8);
    let out = random_injection_eval(&engine, &pairs(), &lexicon(), 1, 0.0, 3, PositionPolicy::All, MemoryBasis::Unembedding)
        .unwrap();
    assert_eq!(out.per_pos.len(), 3);
    for s in &out.per_pos {
        assert_eq!(s.mean_pct, 0.0);
        assert_eq!(s.words.len(), 3);
    }
    assert!(out.records.iter().filter(|r| r.memory == "and").all(|r| r.pct_diff == Some(0.0)));
    assert_eq!(out.records.len(), 5 * 9);
}

#[test]
fn random_eval_uses_the_most_frequent_words() {
    let engine = small_engine(9);
    let out = random_injection_eval(&engine, &pairs(), &lexicon(), 2, 3.0, 2, PositionPolicy::All, MemoryBasis::Unembedding)
        .unwrap();
    assert_eq!(out.summary(PartOfSpeech::Nouns).unwrap().words, ["sea", "son"]);
    assert!(random_injection_eval(&engine, &pairs(), &lexicon(), 2, 3.0, 4, PositionPolicy::All, MemoryBasis::Unembedding)
        .is_err());
}

#[test]
fn pos_sweep_is_seeded() {
    let engine = small_engine(10);
    let settings = SweepSettings::new(vec![0, 2], vec![1.0, 4.0]);
    let a = pos_sweep(&engine, &pairs(), &lexicon(), &settings, 7).unwrap();
    let b = pos_sweep(&engine, &pairs(), &lexicon(), &settings, 7).unwrap();
    let c = pos_sweep(&engine, &pairs(), &lexicon(), &settings, 8).unwrap();
    assert_eq!(a.records, b.records);
    let words = |o: &memhop::experiments::PosSweepOutput| o.records.iter().map(|r| r.memory.clone()).collect::<Vec<_>>();
    assert_ne!(words(&a), words(&c));
    for g in &a.grids {
        assert_eq!(g.cells.len(), 4);
        assert_eq!(g.by_layer.len(), 2);
        assert_eq!(g.by_tau.len(), 2);
        assert!(g.overall.is_some());
    }
    let lex = lexicon();
    for r in &a.records {
        let pos = r.pos.unwrap();
        assert!(lex.words(pos).unwrap().contains(&r.memory));
    }
    let dir = tempfile::tempdir().unwrap();
    a.write(dir.path(), serde_json::Value::Null).unwrap();
    assert!(dir.path().join("marginals.csv").is_file());
}

#[test]
fn stats_count_tokens_and_average_probabilities() {
    let engine = small_engine(11);
    let ps = pairs();
    let stats = dataset_stats(&engine, &ps).unwrap();
    assert_eq!(stats.size, 5);
    let expected_len =
        ps.iter().map(|p| engine.vocab().encode(&p.multi_hop).len()).sum::<usize>() as f64 / ps.len() as f64;
    assert!((stats.multi_hop.prompt_len - expected_len).abs() < 1e-12);
    let probs: Vec<f64> = ps
        .iter()
        .map(|p| engine.answer_probability(&p.single_hop, &p.answer).unwrap() as f64)
        .collect();
    let mean = probs.iter().sum::<f64>() / probs.len() as f64;
    assert!((stats.single_hop.answer_prob - mean).abs() < 1e-12);
    let nat = probs.iter().map(|p| -p.ln()).sum::<f64>() / probs.len() as f64;
    assert!((stats.single_hop.surprisal_nat - nat).abs() < 1e-9);
    assert!((stats.single_hop.surprisal_bits - nat / std::f64::consts::LN_2).abs() < 1e-9);
}

proptest! {
    #[test]
    fn robust_mean_is_order_free(mut values in prop::collection::vec(-1e3f64..1e3, 1..60), seed in any::<u64>()) {
        let a = robust_mean(&values).unwrap();
        let n = values.len();
        let mut s = seed;
        for i in (1..n).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            values.swap(i, (s >> 33) as usize % (i + 1));
        }
        let b = robust_mean(&values).unwrap();
        prop_assert_eq!(a, b);
        prop_assert_eq!(a.n_used + a.n_excluded, n);
    }

    #[test]
    fn constant_inputs_exclude_nothing(v in -1e6f64..1e6, n in 1usize..100) {
        let r = robust_mean(&vec![v; n]).unwrap();
        prop_assert_eq!(r.n_excluded, 0);
        prop_assert!((r.mean - v).abs() <= 1e-12 * v.abs().max(1.0));
    }
}
