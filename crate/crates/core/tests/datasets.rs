use std::collections::HashSet;
use std::path::{Path, PathBuf};

use memhop::datasets::{
    generate_2wmh, load_prompt_pairs, load_triples, sample_pos_words, DatasetConfig, KnowledgeTriplePair,
    PartOfSpeech, PosLexicon, SampleMode, Source,
};
use memhop::{Error, Vocabulary};
use proptest::prelude::*;

fn repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn lexicon() -> PosLexicon {
    PosLexicon::load(repo().join("data/lexicon")).unwrap()
}

#[test]
fn golden_pairs_load() {
    let pairs = load_prompt_pairs(repo().join("data/golden_pairs.jsonl")).unwrap();
    assert_eq!(pairs.len(), 14);
    let first = &pairs[0];
    assert_eq!(first.single_hop, "George Washington fought in the");
    assert_eq!(first.multi_hop, "The first president of the United States fought in the");
    assert_eq!(first.answer, "Revolutionary War");
    assert_eq!(first.memory, "George Washington");
    assert_eq!(first.source, Source::Hand);
    assert_eq!(pairs.iter().filter(|p| p.source == Source::Wmh).count(), 5);
    let thor = pairs.iter().find(|p| p.memory == "Thor").unwrap();
    assert_eq!(thor.multi_hop, "The God of Thunder is the son of");
    assert_eq!(thor.answer, "Odin");
    for p in &pairs {
        assert!(!p.multi_hop.contains(&p.memory));
        assert_eq!(p.multi_hop.trim_end(), p.multi_hop);
    }
}

#[test]
fn empty_file_gives_no_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.jsonl");
    std::fs::write(&path, "").unwrap();
    assert!(load_prompt_pairs(&path).unwrap().is_empty());
}

#[test]
fn missing_answer_is_reported_with_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.jsonl");
    std::fs::write(
        &path,
        concat!(
            r#"{"single_hop": "a b", "multi_hop": "c d", "answer": "x", "memory": "m", "source": "hand"}"#,
            "\n\n",
            r#"{"single_hop": "a b", "multi_hop": "c d", "memory": "m", "source": "hand"}"#,
            "\n"
        ),
    )
    .unwrap();
    let err = load_prompt_pairs(&path).unwrap_err();
    match &err {
        Error::Dataset { line, message, .. } => {
            assert_eq!(*line, 3);
            assert!(message.contains("answer"), "{message}");
        }
        other => panic!("unexpected {other}"),
    }
    assert!(err.to_string().contains("bad.jsonl:3"));
}

#[test]
fn invariant_violations_are_line_addressed() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("leaky.jsonl");
    std::fs::write(
        &path,
        r#"{"single_hop": "Thor is", "multi_hop": "Thor, god of thunder, is", "answer": "Odin", "memory": "Thor", "source": "hand"}"#,
    )
    .unwrap();
    assert!(matches!(load_prompt_pairs(&path), Err(Error::Dataset { line: 1, .. })));
}

#[test]
fn surrounding_whitespace_is_trimmed_and_ids_filled() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ws.jsonl");
    std::fs::write(
        &path,
        r#"{"single_hop": "Thor is the son of ", "multi_hop": "The God of Thunder is the son of  ", "answer": " Odin", "memory": "Thor", "source": "hand"}"#,
    )
    .unwrap();
    let p = &load_prompt_pairs(&path).unwrap()[0];
    assert_eq!(p.multi_hop, "The God of Thunder is the son of");
    assert_eq!(p.answer, "Odin");
    assert_eq!(p.id, "ws-1");
}

#[test]
fn triples_load_and_validate() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.jsonl");
    std::fs::write(
        &path,
        r#"{"s1": "Lilli's Marriage", "r1": "director", "s2": "Jaap Speyer", "r2": "country of citizenship", "s3": "Dutch"}
{"s1": "", "r1": "director", "s2": "x", "r2": "y", "s3": "z"}"#,
    )
    .unwrap();
    assert!(matches!(load_triples(&path), Err(Error::Dataset { line: 2, .. })));
}

fn synthetic_triples(n: usize) -> Vec<KnowledgeTriplePair> {
    (0..n)
        .map(|i| {
            KnowledgeTriplePair::new(
                &format!("Film Number {i}"),
                ["director", "producer", "composer"][i % 3],
                &format!("Person {}", i * 7 + 1),
                ["place of birth", "country of citizenship", "employer"][i % 3],
                "Somewhere",
            )
        })
        .collect()
}

#[test]
fn thousand_triples_make_a_thousand_pairs() {
    let triples = synthetic_triples(1000);
    let pairs = generate_2wmh(&triples);
    assert_eq!(pairs.len(), 1000);
    let vocab = Vocabulary::gpt2().unwrap();
    let mean = pairs.iter().map(|p| vocab.encode(&p.multi_hop).len()).sum::<usize>() as f64 / 1000.0;
    assert!(mean > 8.0 && mean < 20.0, "{mean}");
}

proptest! {
    #[test]
    fn generation_is_injective_and_trimmed(
        fields in prop::collection::hash_set(("[A-Za-z]{1,8}", "[a-z]{1,8}", "[A-Z][a-z]{1,8}", "[a-z]{1,8}"), 1..30)
    ) {
        let triples: Vec<KnowledgeTriplePair> = fields
            .iter()
            .map(|(s1, r1, s2, r2)| KnowledgeTriplePair::new(s1, r1, s2, r2, "Answer"))
            .collect();
        let pairs = generate_2wmh(&triples);
        prop_assert_eq!(pairs.len(), triples.len());
        let distinct: HashSet<(String, String)> =
            pairs.iter().map(|p| (p.single_hop.clone(), p.multi_hop.clone())).collect();
        prop_assert_eq!(distinct.len(), pairs.len());
        for p in &pairs {
            prop_assert_eq!(p.single_hop.trim_end(), p.single_hop.as_str());
            prop_assert_eq!(p.multi_hop.trim_end(), p.multi_hop.as_str());
        }
    }
}

#[test]
fn lexicon_sizes_match_the_manifest() {
    let lex = lexicon();
    let expected = [
        (PartOfSpeech::Adjectives, 824),
        (PartOfSpeech::Adverbs, 331),
        (PartOfSpeech::Conjunctions, 40),
        (PartOfSpeech::Nouns, 2635),
        (PartOfSpeech::Verbs, 969),
        (PartOfSpeech::Top5050, 5050),
    ];
    for (pos, n) in expected {
        assert_eq!(lex.len(pos), n, "{pos}");
    }
}

#[test]
fn sampling() {
    let lex = lexicon();
    let conj = sample_pos_words(&lex, PartOfSpeech::Conjunctions, SampleMode::TopN(40)).unwrap();
    assert_eq!(conj.len(), 40);
    assert!(sample_pos_words(&lex, PartOfSpeech::Conjunctions, SampleMode::TopN(41)).is_err());
    assert!(sample_pos_words(&lex, PartOfSpeech::Conjunctions, SampleMode::TopN(0)).is_err());

    let a = sample_pos_words(&lex, PartOfSpeech::Nouns, SampleMode::Random { seed: 7 }).unwrap();
    let b = sample_pos_words(&lex, PartOfSpeech::Nouns, SampleMode::Random { seed: 7 }).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 1);

    // most frequent noun, read straight from the file
    let text = std::fs::read_to_string(repo().join("data/lexicon/nouns.tsv")).unwrap();
    let top = text
        .lines()
        .map(|l| {
            let (w, r) = l.split_once('\t').unwrap();
            (r.parse::<u64>().unwrap(), w)
        })
        .min()
        .unwrap()
        .1;
    assert_eq!(sample_pos_words(&lex, PartOfSpeech::Nouns, SampleMode::TopN(1)).unwrap(), vec![top]);
}

#[test]
fn manifest_count_mismatch_is_a_consistency_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("verbs.tsv"), "run\t1\nwalk\t2\n").unwrap();
    std::fs::write(dir.path().join("manifest.toml"), "[verbs]\nfile = \"verbs.tsv\"\ncount = 3\n").unwrap();
    assert!(matches!(PosLexicon::load(dir.path()), Err(Error::Consistency(_))));
    std::fs::write(dir.path().join("manifest.toml"), "[verbs]\nfile = \"verbs.tsv\"\ncount = 2\n").unwrap();
    let lex = PosLexicon::load(dir.path()).unwrap();
    assert!(lex.words(PartOfSpeech::Nouns).is_err());
}

#[test]
fn lexicon_is_ordered_by_rank() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("verbs.tsv"), "walk\t20\nrun\t3\n").unwrap();
    std::fs::write(dir.path().join("manifest.toml"), "[verbs]\nfile = \"verbs.tsv\"\ncount = 2\n").unwrap();
    let lex = PosLexicon::load(dir.path()).unwrap();
    assert_eq!(lex.words(PartOfSpeech::Verbs).unwrap(), ["run", "walk"]);
}

#[test]
fn repository_config_resolves_relative_paths() {
    let path = DatasetConfig::discover(repo().join("crates/core")).unwrap();
    let config = DatasetConfig::load(&path).unwrap();
    let golden = config.dataset_path("golden").unwrap();
    assert!(golden.is_file(), "{}", golden.display());
    assert_eq!(config.lexicon().unwrap().len(PartOfSpeech::Verbs), 969);
    assert_eq!(config.templates().len(), 1);
    if config.datasets.hand.is_none() {
        assert!(config.dataset_path("hand").is_err());
    }
    assert_eq!(config.dataset_path("some/file.jsonl").unwrap(), PathBuf::from("some/file.jsonl"));
}

#[test]
fn extra_templates_from_config() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("memhop.toml");
    std::fs::write(
        &path,
        "[datasets]\ngolden = \"g.jsonl\"\n\n[[templates]]\nsingle = \"{s2} has {r2}\"\nmulti = \"the {r1} of {s1} has {r2}\"\n",
    )
    .unwrap();
    let config = DatasetConfig::load(&path).unwrap();
    assert_eq!(config.datasets.golden.as_deref(), Some(dir.path().join("g.jsonl").as_path()));
    let t = &config.templates()[0];
    let p = memhop::datasets::generate_2wmh_with(&[KnowledgeTriplePair::new("A", "b", "C", "d", "E")], t);
    assert_eq!(p[0].single_hop, "C has d");
    assert_eq!(p[0].multi_hop, "the b of A has d");
}
