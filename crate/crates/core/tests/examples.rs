//! Runs each example's entry point against the demo model.

macro_rules! example {
    ($name:ident) => {
        #[allow(dead_code)]
        mod $name {
            include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/", stringify!($name), ".rs"));
        }
    };
}

example!(tokenize);
example!(complete);
example!(head_lens);
example!(inject);
example!(curated_sweep);
example!(random_eval);
example!(pos_sweep);
example!(dataset_stats);
example!(generate_2wmh);

#[test]
fn tokenize_runs() {
    tokenize::run("The Great Barrier Reef").unwrap();
}

#[test]
fn complete_runs() {
    complete::run("The Great Barrier Reef is located off the coast of", 5).unwrap();
}

#[test]
fn head_lens_runs() {
    head_lens::run("Barack Obama was a member of the", 9, 8).unwrap();
}

#[test]
fn inject_runs() {
    inject::run("The God of Thunder is the son of", "Thor", "Odin", 9, 4.0).unwrap();
}

#[test]
fn curated_sweep_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    curated_sweep::run("golden", dir.path()).unwrap();
    assert!(dir.path().join("grid.csv").is_file());
}

#[test]
fn random_eval_runs() {
    random_eval::run("golden", 1, 3.0, 5).unwrap();
}

#[test]
fn pos_sweep_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    pos_sweep::run("golden", dir.path(), 3).unwrap();
    assert!(dir.path().join("marginals.csv").is_file());
}

#[test]
fn dataset_stats_runs() {
    dataset_stats::run("golden").unwrap();
}

#[test]
fn generate_2wmh_emits_jsonl() {
    let mut out = Vec::new();
    assert_eq!(generate_2wmh::run(None, &mut out).unwrap(), 2);
    let text = String::from_utf8(out).unwrap();
    let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(first["multi_hop"], "The country of citizenship of the director of Lilli's Marriage is");
}
