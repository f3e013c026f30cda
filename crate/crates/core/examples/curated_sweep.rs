// Sweeps every (layer, tau) site with each pair's own memory and writes
// `grid.csv`, `records.jsonl` and `summary.json`.
//
// cargo run --release --example curated_sweep -- golden target/memhop/curated

use std::path::{Path, PathBuf};

use memhop::datasets::DatasetConfig;
use memhop::experiments::{curated_sweep, SweepSettings};
use memhop::{load_prompt_pairs, Engine};

pub fn run(dataset: &str, out_dir: &Path) -> Result<(), Box<dyn std::error::Error>> {
    let config_path = DatasetConfig::discover(env!("CARGO_MANIFEST_DIR")).ok_or("memhop.toml not found")?;
    let config = DatasetConfig::load(config_path)?;
    let pairs = load_prompt_pairs(config.dataset_path(dataset)?)?;
    let engine = Engine::load_or_demo(None)?;
    let settings = SweepSettings::full(engine.config().n_layer);
    let out = curated_sweep(&engine, &pairs, &settings)?;
    out.write(out_dir, serde_json::json!({"dataset": dataset, "model": engine.info()}))?;
    if let Some(best) = out.best() {
        println!(
            "{} pairs, best site layer {} tau {}: {:+.2}% (n={})",
            pairs.len(),
            best.layer,
            best.tau,
            best.mean_pct,
            best.n_used
        );
    }
    println!("wrote {}", out_dir.display());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::init();
    let mut args = std::env::args().skip(1);
    let dataset = args.next().unwrap_or_else(|| "golden".into());
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| "target/memhop/curated".into());
    run(&dataset, &out)
}
