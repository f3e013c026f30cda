// Full (layer, tau) sweep with one seeded random word per prompt and site,
// for every part of speech. Writes grids and marginals.
//
// cargo run --release --example pos_sweep -- golden target/memhop/pos 7

use std::path::{Path, PathBuf};

use memhop::datasets::DatasetConfig;
use memhop::experiments::{pos_sweep, SweepSettings};
use memhop::{load_prompt_pairs, Engine};

pub fn run(dataset: &str, out_dir: &Path, seed: u64) -> Result<(), Box<dyn std::error::Error>> {
    let config = DatasetConfig::load(DatasetConfig::discover(env!("CARGO_MANIFEST_DIR")).ok_or("memhop.toml not found")?)?;
    let pairs = load_prompt_pairs(config.dataset_path(dataset)?)?;
    let lexicon = config.lexicon()?;
    let engine = Engine::load_or_demo(None)?;
    let settings = SweepSettings::full(engine.config().n_layer);
    let out = pos_sweep(&engine, &pairs, &lexicon, &settings, seed)?;
    out.write(out_dir, serde_json::json!({"dataset": dataset, "model": engine.info()}))?;
    for g in &out.grids {
        match &g.overall {
            Some(m) => println!("{:<12} overall {:+.2}%", g.pos.to_string(), m.mean),
            None => println!("{:<12} no defined values", g.pos.to_string()),
        }
    }
    println!("wrote {}", out_dir.display());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::init();
    let mut args = std::env::args().skip(1);
    let dataset = args.next().unwrap_or_else(|| "golden".into());
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| "target/memhop/pos".into());
    let seed = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0);
    run(&dataset, &out, seed)
}
