// Mean answer probability, surprisal and prompt length for both hops.
//
// cargo run --release --example dataset_stats -- golden

use memhop::datasets::DatasetConfig;
use memhop::experiments::dataset_stats;
use memhop::{load_prompt_pairs, Engine};

pub fn run(dataset: &str) -> Result<(), Box<dyn std::error::Error>> {
    let config = DatasetConfig::load(DatasetConfig::discover(env!("CARGO_MANIFEST_DIR")).ok_or("memhop.toml not found")?)?;
    let pairs = load_prompt_pairs(config.dataset_path(dataset)?)?;
    let engine = Engine::load_or_demo(None)?;
    print!("{}", dataset_stats(&engine, &pairs)?);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::init();
    run(&std::env::args().nth(1).unwrap_or_else(|| "golden".into()))
}
