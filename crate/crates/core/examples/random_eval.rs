// Injects the most frequent words of each part of speech instead of the
// curated memory, at a single site.
//
// cargo run --release --example random_eval -- golden 7 3 40

use memhop::datasets::DatasetConfig;
use memhop::experiments::random_injection_eval;
use memhop::{load_prompt_pairs, Engine, MemoryBasis, PositionPolicy};

pub fn run(dataset: &str, layer: usize, tau: f32, n_words: usize) -> Result<(), Box<dyn std::error::Error>> {
    let config = DatasetConfig::load(DatasetConfig::discover(env!("CARGO_MANIFEST_DIR")).ok_or("memhop.toml not found")?)?;
    let pairs = load_prompt_pairs(config.dataset_path(dataset)?)?;
    let lexicon = config.lexicon()?;
    let engine = Engine::load_or_demo(None)?;
    let layer = layer.min(engine.config().n_layer - 1);
    let out = random_injection_eval(
        &engine,
        &pairs,
        &lexicon,
        layer,
        tau,
        n_words,
        PositionPolicy::All,
        MemoryBasis::Unembedding,
    )?;
    println!("{} at layer {layer} tau {tau}, {n_words} words each", engine.info().name);
    for s in &out.per_pos {
        println!("  {:<12} {:+8.2}%  (used {}, excluded {})", s.pos.to_string(), s.mean_pct, s.n_used, s.n_excluded);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::init();
    let mut args = std::env::args().skip(1);
    let dataset = args.next().unwrap_or_else(|| "golden".into());
    let layer = args.next().map(|s| s.parse()).transpose()?.unwrap_or(7);
    let tau = args.next().map(|s| s.parse()).transpose()?.unwrap_or(3.0);
    let n_words = args.next().map(|s| s.parse()).transpose()?.unwrap_or(40);
    run(&dataset, layer, tau, n_words)
}
