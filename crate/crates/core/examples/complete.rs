// Next-token distribution for a prompt.
//
// MEMHOP_MODEL_DIR=/models/gpt2 cargo run --release --example complete -- \
//     "The Great Barrier Reef is located off the coast of"
//
// Without a model directory a random demo model is used.

use memhop::Engine;

pub fn run(prompt: &str, k: usize) -> Result<(), Box<dyn std::error::Error>> {
    let engine = Engine::load_or_demo(None)?;
    println!("model {}", engine.info().name);
    for (rank, t) in engine.complete(prompt, k)?.iter().enumerate() {
        println!("{:>3}. {:<20} {:.6}", rank + 1, format!("{:?}", t.token), t.prob);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::init();
    let prompt = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "The Great Barrier Reef is located off the coast of".into());
    run(&prompt, 10)
}
