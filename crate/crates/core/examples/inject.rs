// Adds a memory phrase to one attention layer's output and reports how the
// answer probability moves.
//
// cargo run --release --example inject -- \
//     "The largest coral reef system in the world is located off the coast of" \
//     "The Great Barrier Reef" Australia 9 4

use memhop::{percent_difference, Engine, InjectionSpec, PositionPolicy};

pub fn run(prompt: &str, memory: &str, answer: &str, layer: usize, tau: f32) -> Result<(), Box<dyn std::error::Error>> {
    let engine = Engine::load_or_demo(None)?;
    let layer = layer.min(engine.config().n_layer - 1);
    let token = engine.answer_token(answer)?;
    println!("{} layer {layer} tau {tau}", engine.info().name);
    for policy in [PositionPolicy::All, PositionPolicy::Last] {
        let spec = InjectionSpec::new(memory, layer, tau).with_policy(policy);
        let result = engine.inject(prompt, &spec)?;
        let (pre, post) = result.answer(token);
        let pct = percent_difference(pre as f64, post as f64)
            .map(|p| format!("{p:+.2}%"))
            .unwrap_or_else(|_| "undefined".into());
        println!("  {policy:>4}: P({answer:?}) {pre:.6} -> {post:.6} ({pct})");
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::init();
    let mut args = std::env::args().skip(1);
    let prompt = args
        .next()
        .unwrap_or_else(|| "The largest coral reef system in the world is located off the coast of".into());
    let memory = args.next().unwrap_or_else(|| "The Great Barrier Reef".into());
    let answer = args.next().unwrap_or_else(|| "Australia".into());
    let layer = args.next().map(|s| s.parse()).transpose()?.unwrap_or(9);
    let tau = args.next().map(|s| s.parse()).transpose()?.unwrap_or(4.0);
    run(&prompt, &memory, &answer, layer, tau)
}
