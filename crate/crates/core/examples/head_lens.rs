// Per-head vocabulary readout of the last position.
//
// cargo run --release --example head_lens -- "Barack Obama was a member of the" 9 8
//
// Prints the top tokens of one head, then the head with the highest top-1
// probability in every layer.

use memhop::{Engine, Projection};

pub fn run(prompt: &str, layer: usize, head: usize) -> Result<(), Box<dyn std::error::Error>> {
    let engine = Engine::load_or_demo(None)?;
    let report = engine.lens(prompt, 30, Projection::Raw)?;
    let layer = layer.min(report.n_layer - 1);
    let head = head.min(report.n_head - 1);
    let cell = report.cell(layer, head).ok_or("no such head")?;
    println!("{} layer {layer} head {head}:", engine.info().name);
    let tokens: Vec<String> = cell.topk.iter().map(|t| format!("{:?}", t.token)).collect();
    println!("  {}", tokens.join(" "));
    println!();
    for l in 0..report.n_layer {
        let best = (0..report.n_head)
            .filter_map(|h| report.cell(l, h))
            .max_by(|a, b| a.topk[0].prob.total_cmp(&b.topk[0].prob))
            .ok_or("empty layer")?;
        println!("layer {l:>2}: head {:>2} {:?} {:.4}", best.head, best.topk[0].token, best.topk[0].prob);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::init();
    let mut args = std::env::args().skip(1);
    let prompt = args.next().unwrap_or_else(|| "Barack Obama was a member of the".into());
    let layer = args.next().map(|s| s.parse()).transpose()?.unwrap_or(9);
    let head = args.next().map(|s| s.parse()).transpose()?.unwrap_or(8);
    run(&prompt, layer, head)
}
