// Turns knowledge-triple pairs into single/multi-hop prompt pairs (JSONL on
// stdout).
//
// cargo run --example generate_2wmh -- triples.jsonl > 2wmh.jsonl

use std::io::Write;

use memhop::datasets::{generate_2wmh, load_triples, KnowledgeTriplePair};

pub fn run(triples: Option<&str>, out: &mut dyn Write) -> Result<usize, Box<dyn std::error::Error>> {
    let triples = match triples {
        Some(path) => load_triples(path)?,
        None => vec![
            KnowledgeTriplePair::new("Lilli's Marriage", "director", "Jaap Speyer", "country of citizenship", "Dutch"),
            KnowledgeTriplePair::new("Triple Agent", "director", "Éric Rohmer", "employer", "Cahiers du cinéma"),
        ],
    };
    let pairs = generate_2wmh(&triples);
    for p in &pairs {
        serde_json::to_writer(&mut *out, p)?;
        writeln!(out)?;
    }
    Ok(pairs.len())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args().nth(1);
    let n = run(path.as_deref(), &mut std::io::stdout().lock())?;
    eprintln!("{n} pairs");
    Ok(())
}
