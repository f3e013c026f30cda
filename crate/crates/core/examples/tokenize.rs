// Byte-level BPE round trip with the bundled GPT-2 vocabulary.
//
// cargo run --example tokenize -- "The Great Barrier Reef"

use memhop::Vocabulary;

pub fn run(text: &str) -> Result<(), Box<dyn std::error::Error>> {
    let vocab = Vocabulary::gpt2()?;
    let ids = vocab.encode(text);
    println!("{} tokens", ids.len());
    for &id in ids.iter() {
        println!("{id:>6}  {:?}", vocab.token_text(id)?);
    }
    let back = vocab.decode(&ids)?;
    assert_eq!(back, text);
    println!("decoded: {back:?}");
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    let text = std::env::args().nth(1).unwrap_or_else(|| "The Great Barrier Reef".into());
    run(&text)
}
