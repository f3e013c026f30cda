//! GPT-2 byte-level BPE, read from the `vocab.json` / `merges.txt` pair that
//! ships with every GPT-2 checkpoint.
//!
//! Text is split with the GPT-2 pre-tokenization pattern, each piece is
//! mapped byte-by-byte onto the printable "byte alphabet", and merges are
//! applied greedily by rank. Every byte has a symbol in the vocabulary, so
//! encoding never fails.

use std::collections::HashMap;
use std::fmt;
use std::ops::Deref;
use std::path::Path;

use regex::Regex;
use serde::de::{Deserializer, MapAccess, Visitor};

use crate::error::{Error, Result};
use crate::model::ModelConfig;

/// GPT-2 pre-tokenization pattern without its `\s+(?!\S)` lookahead branch;
/// `Vocabulary::pieces` restores that behaviour by hand.
const SPLIT_PATTERN: &str = r"'s|'t|'re|'ve|'m|'ll|'d| ?\p{L}+| ?\p{N}+| ?[^\s\p{L}\p{N}]+|\s+";

/// Encoded text: token ids in order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(transparent)]
pub struct TokenSequence(Vec<u32>);

impl TokenSequence {
    pub fn new(ids: Vec<u32>) -> Self {
        Self(ids)
    }

    pub fn ids(&self) -> &[u32] {
        &self.0
    }

    pub fn into_ids(self) -> Vec<u32> {
        self.0
    }

    pub fn push(&mut self, id: u32) {
        self.0.push(id);
    }
}

impl Deref for TokenSequence {
    type Target = [u32];

    fn deref(&self) -> &[u32] {
        &self.0
    }
}

impl From<Vec<u32>> for TokenSequence {
    fn from(ids: Vec<u32>) -> Self {
        Self(ids)
    }
}

impl FromIterator<u32> for TokenSequence {
    fn from_iter<I: IntoIterator<Item = u32>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

/// Token-string to id bijection plus the ordered merge list.
pub struct Vocabulary {
    tokens: Vec<String>,
    ids: HashMap<String, u32>,
    /// (left id, right id) -> (rank, merged id)
    merges: HashMap<(u32, u32), (u32, u32)>,
    merge_count: usize,
    byte_symbol: [u32; 256],
    symbol_byte: HashMap<char, u8>,
    split: Regex,
}

impl fmt::Debug for Vocabulary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Vocabulary")
            .field("size", &self.tokens.len())
            .field("merges", &self.merge_count)
            .finish()
    }
}

/// The reversible byte -> printable char table used by GPT-2.
pub fn byte_alphabet() -> [char; 256] {
    let mut table = ['\0'; 256];
    let mut next = 256u32;
    for b in 0..=255u8 {
        let printable = matches!(b, b'!'..=b'~' | 0xA1..=0xAC | 0xAE..=0xFF);
        table[b as usize] = if printable {
            b as char
        } else {
            let c = char::from_u32(next).expect("valid code point");
            next += 1;
            c
        };
    }
    table
}

/// Collects every `"token": id` pair, duplicates included.
fn read_vocab_entries(text: &str) -> serde_json::Result<Vec<(String, u32)>> {
    struct Entries;

    impl<'de> Visitor<'de> for Entries {
        type Value = Vec<(String, u32)>;

        fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            f.write_str("a map from token strings to ids")
        }

        fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<Self::Value, A::Error> {
            let mut out = Vec::with_capacity(map.size_hint().unwrap_or(0));
            while let Some(entry) = map.next_entry::<String, u32>()? {
                out.push(entry);
            }
            Ok(out)
        }
    }

    let mut de = serde_json::Deserializer::from_str(text);
    let entries = de.deserialize_map(Entries)?;
    de.end()?;
    Ok(entries)
}

/// Loads `vocab.json` and `merges.txt`.
pub fn load_tokenizer(vocab_path: impl AsRef<Path>, merges_path: impl AsRef<Path>) -> Result<Vocabulary> {
    Vocabulary::load(vocab_path, merges_path)
}

impl Vocabulary {
    pub fn load(vocab_path: impl AsRef<Path>, merges_path: impl AsRef<Path>) -> Result<Self> {
        let vocab_path = vocab_path.as_ref();
        let merges_path = merges_path.as_ref();
        let vocab_text = std::fs::read_to_string(vocab_path).map_err(|e| Error::load(vocab_path, e))?;
        let merges_text =
            std::fs::read_to_string(merges_path).map_err(|e| Error::load(merges_path, e))?;
        Self::parse(&vocab_text, &merges_text, vocab_path, merges_path)
    }

    /// The GPT-2 vocabulary bundled with this crate.
    pub fn gpt2() -> Result<Self> {
        Self::parse(
            include_str!("../assets/gpt2/vocab.json"),
            include_str!("../assets/gpt2/merges.txt"),
            Path::new("<bundled>/vocab.json"),
            Path::new("<bundled>/merges.txt"),
        )
    }

    fn parse(vocab_text: &str, merges_text: &str, vocab_path: &Path, merges_path: &Path) -> Result<Self> {
        let entries = read_vocab_entries(vocab_text).map_err(|e| Error::load(vocab_path, e))?;
        let merges = parse_merges(merges_text).map_err(|e| Error::load(merges_path, e))?;
        Self::from_parts(entries, merges).map_err(|e| match e {
            Error::Argument(msg) => Error::load(vocab_path, msg),
            other => other,
        })
    }

    /// A vocabulary of the 256 byte symbols, one token per merge (written
    /// in plain text, e.g. `(" t", "he")`) and a trailing `<|endoftext|>`.
    pub fn byte_level(merges: &[(&str, &str)]) -> Result<Self> {
        let alphabet = byte_alphabet();
        let to_symbols = |s: &str| -> String { s.bytes().map(|b| alphabet[b as usize]).collect() };
        let mut entries: Vec<(String, u32)> = alphabet.iter().enumerate().map(|(i, c)| (c.to_string(), i as u32)).collect();
        let mut rules = Vec::with_capacity(merges.len());
        for (left, right) in merges {
            let (l, r) = (to_symbols(left), to_symbols(right));
            let merged = format!("{l}{r}");
            if !entries.iter().any(|(t, _)| *t == merged) {
                entries.push((merged, entries.len() as u32));
            }
            rules.push((l, r));
        }
        entries.push(("<|endoftext|>".into(), entries.len() as u32));
        Self::from_parts(entries, rules)
    }

    /// Builds a vocabulary from `(token, id)` entries and ordered merge pairs.
    pub fn from_parts(entries: Vec<(String, u32)>, merges: Vec<(String, String)>) -> Result<Self> {
        let size = entries.len();
        let mut tokens: Vec<Option<String>> = vec![None; size];
        let mut ids = HashMap::with_capacity(size);
        for (token, id) in entries {
            let slot = tokens.get_mut(id as usize).ok_or_else(|| {
                Error::argument(format!("token id {id} is not below the vocabulary size {size}"))
            })?;
            if slot.is_some() {
                return Err(Error::argument(format!("duplicate token id {id}")));
            }
            if ids.insert(token.clone(), id).is_some() {
                return Err(Error::argument(format!("duplicate token string {token:?}")));
            }
            *slot = Some(token);
        }
        let tokens: Vec<String> = tokens.into_iter().map(|t| t.expect("ids are dense")).collect();

        let alphabet = byte_alphabet();
        let mut byte_symbol = [0u32; 256];
        let mut symbol_byte = HashMap::with_capacity(256);
        for (b, c) in alphabet.iter().enumerate() {
            let id = *ids
                .get(c.to_string().as_str())
                .ok_or_else(|| Error::argument(format!("byte symbol {c:?} (byte {b}) missing from vocabulary")))?;
            byte_symbol[b] = id;
            symbol_byte.insert(*c, b as u8);
        }

        let merge_count = merges.len();
        let mut merge_table = HashMap::with_capacity(merge_count);
        for (rank, (left, right)) in merges.into_iter().enumerate() {
            let lookup = |s: &str| {
                ids.get(s).copied().ok_or_else(|| {
                    Error::argument(format!("merge rule {} references unknown token {s:?}", rank + 1))
                })
            };
            let merged = lookup(&format!("{left}{right}"))?;
            let key = (lookup(&left)?, lookup(&right)?);
            merge_table.entry(key).or_insert((rank as u32, merged));
        }

        Ok(Self {
            tokens,
            ids,
            merges: merge_table,
            merge_count,
            byte_symbol,
            symbol_byte,
            split: Regex::new(SPLIT_PATTERN).expect("static pattern"),
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn merge_count(&self) -> usize {
        self.merge_count
    }

    pub fn token_id(&self, token: &str) -> Option<u32> {
        self.ids.get(token).copied()
    }

    /// The raw vocabulary entry (byte-alphabet form, e.g. `"ĠObama"`).
    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    /// `<|endoftext|>`, when present.
    pub fn end_of_text(&self) -> Option<u32> {
        self.token_id("<|endoftext|>")
    }

    /// Fails when the vocabulary does not match the model's embedding rows.
    pub fn check_model(&self, config: &ModelConfig) -> Result<()> {
        if self.len() != config.vocab_size {
            return Err(Error::Consistency(format!(
                "tokenizer has {} tokens but the model expects {}",
                self.len(),
                config.vocab_size
            )));
        }
        Ok(())
    }

    /// Splits text into pre-tokenization pieces.
    fn pieces<'t>(&self, text: &'t str) -> Vec<&'t str> {
        let mut out = Vec::new();
        let mut pos = 0;
        while pos < text.len() {
            let Some(m) = self.split.find_at(text, pos) else { break };
            let mut end = m.end();
            let piece = m.as_str();
            // `\s+(?!\S)`: a whitespace run followed by text gives up its last
            // char so the next piece can carry it as a leading space.
            if end < text.len() && piece.chars().all(char::is_whitespace) {
                if let Some((last, _)) = piece.char_indices().next_back().filter(|(i, _)| *i > 0) {
                    end = m.start() + last;
                }
            }
            out.push(&text[m.start()..end]);
            pos = end;
        }
        out
    }

    fn bpe(&self, piece: &str, out: &mut Vec<u32>) {
        let mut symbols: Vec<u32> = piece.bytes().map(|b| self.byte_symbol[b as usize]).collect();
        while symbols.len() > 1 {
            let best = symbols
                .windows(2)
                .enumerate()
                .filter_map(|(i, w)| self.merges.get(&(w[0], w[1])).map(|&(rank, merged)| (rank, i, merged)))
                .min();
            let Some((rank, _, merged)) = best else { break };
            let mut next = Vec::with_capacity(symbols.len());
            let mut i = 0;
            while i < symbols.len() {
                if i + 1 < symbols.len()
                    && self.merges.get(&(symbols[i], symbols[i + 1])).map(|m| m.0) == Some(rank)
                {
                    next.push(merged);
                    i += 2;
                } else {
                    next.push(symbols[i]);
                    i += 1;
                }
            }
            symbols = next;
        }
        out.extend(symbols);
    }

    /// Byte-level BPE encoding of `text`.
    pub fn encode(&self, text: &str) -> TokenSequence {
        let mut ids = Vec::new();
        for piece in self.pieces(text) {
            self.bpe(piece, &mut ids);
        }
        TokenSequence(ids)
    }

    /// Raw bytes of a token sequence.
    pub fn decode_bytes(&self, ids: &[u32]) -> Result<Vec<u8>> {
        let mut bytes = Vec::new();
        for &id in ids {
            let token = self.token(id).ok_or(Error::TokenRange {
                id,
                vocab_size: self.len(),
            })?;
            for c in token.chars() {
                match self.symbol_byte.get(&c) {
                    Some(b) => bytes.push(*b),
                    // special tokens such as <|endoftext|> are plain ASCII
                    None => {
                        let mut buf = [0u8; 4];
                        bytes.extend_from_slice(c.encode_utf8(&mut buf).as_bytes());
                    }
                }
            }
        }
        Ok(bytes)
    }

    /// Inverse of [`encode`](Self::encode). Sequences that split a UTF-8
    /// character decode it as U+FFFD.
    pub fn decode(&self, ids: &[u32]) -> Result<String> {
        let bytes = self.decode_bytes(ids)?;
        Ok(String::from_utf8(bytes).unwrap_or_else(|e| String::from_utf8_lossy(e.as_bytes()).into_owned()))
    }

    /// Display form of a single token, e.g. `" Obama"`.
    pub fn token_text(&self, id: u32) -> Result<String> {
        self.decode(&[id])
    }
}

fn parse_merges(text: &str) -> std::result::Result<Vec<(String, String)>, String> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if (n == 0 && line.starts_with("#version")) || line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(' ');
        match (parts.next(), parts.next(), parts.next()) {
            (Some(a), Some(b), None) if !a.is_empty() && !b.is_empty() => {
                out.push((a.to_string(), b.to_string()))
            }
            _ => return Err(format!("line {}: expected two space-separated symbols", n + 1)),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Byte symbols only, plus a few merges over "a", "b", " ".
    fn toy(merges: &[(&str, &str)]) -> Vocabulary {
        let mut entries: Vec<(String, u32)> = byte_alphabet()
            .iter()
            .enumerate()
            .map(|(i, c)| (c.to_string(), i as u32))
            .collect();
        for (a, b) in merges {
            let merged = format!("{a}{b}");
            if !entries.iter().any(|(t, _)| *t == merged) {
                let id = entries.len() as u32;
                entries.push((merged, id));
            }
        }
        let merges = merges.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect();
        Vocabulary::from_parts(entries, merges).unwrap()
    }

    #[test]
    fn byte_alphabet_is_a_bijection() {
        let table = byte_alphabet();
        let unique: std::collections::HashSet<char> = table.iter().copied().collect();
        assert_eq!(unique.len(), 256);
        assert_eq!(table[b' ' as usize], 'Ġ');
        assert_eq!(table[b'\n' as usize], 'Ċ');
        assert_eq!(table[b'A' as usize], 'A');
    }

    #[test]
    fn no_merges_gives_raw_bytes() {
        let v = toy(&[]);
        let ids = v.encode("héllo");
        assert_eq!(ids.len(), "héllo".len());
        let alphabet = byte_alphabet();
        for (id, b) in ids.iter().zip("héllo".bytes()) {
            assert_eq!(v.token(*id).unwrap(), alphabet[b as usize].to_string());
        }
        assert_eq!(v.decode(&ids).unwrap(), "héllo");
    }

    #[test]
    fn merges_apply_by_rank() {
        let v = toy(&[("a", "b"), ("ab", "b"), ("b", "b")]);
        // "abb": (a,b) has rank 0 -> "ab","b" -> rank 1 -> "abb"
        let ids = v.encode("abb");
        assert_eq!(ids.len(), 1);
        assert_eq!(v.token(ids[0]), Some("abb"));
        // "bbb": (b,b) rank 2 merges left to right -> "bb","b"
        let ids = v.encode("bbb");
        assert_eq!(ids.iter().map(|&i| v.token(i).unwrap()).collect::<Vec<_>>(), ["bb", "b"]);
    }

    #[test]
    fn empty_text() {
        let v = toy(&[]);
        assert!(v.encode("").is_empty());
        assert_eq!(v.decode(&[]).unwrap(), "");
    }

    #[test]
    fn whitespace_runs_leave_a_leading_space() {
        let v = toy(&[]);
        assert_eq!(v.pieces("a  b"), ["a", " ", " b"]);
        assert_eq!(v.pieces("a \nb"), ["a", " ", "\n", "b"]);
        assert_eq!(v.pieces("x   "), ["x", "   "]);
        assert_eq!(v.pieces("it's ok"), ["it", "'s", " ok"]);
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let mut entries: Vec<(String, u32)> = byte_alphabet()
            .iter()
            .enumerate()
            .map(|(i, c)| (c.to_string(), i as u32))
            .collect();
        entries.push(("dup".into(), 3));
        assert!(Vocabulary::from_parts(entries, vec![]).is_err());
    }

    #[test]
    fn duplicate_strings_are_rejected() {
        let mut entries: Vec<(String, u32)> = byte_alphabet()
            .iter()
            .enumerate()
            .map(|(i, c)| (c.to_string(), i as u32))
            .collect();
        entries.push(("a".into(), 256));
        assert!(Vocabulary::from_parts(entries, vec![]).is_err());
    }

    #[test]
    fn out_of_range_id_fails_decode() {
        let v = toy(&[]);
        assert!(matches!(v.decode(&[9999]), Err(Error::TokenRange { id: 9999, .. })));
    }

    #[test]
    fn merges_header_and_blank_lines_are_skipped() {
        let parsed = parse_merges("#version: 0.2\nĠ t\n\na b\n").unwrap();
        assert_eq!(parsed, vec![("Ġ".into(), "t".into()), ("a".into(), "b".into())]);
        assert!(parse_merges("a b c\n").is_err());
    }
}
