//! Prompt pairs, 2WMH-style generation from knowledge triples, and
//! part-of-speech word lists.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Source {
    #[serde(rename = "hand")]
    Hand,
    #[serde(rename = "2wmh")]
    Wmh,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Hand => "hand",
            Source::Wmh => "2wmh",
        })
    }
}

/// A single-hop prompt, its multi-hop rewrite, the expected next word and
/// the subject the multi-hop prompt leaves implicit.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptPair {
    #[serde(default)]
    pub id: String,
    pub single_hop: String,
    pub multi_hop: String,
    pub answer: String,
    pub memory: String,
    pub source: Source,
}

impl PromptPair {
    /// Trims surrounding whitespace from every text field.
    pub fn normalized(mut self) -> Self {
        for s in [
            &mut self.single_hop,
            &mut self.multi_hop,
            &mut self.answer,
            &mut self.memory,
        ] {
            let t = s.trim();
            if t.len() != s.len() {
                *s = t.to_string();
            }
        }
        self
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        for (name, value) in [
            ("single_hop", &self.single_hop),
            ("multi_hop", &self.multi_hop),
            ("answer", &self.answer),
            ("memory", &self.memory),
        ] {
            if value.trim().is_empty() {
                return Err(format!("`{name}` is empty"));
            }
        }
        if self.multi_hop.contains(&self.memory) {
            return Err(format!("multi-hop prompt states the memory {:?} explicitly", self.memory));
        }
        Ok(())
    }
}

fn read_jsonl<T: DeserializeOwned>(
    path: &Path,
    mut each: impl FnMut(usize, T) -> std::result::Result<(), String>,
) -> Result<()> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::load(path, e))?;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = i + 1;
        let fail = |message: String| Error::Dataset {
            path: path.to_path_buf(),
            line: line_no,
            message,
        };
        let value: T = serde_json::from_str(line).map_err(|e| fail(e.to_string()))?;
        each(line_no, value).map_err(fail)?;
    }
    Ok(())
}

/// Reads a JSONL file of prompt pairs. Missing ids become `<stem>-<line>`.
pub fn load_prompt_pairs(path: impl AsRef<Path>) -> Result<Vec<PromptPair>> {
    let path = path.as_ref();
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("pair").to_string();
    let mut out = Vec::new();
    read_jsonl(path, |line, pair: PromptPair| {
        let mut pair = pair.normalized();
        pair.validate()?;
        if pair.id.is_empty() {
            pair.id = format!("{stem}-{line}");
        }
        out.push(pair);
        Ok(())
    })?;
    Ok(out)
}

/// Two chained knowledge triples (s1, r1, s2) and (s2, r2, s3).
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct KnowledgeTriplePair {
    pub s1: String,
    pub r1: String,
    pub s2: String,
    pub r2: String,
    pub s3: String,
}

impl KnowledgeTriplePair {
    pub fn new(s1: &str, r1: &str, s2: &str, r2: &str, s3: &str) -> Self {
        Self {
            s1: s1.into(),
            r1: r1.into(),
            s2: s2.into(),
            r2: r2.into(),
            s3: s3.into(),
        }
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        for (name, v) in [
            ("s1", &self.s1),
            ("r1", &self.r1),
            ("s2", &self.s2),
            ("r2", &self.r2),
            ("s3", &self.s3),
        ] {
            if v.trim().is_empty() {
                return Err(format!("`{name}` is empty"));
            }
        }
        Ok(())
    }
}

pub fn load_triples(path: impl AsRef<Path>) -> Result<Vec<KnowledgeTriplePair>> {
    let mut out = Vec::new();
    read_jsonl(path.as_ref(), |_, t: KnowledgeTriplePair| {
        t.validate()?;
        out.push(t);
        Ok(())
    })?;
    Ok(out)
}

/// Prompt templates with `{s1}`, `{r1}`, `{s2}`, `{r2}` placeholders.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Template {
    pub single: String,
    pub multi: String,
}

impl Default for Template {
    fn default() -> Self {
        Self {
            single: "The {r2} of {s2} is".into(),
            multi: "The {r2} of the {r1} of {s1} is".into(),
        }
    }
}

impl Template {
    fn fill(pattern: &str, t: &KnowledgeTriplePair) -> String {
        pattern
            .replace("{s1}", t.s1.trim())
            .replace("{r1}", t.r1.trim())
            .replace("{s2}", t.s2.trim())
            .replace("{r2}", t.r2.trim())
            .trim_end()
            .to_string()
    }

    pub fn apply(&self, t: &KnowledgeTriplePair, id: String) -> PromptPair {
        PromptPair {
            id,
            single_hop: Self::fill(&self.single, t),
            multi_hop: Self::fill(&self.multi, t),
            answer: t.s3.trim().to_string(),
            memory: t.s2.trim().to_string(),
            source: Source::Wmh,
        }
    }
}

/// Prompt pairs from the default template, one per triple, in order.
pub fn generate_2wmh(triples: &[KnowledgeTriplePair]) -> Vec<PromptPair> {
    generate_2wmh_with(triples, &Template::default())
}

pub fn generate_2wmh_with(triples: &[KnowledgeTriplePair], template: &Template) -> Vec<PromptPair> {
    triples
        .iter()
        .enumerate()
        .map(|(i, t)| template.apply(t, format!("2wmh-{i:04}")))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PartOfSpeech {
    Adjectives,
    Adverbs,
    Conjunctions,
    Nouns,
    Verbs,
    Top5050,
}

impl PartOfSpeech {
    pub const ALL: [PartOfSpeech; 6] = [
        PartOfSpeech::Adjectives,
        PartOfSpeech::Adverbs,
        PartOfSpeech::Conjunctions,
        PartOfSpeech::Nouns,
        PartOfSpeech::Verbs,
        PartOfSpeech::Top5050,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PartOfSpeech::Adjectives => "adjectives",
            PartOfSpeech::Adverbs => "adverbs",
            PartOfSpeech::Conjunctions => "conjunctions",
            PartOfSpeech::Nouns => "nouns",
            PartOfSpeech::Verbs => "verbs",
            PartOfSpeech::Top5050 => "top5050",
        }
    }
}

impl fmt::Display for PartOfSpeech {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PartOfSpeech {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.to_ascii_lowercase();
        PartOfSpeech::ALL
            .into_iter()
            .find(|p| p.name() == s || p.name().strip_suffix('s') == Some(s.as_str()))
            .ok_or_else(|| Error::argument(format!("unknown part of speech {s:?}")))
    }
}

#[derive(Deserialize)]
struct ManifestEntry {
    file: String,
    count: usize,
}

/// Frequency-ordered word lists per part of speech.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PosLexicon {
    lists: BTreeMap<PartOfSpeech, Vec<String>>,
}

impl PosLexicon {
    pub fn from_lists(lists: impl IntoIterator<Item = (PartOfSpeech, Vec<String>)>) -> Self {
        Self {
            lists: lists.into_iter().collect(),
        }
    }

    /// Reads `manifest.toml` and the TSV files it names from `dir`.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest_path = dir.join("manifest.toml");
        let text = std::fs::read_to_string(&manifest_path).map_err(|e| Error::load(&manifest_path, e))?;
        let manifest: BTreeMap<String, ManifestEntry> =
            toml::from_str(&text).map_err(|e| Error::load(&manifest_path, e))?;
        let mut lists = BTreeMap::new();
        for (name, entry) in manifest {
            let pos: PartOfSpeech = name.parse()?;
            let path = dir.join(&entry.file);
            let words = read_ranked_words(&path)?;
            if words.len() != entry.count {
                return Err(Error::Consistency(format!(
                    "{} has {} words, manifest says {}",
                    path.display(),
                    words.len(),
                    entry.count
                )));
            }
            lists.insert(pos, words);
        }
        Ok(Self { lists })
    }

    pub fn words(&self, pos: PartOfSpeech) -> Result<&[String]> {
        self.lists
            .get(&pos)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::argument(format!("lexicon has no {pos} list")))
    }

    pub fn parts(&self) -> impl Iterator<Item = PartOfSpeech> + '_ {
        self.lists.keys().copied()
    }

    pub fn len(&self, pos: PartOfSpeech) -> usize {
        self.lists.get(&pos).map_or(0, Vec::len)
    }

    /// One uniformly chosen word.
    pub fn random_word(&self, pos: PartOfSpeech, rng: &mut impl Rng) -> Result<&str> {
        self.words(pos)?
            .choose(rng)
            .map(String::as_str)
            .ok_or_else(|| Error::argument(format!("{pos} list is empty")))
    }
}

/// `word<TAB>rank` lines, returned in rank order.
fn read_ranked_words(path: &Path) -> Result<Vec<String>> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .has_headers(false)
        .quoting(false)
        .from_path(path)
        .map_err(|e| Error::load(path, e))?;
    let mut rows: Vec<(u64, String)> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::load(path, e))?;
        let fail = |message: String| Error::Dataset {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let word = record.get(0).map(str::trim).filter(|w| !w.is_empty()).ok_or_else(|| fail("missing word".into()))?;
        let rank = record
            .get(1)
            .ok_or_else(|| fail("missing rank".into()))?
            .trim()
            .parse::<u64>()
            .map_err(|e| fail(format!("bad rank: {e}")))?;
        rows.push((rank, word.to_string()));
    }
    rows.sort_by_key(|(rank, _)| *rank);
    Ok(rows.into_iter().map(|(_, w)| w).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SampleMode {
    TopN(usize),
    Random { seed: u64 },
}

/// The `n` most frequent words, or one seeded random word.
pub fn sample_pos_words(lex: &PosLexicon, pos: PartOfSpeech, mode: SampleMode) -> Result<Vec<String>> {
    let words = lex.words(pos)?;
    match mode {
        SampleMode::TopN(n) => {
            if n == 0 || n > words.len() {
                return Err(Error::argument(format!(
                    "cannot take {n} words from the {} {pos}",
                    words.len()
                )));
            }
            Ok(words[..n].to_vec())
        }
        SampleMode::Random { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Ok(vec![lex.random_word(pos, &mut rng)?.to_string()])
        }
    }
}

/// `[datasets]` and optional `[[templates]]` from a TOML file. Relative
/// paths are resolved against the file's directory.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetConfig {
    #[serde(default)]
    pub datasets: DatasetPaths,
    #[serde(default)]
    pub templates: Vec<Template>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetPaths {
    pub golden: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub hand: Option<PathBuf>,
    pub wmh: Option<PathBuf>,
    pub wmh_triples: Option<PathBuf>,
}

pub const CONFIG_FILE: &str = "memhop.toml";

impl DatasetConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::load(path, e))?;
        let mut config: DatasetConfig = toml::from_str(&text).map_err(|e| Error::load(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let d = &mut config.datasets;
        for p in [&mut d.golden, &mut d.lexicon, &mut d.hand, &mut d.wmh, &mut d.wmh_triples]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(config)
    }

    /// Searches `start` and its ancestors for `memhop.toml`.
    pub fn discover(start: impl AsRef<Path>) -> Option<PathBuf> {
        start
            .as_ref()
            .ancestors()
            .map(|d| d.join(CONFIG_FILE))
            .find(|p| p.is_file())
    }

    /// Templates to use for generation; the built-in pair when none are
    /// configured.
    pub fn templates(&self) -> Vec<Template> {
        if self.templates.is_empty() {
            vec![Template::default()]
        } else {
            self.templates.clone()
        }
    }

    /// Resolves a dataset name (`golden`, `hand`, `2wmh`) or a path.
    pub fn dataset_path(&self, name: &str) -> Result<PathBuf> {
        let d = &self.datasets;
        let found = match name {
            "golden" => d.golden.clone(),
            "hand" => d.hand.clone(),
            "2wmh" | "wmh" => d.wmh.clone(),
            path => return Ok(PathBuf::from(path)),
        };
        found.ok_or_else(|| Error::argument(format!("dataset `{name}` is not configured")))
    }

    pub fn lexicon(&self) -> Result<PosLexicon> {
        let dir = self
            .datasets
            .lexicon
            .as_ref()
            .ok_or_else(|| Error::argument("no lexicon directory configured"))?;
        PosLexicon::load(dir)
    }
}
