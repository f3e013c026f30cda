//! Dataset statistics, (ℓ, τ) injection sweeps, random-word baselines and
//! part-of-speech sweeps, with outlier-filtered aggregation.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datasets::{PartOfSpeech, PosLexicon, PromptPair, SampleMode, sample_pos_words};
use crate::engine::Engine;
use crate::error::{Error, Result};
use crate::injection::{
    memory_vector_from_tokens, percent_difference, InjectionHook, MemoryBasis, PositionPolicy,
};
use crate::model::{residual_stream, resume_last_logits};
use crate::tensor::{softmax, Tensor2D};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogBase {
    #[default]
    Natural,
    Two,
}

impl FromStr for LogBase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "e" | "nat" | "natural" | "ln" => Ok(LogBase::Natural),
            "2" | "bits" | "two" => Ok(LogBase::Two),
            other => Err(Error::argument(format!("unknown log base {other:?} (e|2)"))),
        }
    }
}

/// −log p.
pub fn surprisal(p: f64, base: LogBase) -> Result<f64> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Domain(format!("surprisal needs p in (0, 1], got {p}")));
    }
    Ok(match base {
        LogBase::Natural => -p.ln(),
        LogBase::Two => -p.log2(),
    })
}

/// Probability of the first token of `" " + answer` after `prompt`.
pub fn answer_probability(engine: &Engine, prompt: &str, answer: &str) -> Result<f64> {
    Ok(engine.answer_probability(prompt, answer)? as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RobustMean {
    pub mean: f64,
    pub std: f64,
    pub n_used: usize,
    pub n_excluded: usize,
}

fn mean_std(sorted: &[f64]) -> (f64, f64) {
    let n = sorted.len() as f64;
    let mean = sorted.iter().sum::<f64>() / n;
    let var = sorted.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Mean and population std after one pass of ±2σ outlier removal.
///
/// Values are summed in sorted order, so the result does not depend on the
/// order they arrive in.
pub fn robust_mean(values: &[f64]) -> Result<RobustMean> {
    if values.is_empty() {
        return Err(Error::argument("robust_mean of an empty list"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::argument("robust_mean input contains a non-finite value"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (mu, sigma) = mean_std(&sorted);
    let (lo, hi) = (mu - 2.0 * sigma, mu + 2.0 * sigma);
    let kept: Vec<f64> = sorted.iter().copied().filter(|v| (lo..=hi).contains(v)).collect();
    let (mean, std) = mean_std(&kept);
    Ok(RobustMean {
        mean,
        std,
        n_used: kept.len(),
        n_excluded: sorted.len() - kept.len(),
    })
}

/// One (ℓ, τ) heatmap cell.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepCell {
    pub layer: usize,
    pub tau: f32,
    /// NaN when every evaluation was undefined.
    pub mean_pct: f64,
    pub std_pct: f64,
    pub n_used: usize,
    pub n_excluded: usize,
    /// Evaluations whose pre-injection probability was 0.
    pub n_undefined: usize,
}

impl SweepCell {
    fn from_values(layer: usize, tau: f32, values: &[f64], n_undefined: usize) -> Self {
        match robust_mean(values) {
            Ok(r) => SweepCell {
                layer,
                tau,
                mean_pct: r.mean,
                std_pct: r.std,
                n_used: r.n_used,
                n_excluded: r.n_excluded,
                n_undefined,
            },
            Err(_) => SweepCell {
                layer,
                tau,
                mean_pct: f64::NAN,
                std_pct: f64::NAN,
                n_used: 0,
                n_excluded: 0,
                n_undefined,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub pair_id: String,
    pub memory: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pos: Option<PartOfSpeech>,
    pub layer: usize,
    pub tau: f32,
    pub policy: PositionPolicy,
    pub pre_prob: f64,
    pub post_prob: f64,
    /// None when `pre_prob` is 0.
    pub pct_diff: Option<f64>,
}

/// Which injections a sweep evaluates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSettings {
    pub layers: Vec<usize>,
    pub taus: Vec<f32>,
    #[serde(default)]
    pub policy: PositionPolicy,
    #[serde(default)]
    pub basis: MemoryBasis,
}

impl SweepSettings {
    pub fn new(layers: Vec<usize>, taus: Vec<f32>) -> Self {
        Self {
            layers,
            taus,
            policy: PositionPolicy::All,
            basis: MemoryBasis::Unembedding,
        }
    }

    /// Layers 0..L and τ = 1..=15.
    pub fn full(n_layer: usize) -> Self {
        Self::new((0..n_layer).collect(), (1..=15).map(|t| t as f32).collect())
    }

    fn validate(&self, engine: &Engine) -> Result<()> {
        if self.layers.is_empty() || self.taus.is_empty() {
            return Err(Error::argument("sweep needs at least one layer and one tau"));
        }
        let n = engine.config().n_layer;
        if let Some(l) = self.layers.iter().find(|&&l| l >= n) {
            return Err(Error::argument(format!("layer {l} out of range (model has {n})")));
        }
        if let Some(t) = self.taus.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
            return Err(Error::argument(format!("tau {t} must be finite and nonnegative")));
        }
        Ok(())
    }
}

/// A prompt with its clean run already done: the residual stream entering
/// every layer and the clean answer probability.
struct Prepared {
    resids: Vec<Tensor2D>,
    answer: u32,
    pre: f64,
}

impl Prepared {
    fn new(engine: &Engine, prompt: &str, answer: &str) -> Result<Self> {
        let w = engine.weights();
        let tokens = engine.encode_prompt(prompt)?;
        let answer = engine.answer_token(answer)?;
        let resids = residual_stream(w, &tokens)?;
        let n_layer = w.config().n_layer;
        let pre = softmax(&resume_last_logits(w, &resids[n_layer], n_layer, None)?)[answer as usize] as f64;
        Ok(Self { resids, answer, pre })
    }

    fn post(&self, engine: &Engine, layer: usize, tau: f32, vector: &[f32], policy: PositionPolicy) -> Result<f64> {
        let hook = InjectionHook {
            layer,
            tau,
            vector,
            policy,
        };
        let logits = resume_last_logits(engine.weights(), &self.resids[layer], layer, Some(&hook))?;
        Ok(softmax(&logits)[self.answer as usize] as f64)
    }

    #[allow(clippy::too_many_arguments)]
    fn record(
        &self,
        engine: &Engine,
        pair: &PromptPair,
        memory: &str,
        pos: Option<PartOfSpeech>,
        layer: usize,
        tau: f32,
        vector: &[f32],
        policy: PositionPolicy,
    ) -> Result<EvalRecord> {
        let post = self.post(engine, layer, tau, vector, policy)?;
        Ok(EvalRecord {
            pair_id: pair.id.clone(),
            memory: memory.to_string(),
            pos,
            layer,
            tau,
            policy,
            pre_prob: self.pre,
            post_prob: post,
            pct_diff: percent_difference(self.pre, post).ok(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Failure {
    pub pair_id: String,
    pub message: String,
}

/// Runs `eval` on every pair in parallel. Failures are logged and returned
/// separately; records keep the input order.
fn per_pair<F>(pairs: &[PromptPair], eval: F) -> (Vec<EvalRecord>, Vec<Failure>)
where
    F: Fn(&PromptPair) -> Result<Vec<EvalRecord>> + Sync,
{
    let results: Vec<_> = pairs.par_iter().map(|p| (p, eval(p))).collect();
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (pair, result) in results {
        match result {
            Ok(r) => records.extend(r),
            Err(e) => {
                log::warn!("skipping {}: {e}", pair.id);
                failures.push(Failure {
                    pair_id: pair.id.clone(),
                    message: e.to_string(),
                });
            }
        }
    }
    (records, failures)
}

fn aggregate<'a>(records: impl IntoIterator<Item = &'a EvalRecord>) -> (Vec<f64>, usize) {
    let mut values = Vec::new();
    let mut undefined = 0;
    for r in records {
        match r.pct_diff {
            Some(v) => values.push(v),
            None => undefined += 1,
        }
    }
    (values, undefined)
}

fn grid(settings: &SweepSettings, records: &[EvalRecord]) -> Vec<SweepCell> {
    let mut cells = Vec::with_capacity(settings.layers.len() * settings.taus.len());
    for &layer in &settings.layers {
        for &tau in &settings.taus {
            let (values, undefined) = aggregate(records.iter().filter(|r| r.layer == layer && r.tau == tau));
            cells.push(SweepCell::from_values(layer, tau, &values, undefined));
        }
    }
    cells
}

/// Best cell by mean percent difference.
pub fn best_cell(cells: &[SweepCell]) -> Option<&SweepCell> {
    cells
        .iter()
        .filter(|c| c.mean_pct.is_finite())
        .max_by(|a, b| a.mean_pct.total_cmp(&b.mean_pct))
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepOutput {
    pub settings: SweepSettings,
    pub cells: Vec<SweepCell>,
    pub records: Vec<EvalRecord>,
    pub failures: Vec<Failure>,
}

impl SweepOutput {
    pub fn cell(&self, layer: usize, tau: f32) -> Option<&SweepCell> {
        self.cells.iter().find(|c| c.layer == layer && c.tau == tau)
    }

    pub fn best(&self) -> Option<&SweepCell> {
        best_cell(&self.cells)
    }

    /// Writes `grid.csv`, `records.jsonl` and `summary.json` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>, extra: serde_json::Value) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        write_grid_csv(dir.join("grid.csv"), &self.cells)?;
        write_jsonl(dir.join("records.jsonl"), &self.records)?;
        let summary = serde_json::json!({
            "settings": self.settings,
            "best": self.best(),
            "n_records": self.records.len(),
            "n_undefined": self.records.iter().filter(|r| r.pct_diff.is_none()).count(),
            "failures": self.failures,
            "extra": extra,
        });
        write_json(dir.join("summary.json"), &summary)
    }
}

pub fn write_grid_csv(path: impl AsRef<Path>, cells: &[SweepCell]) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    w.write_record(["layer", "tau", "mean_pct", "std_pct", "n_used", "n_excluded", "n_undefined"])?;
    for c in cells {
        w.write_record([
            c.layer.to_string(),
            c.tau.to_string(),
            format!("{:.9e}", c.mean_pct),
            format!("{:.9e}", c.std_pct),
            c.n_used.to_string(),
            c.n_excluded.to_string(),
            c.n_undefined.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, items: &[T]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn check_pairs(pairs: &[PromptPair]) -> Result<()> {
    if pairs.is_empty() {
        return Err(Error::argument("no prompt pairs to evaluate"));
    }
    Ok(())
}

/// Injects each pair's own memory into its multi-hop prompt at every
/// (ℓ, τ) of `settings`.
pub fn curated_sweep(engine: &Engine, pairs: &[PromptPair], settings: &SweepSettings) -> Result<SweepOutput> {
    check_pairs(pairs)?;
    settings.validate(engine)?;
    let (records, failures) = per_pair(pairs, |pair| {
        let prepared = Prepared::new(engine, &pair.multi_hop, &pair.answer)?;
        let memory = memory_vector_from_tokens(engine.weights(), &engine.memory_tokens(&pair.memory)?, settings.basis)?;
        let mut out = Vec::with_capacity(settings.layers.len() * settings.taus.len());
        for &layer in &settings.layers {
            for &tau in &settings.taus {
                out.push(prepared.record(engine, pair, &pair.memory, None, layer, tau, &memory.b_star, settings.policy)?);
            }
        }
        Ok(out)
    });
    let cells = grid(settings, &records);
    Ok(SweepOutput {
        settings: settings.clone(),
        cells,
        records,
        failures,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct PosSummary {
    pub pos: PartOfSpeech,
    pub words: Vec<String>,
    pub mean_pct: f64,
    pub std_pct: f64,
    pub n_used: usize,
    pub n_excluded: usize,
    pub n_undefined: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct RandomEvalOutput {
    pub layer: usize,
    pub tau: f32,
    pub policy: PositionPolicy,
    pub per_pos: Vec<PosSummary>,
    pub records: Vec<EvalRecord>,
    pub failures: Vec<Failure>,
}

impl RandomEvalOutput {
    pub fn summary(&self, pos: PartOfSpeech) -> Option<&PosSummary> {
        self.per_pos.iter().find(|s| s.pos == pos)
    }

    /// Writes `grid.csv` (one row per part of speech), `records.jsonl` and
    /// `summary.json`.
    pub fn write(&self, dir: impl AsRef<Path>, extra: serde_json::Value) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let mut w = csv::Writer::from_path(dir.join("grid.csv"))?;
        w.write_record(["pos", "layer", "tau", "mean_pct", "std_pct", "n_used", "n_excluded", "n_undefined"])?;
        for s in &self.per_pos {
            w.write_record([
                s.pos.to_string(),
                self.layer.to_string(),
                self.tau.to_string(),
                format!("{:.9e}", s.mean_pct),
                format!("{:.9e}", s.std_pct),
                s.n_used.to_string(),
                s.n_excluded.to_string(),
                s.n_undefined.to_string(),
            ])?;
        }
        w.flush()?;
        write_jsonl(dir.join("records.jsonl"), &self.records)?;
        let summary = serde_json::json!({
            "layer": self.layer,
            "tau": self.tau,
            "policy": self.policy,
            "per_pos": self.per_pos,
            "failures": self.failures,
            "extra": extra,
        });
        write_json(dir.join("summary.json"), &summary)
    }
}

/// Injects each of the `n_words` most frequent words of every part of
/// speech into every multi-hop prompt at one (ℓ, τ).
pub fn random_injection_eval(
    engine: &Engine,
    pairs: &[PromptPair],
    lex: &PosLexicon,
    layer: usize,
    tau: f32,
    n_words: usize,
    policy: PositionPolicy,
    basis: MemoryBasis,
) -> Result<RandomEvalOutput> {
    check_pairs(pairs)?;
    let settings = SweepSettings {
        layers: vec![layer],
        taus: vec![tau],
        policy,
        basis,
    };
    settings.validate(engine)?;
    let parts: Vec<PartOfSpeech> = lex.parts().collect();
    let mut words = BTreeMap::new();
    let mut vectors: BTreeMap<String, Vec<f32>> = BTreeMap::new();
    for &pos in &parts {
        let list = sample_pos_words(lex, pos, SampleMode::TopN(n_words))?;
        for word in &list {
            if !vectors.contains_key(word) {
                let v = memory_vector_from_tokens(engine.weights(), &engine.memory_tokens(word)?, basis)?;
                vectors.insert(word.clone(), v.b_star);
            }
        }
        words.insert(pos, list);
    }

    let (records, failures) = per_pair(pairs, |pair| {
        let prepared = Prepared::new(engine, &pair.multi_hop, &pair.answer)?;
        let mut out = Vec::new();
        for (&pos, list) in &words {
            for word in list {
                out.push(prepared.record(engine, pair, word, Some(pos), layer, tau, &vectors[word], policy)?);
            }
        }
        Ok(out)
    });

    let per_pos = words
        .into_iter()
        .map(|(pos, list)| {
            let (values, n_undefined) = aggregate(records.iter().filter(|r| r.pos == Some(pos)));
            let cell = SweepCell::from_values(layer, tau, &values, n_undefined);
            PosSummary {
                pos,
                words: list,
                mean_pct: cell.mean_pct,
                std_pct: cell.std_pct,
                n_used: cell.n_used,
                n_excluded: cell.n_excluded,
                n_undefined,
            }
        })
        .collect();
    Ok(RandomEvalOutput {
        layer,
        tau,
        policy,
        per_pos,
        records,
        failures,
    })
}

/// Mean and std pooled over one layer (all τ) or one τ (all layers).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Marginal {
    pub key: f64,
    pub mean_pct: f64,
    pub std_pct: f64,
    pub n_used: usize,
    pub n_excluded: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct PosGrid {
    pub pos: PartOfSpeech,
    pub cells: Vec<SweepCell>,
    pub by_layer: Vec<Marginal>,
    pub by_tau: Vec<Marginal>,
    /// Robust mean over every evaluation of this part of speech.
    pub overall: Option<RobustMean>,
}

impl PosGrid {
    pub fn cell(&self, layer: usize, tau: f32) -> Option<&SweepCell> {
        self.cells.iter().find(|c| c.layer == layer && c.tau == tau)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PosSweepOutput {
    pub settings: SweepSettings,
    pub seed: u64,
    pub grids: Vec<PosGrid>,
    pub records: Vec<EvalRecord>,
    pub failures: Vec<Failure>,
}

impl PosSweepOutput {
    pub fn grid(&self, pos: PartOfSpeech) -> Option<&PosGrid> {
        self.grids.iter().find(|g| g.pos == pos)
    }

    /// Writes `grid.csv` (with a leading `pos` column), `marginals.csv`,
    /// `records.jsonl` and `summary.json`.
    pub fn write(&self, dir: impl AsRef<Path>, extra: serde_json::Value) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let mut w = csv::Writer::from_path(dir.join("grid.csv"))?;
        w.write_record(["pos", "layer", "tau", "mean_pct", "std_pct", "n_used", "n_excluded", "n_undefined"])?;
        for g in &self.grids {
            for c in &g.cells {
                w.write_record([
                    g.pos.to_string(),
                    c.layer.to_string(),
                    c.tau.to_string(),
                    format!("{:.9e}", c.mean_pct),
                    format!("{:.9e}", c.std_pct),
                    c.n_used.to_string(),
                    c.n_excluded.to_string(),
                    c.n_undefined.to_string(),
                ])?;
            }
        }
        w.flush()?;
        let mut m = csv::Writer::from_path(dir.join("marginals.csv"))?;
        m.write_record(["pos", "axis", "value", "mean_pct", "std_pct", "n_used", "n_excluded"])?;
        for g in &self.grids {
            for (axis, list) in [("layer", &g.by_layer), ("tau", &g.by_tau)] {
                for x in list {
                    m.write_record([
                        g.pos.to_string(),
                        axis.to_string(),
                        x.key.to_string(),
                        format!("{:.9e}", x.mean_pct),
                        format!("{:.9e}", x.std_pct),
                        x.n_used.to_string(),
                        x.n_excluded.to_string(),
                    ])?;
                }
            }
        }
        m.flush()?;
        write_jsonl(dir.join("records.jsonl"), &self.records)?;
        let best: BTreeMap<String, Option<&SweepCell>> =
            self.grids.iter().map(|g| (g.pos.to_string(), best_cell(&g.cells))).collect();
        let overall: BTreeMap<String, Option<RobustMean>> =
            self.grids.iter().map(|g| (g.pos.to_string(), g.overall)).collect();
        let summary = serde_json::json!({
            "settings": self.settings,
            "seed": self.seed,
            "best": best,
            "overall": overall,
            "failures": self.failures,
            "extra": extra,
        });
        write_json(dir.join("summary.json"), &summary)
    }
}

/// Seed for one (pos, prompt, ℓ, τ) evaluation.
fn eval_seed(seed: u64, parts: [u64; 4]) -> u64 {
    // splitmix64 over the key, so neighbouring keys give unrelated streams
    let mut x = seed;
    for p in parts {
        x = x.wrapping_add(p).wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = x;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        x = z ^ (z >> 31);
    }
    x
}

fn marginals(records: &[&EvalRecord], keys: &[f64], key: impl Fn(&EvalRecord) -> f64) -> Vec<Marginal> {
    keys.iter()
        .filter_map(|&k| {
            let (values, _) = aggregate(records.iter().copied().filter(|r| key(r) == k));
            robust_mean(&values).ok().map(|r| Marginal {
                key: k,
                mean_pct: r.mean,
                std_pct: r.std,
                n_used: r.n_used,
                n_excluded: r.n_excluded,
            })
        })
        .collect()
}

/// Like [`curated_sweep`], but each (pos, prompt, ℓ, τ) evaluation injects
/// a fresh seeded random word of that part of speech.
pub fn pos_sweep(
    engine: &Engine,
    pairs: &[PromptPair],
    lex: &PosLexicon,
    settings: &SweepSettings,
    seed: u64,
) -> Result<PosSweepOutput> {
    check_pairs(pairs)?;
    settings.validate(engine)?;
    let parts: Vec<PartOfSpeech> = lex.parts().collect();
    let indexed: Vec<(usize, &PromptPair)> = pairs.iter().enumerate().collect();
    let key_of = |pair_index: usize| pair_index as u64;

    let results: Vec<_> = indexed
        .par_iter()
        .map(|&(i, pair)| {
            let run = || -> Result<Vec<EvalRecord>> {
                let prepared = Prepared::new(engine, &pair.multi_hop, &pair.answer)?;
                let mut out = Vec::new();
                for &pos in &parts {
                    for &layer in &settings.layers {
                        for (ti, &tau) in settings.taus.iter().enumerate() {
                            let s = eval_seed(seed, [pos as u64, key_of(i), layer as u64, ti as u64]);
                            let mut rng = ChaCha8Rng::seed_from_u64(s);
                            let word = lex.random_word(pos, &mut rng)?;
                            let v = memory_vector_from_tokens(
                                engine.weights(),
                                &engine.memory_tokens(word)?,
                                settings.basis,
                            )?;
                            out.push(prepared.record(engine, pair, word, Some(pos), layer, tau, &v.b_star, settings.policy)?);
                        }
                    }
                }
                Ok(out)
            };
            (pair, run())
        })
        .collect();

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (pair, result) in results {
        match result {
            Ok(r) => records.extend(r),
            Err(e) => {
                log::warn!("skipping {}: {e}", pair.id);
                failures.push(Failure {
                    pair_id: pair.id.clone(),
                    message: e.to_string(),
                });
            }
        }
    }

    let layer_keys: Vec<f64> = settings.layers.iter().map(|&l| l as f64).collect();
    let tau_keys: Vec<f64> = settings.taus.iter().map(|&t| t as f64).collect();
    let grids = parts
        .iter()
        .map(|&pos| {
            let own: Vec<EvalRecord> = records.iter().filter(|r| r.pos == Some(pos)).cloned().collect();
            let refs: Vec<&EvalRecord> = own.iter().collect();
            let (all, _) = aggregate(own.iter());
            PosGrid {
                pos,
                cells: grid(settings, &own),
                by_layer: marginals(&refs, &layer_keys, |r| r.layer as f64),
                by_tau: marginals(&refs, &tau_keys, |r| r.tau as f64),
                overall: robust_mean(&all).ok(),
            }
        })
        .collect();
    Ok(PosSweepOutput {
        settings: settings.clone(),
        seed,
        grids,
        records,
        failures,
    })
}

/// Averages for one side (single- or multi-hop) of a dataset.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HopStats {
    pub answer_prob: f64,
    pub surprisal_nat: f64,
    pub surprisal_bits: f64,
    pub prompt_len: f64,
    pub n: usize,
    /// Prompts whose answer probability was exactly 0 (left out of the
    /// surprisal means).
    pub n_zero: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DatasetStats {
    pub size: usize,
    pub model: String,
    pub single_hop: HopStats,
    pub multi_hop: HopStats,
    pub failures: Vec<Failure>,
}

impl fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "size {} model {}", self.size, self.model)?;
        for (name, h) in [("single-hop", &self.single_hop), ("multi-hop", &self.multi_hop)] {
            writeln!(
                f,
                "{name:>10}: answer prob {:.4}  surprisal {:.3} nat / {:.3} bit  prompt len {:.2}",
                h.answer_prob, h.surprisal_nat, h.surprisal_bits, h.prompt_len
            )?;
        }
        Ok(())
    }
}

fn hop_stats(rows: &[(f64, usize)]) -> HopStats {
    let n = rows.len();
    let nonzero: Vec<f64> = rows.iter().map(|r| r.0).filter(|&p| p > 0.0).collect();
    let mean = |xs: &[f64]| if xs.is_empty() { f64::NAN } else { xs.iter().sum::<f64>() / xs.len() as f64 };
    let nat: Vec<f64> = nonzero.iter().map(|&p| -p.ln()).collect();
    let bits: Vec<f64> = nonzero.iter().map(|&p| -p.log2()).collect();
    HopStats {
        answer_prob: mean(&rows.iter().map(|r| r.0).collect::<Vec<_>>()),
        surprisal_nat: mean(&nat),
        surprisal_bits: mean(&bits),
        prompt_len: mean(&rows.iter().map(|r| r.1 as f64).collect::<Vec<_>>()),
        n,
        n_zero: n - nonzero.len(),
    }
}

/// Answer probability, surprisal and prompt length averaged over a
/// dataset, for both prompt forms. Prompt length counts text tokens only.
pub fn dataset_stats(engine: &Engine, pairs: &[PromptPair]) -> Result<DatasetStats> {
    check_pairs(pairs)?;
    let results: Vec<_> = pairs
        .par_iter()
        .map(|pair| {
            let one = |prompt: &str| -> Result<(f64, usize)> {
                Ok((
                    answer_probability(engine, prompt, &pair.answer)?,
                    engine.vocab().encode(prompt).len(),
                ))
            };
            (pair, one(&pair.single_hop).and_then(|s| Ok((s, one(&pair.multi_hop)?))))
        })
        .collect();
    let mut single = Vec::new();
    let mut multi = Vec::new();
    let mut failures = Vec::new();
    for (pair, r) in results {
        match r {
            Ok((s, m)) => {
                single.push(s);
                multi.push(m);
            }
            Err(e) => {
                log::warn!("skipping {}: {e}", pair.id);
                failures.push(Failure {
                    pair_id: pair.id.clone(),
                    message: e.to_string(),
                });
            }
        }
    }
    Ok(DatasetStats {
        size: pairs.len(),
        model: engine.info().name,
        single_hop: hop_stats(&single),
        multi_hop: hop_stats(&multi),
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn robust_mean_examples() {
        let r = robust_mean(&[4.0; 7]).unwrap();
        assert_eq!((r.mean, r.std, r.n_used, r.n_excluded), (4.0, 0.0, 7, 0));

        let mut v = vec![0.0; 19];
        v.push(100.0);
        let r = robust_mean(&v).unwrap();
        assert_eq!(r.mean, 0.0);
        assert_eq!(r.n_excluded, 1);
        assert_eq!(r.n_used, 19);

        let r = robust_mean(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((r.mean, r.n_excluded), (2.0, 0));
        assert!(robust_mean(&[]).is_err());
    }

    #[test]
    fn surprisal_values() {
        assert_eq!(surprisal(1.0, LogBase::Natural).unwrap(), 0.0);
        assert!((surprisal((-1.0f64).exp(), LogBase::Natural).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(surprisal(0.25, LogBase::Two).unwrap(), 2.0);
        assert!(matches!(surprisal(0.0, LogBase::Natural), Err(Error::Domain(_))));
        assert!(surprisal(1.5, LogBase::Natural).is_err());
    }

    #[test]
    fn eval_seeds_differ_per_key() {
        let a = eval_seed(7, [0, 0, 0, 0]);
        assert_eq!(a, eval_seed(7, [0, 0, 0, 0]));
        assert_ne!(a, eval_seed(7, [0, 0, 0, 1]));
        assert_ne!(a, eval_seed(8, [0, 0, 0, 0]));
    }
}
