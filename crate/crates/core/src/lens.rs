//! Attention-head logit lens: read a head's output at the last position as a
//! distribution over the vocabulary.

use std::collections::HashSet;

use serde::ser::{SerializeTuple, Serializer};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{forward, ActivationCache, Gpt2Weights};
use crate::tensor::{layer_norm, softmax, top_k, Tensor2D};
use crate::tokenizer::Vocabulary;

pub const DEFAULT_K: usize = 30;

/// How a d-vector is mapped to vocabulary logits.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Projection {
    /// `h · W_U`
    #[default]
    Raw,
    /// `LN_f(h) · W_U`, the model's own readout.
    FinalLayerNorm,
    /// `(γ_f ⊙ (h − mean h)) · W_U`: the final norm's centering and gain
    /// folded into the unembedding, without the per-vector rescale or bias.
    FoldedLayerNorm,
}

impl Projection {
    pub fn from_flag(apply_final_ln: bool) -> Self {
        if apply_final_ln {
            Projection::FinalLayerNorm
        } else {
            Projection::Raw
        }
    }
}

/// A token with its probability; serializes as `[token, prob]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RankedToken {
    pub id: u32,
    pub token: String,
    pub prob: f32,
}

impl Serialize for RankedToken {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut t = s.serialize_tuple(2)?;
        t.serialize_element(&self.token)?;
        t.serialize_element(&(self.prob as f64))?;
        t.end()
    }
}

/// Top-k of a distribution, rendered through the vocabulary.
pub fn ranked(vocab: &Vocabulary, probs: &[f32], k: usize) -> Result<Vec<RankedToken>> {
    top_k(probs, k)?
        .into_iter()
        .map(|(id, prob)| {
            Ok(RankedToken {
                id,
                token: vocab.token_text(id)?,
                prob,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LensEntry {
    pub layer: usize,
    pub head: usize,
    #[serde(rename = "tokens")]
    pub topk: Vec<RankedToken>,
}

impl LensEntry {
    pub fn token_ids(&self) -> HashSet<u32> {
        self.topk.iter().map(|t| t.id).collect()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.topk.iter().any(|t| t.token == token)
    }
}

/// Size of the intersection of two entries' top-k token sets.
pub fn overlap(a: &LensEntry, b: &LensEntry) -> usize {
    a.token_ids().intersection(&b.token_ids()).count()
}

/// Maps each row of an n × d matrix to vocabulary logits.
pub fn project_rows(weights: &Gpt2Weights, x: &Tensor2D, projection: Projection) -> Result<Tensor2D> {
    let c = weights.config();
    match projection {
        Projection::Raw => weights.unembed(x),
        Projection::FinalLayerNorm => weights.unembed(&layer_norm(x, &weights.lnf_gamma, &weights.lnf_beta, c.ln_eps)?),
        Projection::FoldedLayerNorm => {
            let mut folded = x.clone();
            for r in 0..folded.rows() {
                let row = folded.row_mut(r);
                let mean = row.iter().map(|&v| v as f64).sum::<f64>() / row.len() as f64;
                for (v, g) in row.iter_mut().zip(&weights.lnf_gamma) {
                    *v = (*v - mean as f32) * g;
                }
            }
            weights.unembed(&folded)
        }
    }
}

/// Vocabulary distribution for one d-vector.
pub fn project_vector(weights: &Gpt2Weights, v: &[f32], projection: Projection) -> Result<Vec<f32>> {
    let logits = project_rows(weights, &Tensor2D::row_vector(v), projection)?;
    Ok(softmax(logits.row(0)))
}

fn check_head(weights: &Gpt2Weights, layer: usize, head: usize) -> Result<()> {
    let c = weights.config();
    if layer >= c.n_layer || head >= c.n_head {
        return Err(Error::argument(format!(
            "(layer {layer}, head {head}) outside the {}x{} grid",
            c.n_layer, c.n_head
        )));
    }
    Ok(())
}

/// Lens readout of head `head` at layer `layer`, last token position.
pub fn project_head(
    weights: &Gpt2Weights,
    vocab: &Vocabulary,
    cache: &ActivationCache,
    layer: usize,
    head: usize,
    k: usize,
    projection: Projection,
) -> Result<LensEntry> {
    check_head(weights, layer, head)?;
    let h = cache.head(layer, head)?;
    let probs = project_vector(weights, h.last_row(), projection)?;
    Ok(LensEntry {
        layer,
        head,
        topk: ranked(vocab, &probs, k)?,
    })
}

/// Every head of a cached run, row-major by (layer, head).
pub fn lens_grid(
    weights: &Gpt2Weights,
    vocab: &Vocabulary,
    cache: &ActivationCache,
    k: usize,
    projection: Projection,
) -> Result<Vec<LensEntry>> {
    let c = weights.config();
    if k == 0 || k > c.vocab_size {
        return Err(Error::argument(format!("k = {k} must be in 1..={}", c.vocab_size)));
    }
    let rows: Vec<&[f32]> = cache
        .layers
        .iter()
        .flat_map(|l| l.heads.iter().map(|h| h.last_row()))
        .collect();
    // One product for the whole grid.
    let logits = project_rows(weights, &Tensor2D::from_rows(&rows)?, projection)?;
    (0..rows.len())
        .map(|i| {
            Ok(LensEntry {
                layer: i / c.n_head,
                head: i % c.n_head,
                topk: ranked(vocab, &softmax(logits.row(i)), k)?,
            })
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct LensReport {
    pub prompt: String,
    pub k: usize,
    pub projection: Projection,
    pub n_layer: usize,
    pub n_head: usize,
    pub grid: Vec<LensEntry>,
}

impl LensReport {
    pub fn cell(&self, layer: usize, head: usize) -> Option<&LensEntry> {
        self.grid.get(layer * self.n_head + head).filter(|e| e.layer == layer && e.head == head)
    }
}

/// L × H lens grid from a single forward pass.
pub fn lens_report(
    weights: &Gpt2Weights,
    vocab: &Vocabulary,
    tokens: &[u32],
    k: usize,
    projection: Projection,
) -> Result<LensReport> {
    let cache = forward(weights, tokens, None)?;
    let grid = lens_grid(weights, vocab, &cache, k, projection)?;
    let c = weights.config();
    Ok(LensReport {
        prompt: vocab.decode(tokens)?,
        k,
        projection,
        n_layer: c.n_layer,
        n_head: c.n_head,
        grid,
    })
}
