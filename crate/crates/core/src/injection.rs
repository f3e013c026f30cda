//! Memory injection: embed a phrase back into hidden space and add it to an
//! attention layer's output.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{residual_before, resume_last_logits, AttentionHook, Gpt2Weights};
use crate::tensor::{softmax, Tensor2D};
use crate::tokenizer::Vocabulary;

/// Which sequence positions receive the memory vector.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PositionPolicy {
    #[default]
    #[serde(alias = "all-positions")]
    All,
    #[serde(alias = "last-position")]
    Last,
}

impl FromStr for PositionPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" | "all-positions" => Ok(Self::All),
            "last" | "last-position" => Ok(Self::Last),
            other => Err(Error::argument(format!("unknown position policy {other:?} (all|last)"))),
        }
    }
}

impl fmt::Display for PositionPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::All => "all",
            Self::Last => "last",
        })
    }
}

/// The d-vector each memory token contributes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemoryBasis {
    /// Row of W_Uᵀ (the token embedding when tied).
    #[default]
    Unembedding,
    /// `γ_f ⊙ (W_Uᵀ[t] − mean_v W_Uᵀ[v])`: the unembedding after folding the
    /// final norm gain into it and centering it over the vocabulary.
    FoldedUnembedding,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InjectionSpec {
    pub memory: String,
    pub layer: usize,
    pub tau: f32,
    #[serde(default)]
    pub policy: PositionPolicy,
    #[serde(default)]
    pub basis: MemoryBasis,
}

impl InjectionSpec {
    pub fn new(memory: impl Into<String>, layer: usize, tau: f32) -> Self {
        Self {
            memory: memory.into(),
            layer,
            tau,
            policy: PositionPolicy::All,
            basis: MemoryBasis::Unembedding,
        }
    }

    pub fn with_policy(mut self, policy: PositionPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn with_basis(mut self, basis: MemoryBasis) -> Self {
        self.basis = basis;
        self
    }

    pub fn validate(&self, weights: &Gpt2Weights) -> Result<()> {
        check_site(weights, self.layer, self.tau)
    }
}

fn check_site(weights: &Gpt2Weights, layer: usize, tau: f32) -> Result<()> {
    let n = weights.config().n_layer;
    if layer >= n {
        return Err(Error::argument(format!("injection layer {layer} out of range (model has {n})")));
    }
    if !(tau.is_finite() && tau >= 0.0) {
        return Err(Error::argument(format!("tau must be finite and nonnegative, got {tau}")));
    }
    Ok(())
}

/// B as token counts and its image B* in hidden space.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MemoryVector {
    pub tokens: Vec<u32>,
    pub counts: BTreeMap<u32, u32>,
    pub b_star: Vec<f32>,
}

impl MemoryVector {
    /// q, the number of memory tokens.
    pub fn q(&self) -> usize {
        self.tokens.len()
    }
}

/// Memory text as it is tokenized for injection: with a leading space.
pub fn memory_tokens(vocab: &Vocabulary, memory: &str) -> Result<Vec<u32>> {
    let text = if memory.starts_with(char::is_whitespace) {
        memory.to_string()
    } else {
        format!(" {memory}")
    };
    let ids = vocab.encode(&text).into_ids();
    if ids.is_empty() || memory.trim().is_empty() {
        return Err(Error::argument("memory text is empty"));
    }
    Ok(ids)
}

/// B* = B · W_Uᵀ for an already tokenized memory.
pub fn memory_vector_from_tokens(weights: &Gpt2Weights, tokens: &[u32], basis: MemoryBasis) -> Result<MemoryVector> {
    if tokens.is_empty() {
        return Err(Error::argument("memory has no tokens"));
    }
    let mut counts = BTreeMap::new();
    for &t in tokens {
        *counts.entry(t).or_insert(0u32) += 1;
    }
    let d = weights.config().d_model;
    let mut b_star = vec![0.0f32; d];
    for (&t, &n) in &counts {
        let row = weights.unembedding_column(t)?;
        for (acc, v) in b_star.iter_mut().zip(row) {
            *acc += n as f32 * v;
        }
    }
    if basis == MemoryBasis::FoldedUnembedding {
        let mean = mean_unembedding_column(weights);
        let q = tokens.len() as f32;
        for ((v, m), g) in b_star.iter_mut().zip(mean).zip(&weights.lnf_gamma) {
            *v = (*v - q * m) * g;
        }
    }
    Ok(MemoryVector {
        tokens: tokens.to_vec(),
        counts,
        b_star,
    })
}

fn mean_unembedding_column(weights: &Gpt2Weights) -> Vec<f32> {
    let wu = weights.unembedding_matrix();
    (0..wu.rows())
        .map(|r| (wu.row(r).iter().map(|&v| v as f64).sum::<f64>() / wu.cols() as f64) as f32)
        .collect()
}

/// Tokenizes `memory` with a leading space and builds its vector.
pub fn build_memory_vector(weights: &Gpt2Weights, vocab: &Vocabulary, memory: &str) -> Result<MemoryVector> {
    memory_vector_from_tokens(weights, &memory_tokens(vocab, memory)?, MemoryBasis::Unembedding)
}

/// Adds τ·v to a^ℓ at one layer.
#[derive(Clone, Copy, Debug)]
pub struct InjectionHook<'a> {
    pub layer: usize,
    pub tau: f32,
    pub vector: &'a [f32],
    pub policy: PositionPolicy,
}

impl AttentionHook for InjectionHook<'_> {
    fn apply(&self, layer: usize, attn_out: &mut Tensor2D) -> Result<()> {
        if layer != self.layer {
            return Ok(());
        }
        if self.vector.len() != attn_out.cols() {
            return Err(Error::Shape {
                op: "memory injection",
                left: attn_out.shape(),
                right: (1, self.vector.len()),
            });
        }
        let rows = match self.policy {
            PositionPolicy::All => 0..attn_out.rows(),
            PositionPolicy::Last => attn_out.rows().saturating_sub(1)..attn_out.rows(),
        };
        for r in rows {
            for (a, v) in attn_out.row_mut(r).iter_mut().zip(self.vector) {
                *a += self.tau * v;
            }
        }
        Ok(())
    }
}

/// Last-position distributions without and with an injection.
#[derive(Clone, Debug, PartialEq)]
pub struct InjectionResult {
    pub pre: Vec<f32>,
    pub post: Vec<f32>,
}

impl InjectionResult {
    pub fn answer(&self, token: u32) -> (f32, f32) {
        (self.pre[token as usize], self.post[token as usize])
    }
}

/// Clean and injected runs sharing the residual stream up to `layer`.
pub fn inject_vector(
    weights: &Gpt2Weights,
    tokens: &[u32],
    layer: usize,
    tau: f32,
    vector: &[f32],
    policy: PositionPolicy,
) -> Result<InjectionResult> {
    check_site(weights, layer, tau)?;
    let resid = residual_before(weights, tokens, layer)?;
    let pre = softmax(&resume_last_logits(weights, &resid, layer, None)?);
    let hook = InjectionHook {
        layer,
        tau,
        vector,
        policy,
    };
    let post = softmax(&resume_last_logits(weights, &resid, layer, Some(&hook))?);
    Ok(InjectionResult { pre, post })
}

pub fn run_with_injection(
    weights: &Gpt2Weights,
    vocab: &Vocabulary,
    tokens: &[u32],
    spec: &InjectionSpec,
) -> Result<InjectionResult> {
    spec.validate(weights)?;
    let memory = memory_vector_from_tokens(weights, &memory_tokens(vocab, &spec.memory)?, spec.basis)?;
    inject_vector(weights, tokens, spec.layer, spec.tau, &memory.b_star, spec.policy)
}

/// 100 · (post − pre) / pre.
pub fn percent_difference(pre: f64, post: f64) -> Result<f64> {
    if !(pre.is_finite() && post.is_finite()) || pre < 0.0 || post < 0.0 {
        return Err(Error::Domain(format!("probabilities must be finite and nonnegative ({pre}, {post})")));
    }
    if pre == 0.0 {
        return Err(Error::UndefinedPercent);
    }
    Ok(100.0 * (post - pre) / pre)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percent_difference_values() {
        assert_eq!(percent_difference(0.3, 0.3).unwrap(), 0.0);
        assert_eq!(percent_difference(0.0084, 0.0337).unwrap().round(), 301.0);
        assert_eq!(percent_difference(0.0340, 0.2258).unwrap().round(), 564.0);
        assert!(matches!(percent_difference(0.0, 0.5), Err(Error::UndefinedPercent)));
        assert!(matches!(percent_difference(-0.1, 0.5), Err(Error::Domain(_))));
    }

    #[test]
    fn policies_parse() {
        assert_eq!("all".parse::<PositionPolicy>().unwrap(), PositionPolicy::All);
        assert_eq!("last-position".parse::<PositionPolicy>().unwrap(), PositionPolicy::Last);
        assert!("first".parse::<PositionPolicy>().is_err());
        assert_eq!(serde_json::to_string(&PositionPolicy::Last).unwrap(), "\"last\"");
    }

    #[test]
    fn hook_touches_only_its_layer_and_rows() {
        let v = [1.0, 2.0];
        let hook = InjectionHook {
            layer: 1,
            tau: 3.0,
            vector: &v,
            policy: PositionPolicy::Last,
        };
        let mut a = Tensor2D::zeros(3, 2);
        hook.apply(0, &mut a).unwrap();
        assert_eq!(a, Tensor2D::zeros(3, 2));
        hook.apply(1, &mut a).unwrap();
        assert_eq!(a.data(), &[0.0, 0.0, 0.0, 0.0, 3.0, 6.0]);
        let all = InjectionHook {
            policy: PositionPolicy::All,
            ..hook
        };
        let mut b = Tensor2D::zeros(2, 2);
        all.apply(1, &mut b).unwrap();
        assert_eq!(b.data(), &[3.0, 6.0, 3.0, 6.0]);
        assert!(all.apply(1, &mut Tensor2D::zeros(1, 3)).is_err());
    }
}
