use serde::Serialize;

use crate::error::{Error, Result};
use crate::tensor::{softmax, Tensor2D};

/// Activations recorded inside one transformer block.
#[derive(Clone, Debug, Serialize)]
pub struct LayerCache {
    /// R^{ℓ-1}, the residual stream entering the block.
    pub resid_pre: Tensor2D,
    /// h^{ℓ,j}: each head's N × d contribution before the output bias.
    pub heads: Vec<Tensor2D>,
    /// A^{ℓ,j}: N × N attention pattern per head.
    pub patterns: Vec<Tensor2D>,
    /// a^ℓ after the hook, if any.
    pub attn_out: Tensor2D,
    /// m^ℓ
    pub mlp_out: Tensor2D,
    /// R^ℓ
    pub resid_post: Tensor2D,
}

/// Everything one forward pass produced.
#[derive(Clone, Debug, Serialize)]
pub struct ActivationCache {
    pub tokens: Vec<u32>,
    /// x⁰: token plus positional embedding.
    pub embed: Tensor2D,
    pub layers: Vec<LayerCache>,
    /// ln_f applied to the final residual stream.
    pub final_ln: Tensor2D,
    /// N × |V|
    pub logits: Tensor2D,
}

impl ActivationCache {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn layer(&self, layer: usize) -> Result<&LayerCache> {
        self.layers.get(layer).ok_or_else(|| {
            Error::argument(format!("layer {layer} out of range (model has {})", self.layers.len()))
        })
    }

    pub fn head(&self, layer: usize, head: usize) -> Result<&Tensor2D> {
        let l = self.layer(layer)?;
        l.heads
            .get(head)
            .ok_or_else(|| Error::argument(format!("head {head} out of range (layer has {})", l.heads.len())))
    }

    /// R^L, the residual stream after the last block.
    pub fn final_residual(&self) -> &Tensor2D {
        self.layers.last().map_or(&self.embed, |l| &l.resid_post)
    }

    pub fn next_token_distribution(&self) -> Result<Vec<f32>> {
        next_token_distribution(&self.logits)
    }
}

/// Softmax of the last row of `logits`.
pub fn next_token_distribution(logits: &Tensor2D) -> Result<Vec<f32>> {
    if logits.rows() == 0 || logits.cols() == 0 {
        return Err(Error::argument("logits are empty"));
    }
    Ok(softmax(logits.last_row()))
}
