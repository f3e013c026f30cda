use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dimensions of a GPT-2 style decoder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_layer: usize,
    pub n_head: usize,
    pub d_model: usize,
    /// Inner width of the MLP.
    pub d_mlp: usize,
    pub vocab_size: usize,
    pub n_ctx: usize,
    pub ln_eps: f32,
}

impl ModelConfig {
    fn preset(n_layer: usize, n_head: usize, d_model: usize) -> Self {
        Self {
            n_layer,
            n_head,
            d_model,
            d_mlp: 4 * d_model,
            vocab_size: 50257,
            n_ctx: 1024,
            ln_eps: 1e-5,
        }
    }

    pub fn gpt2_small() -> Self {
        Self::preset(12, 12, 768)
    }

    pub fn gpt2_medium() -> Self {
        Self::preset(24, 16, 1024)
    }

    pub fn gpt2_large() -> Self {
        Self::preset(36, 20, 1280)
    }

    pub fn gpt2_xl() -> Self {
        Self::preset(48, 25, 1600)
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_head
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("n_layer", self.n_layer),
            ("n_head", self.n_head),
            ("d_model", self.d_model),
            ("d_mlp", self.d_mlp),
            ("vocab_size", self.vocab_size),
            ("n_ctx", self.n_ctx),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Consistency(format!("{name} must be positive")));
        }
        if self.d_model % self.n_head != 0 {
            return Err(Error::Consistency(format!(
                "d_model {} is not divisible by n_head {}",
                self.d_model, self.n_head
            )));
        }
        if !(self.ln_eps > 0.0) {
            return Err(Error::Consistency("ln_eps must be positive".into()));
        }
        Ok(())
    }

    /// Reads a Hugging Face style `config.json`.
    pub fn from_hf_json(path: impl AsRef<Path>) -> Result<Self> {
        #[derive(Deserialize)]
        struct Hf {
            n_layer: usize,
            n_head: usize,
            n_embd: usize,
            #[serde(default)]
            n_inner: Option<usize>,
            vocab_size: usize,
            #[serde(alias = "n_ctx")]
            n_positions: usize,
            #[serde(default = "default_eps")]
            layer_norm_epsilon: f32,
        }
        fn default_eps() -> f32 {
            1e-5
        }

        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::load(path, e))?;
        let hf: Hf = serde_json::from_str(&text).map_err(|e| Error::load(path, e))?;
        let config = Self {
            n_layer: hf.n_layer,
            n_head: hf.n_head,
            d_model: hf.n_embd,
            d_mlp: hf.n_inner.unwrap_or(4 * hf.n_embd),
            vocab_size: hf.vocab_size,
            n_ctx: hf.n_positions,
            ln_eps: hf.layer_norm_epsilon,
        };
        config.validate()?;
        Ok(config)
    }

    /// Short human-readable name for known presets.
    pub fn name(&self) -> String {
        match (self.n_layer, self.n_head, self.d_model) {
            (12, 12, 768) => "gpt2-small".into(),
            (24, 16, 1024) => "gpt2-medium".into(),
            (36, 20, 1280) => "gpt2-large".into(),
            (48, 25, 1600) => "gpt2-xl".into(),
            (l, h, d) => format!("gpt2-L{l}-H{h}-d{d}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets() {
        let small = ModelConfig::gpt2_small();
        assert_eq!((small.n_layer, small.n_head, small.d_model), (12, 12, 768));
        assert_eq!(small.d_mlp / small.d_model, 4);
        assert_eq!(small.head_dim(), 64);
        let large = ModelConfig::gpt2_large();
        assert_eq!((large.n_layer, large.n_head), (36, 20));
        for c in [small, large, ModelConfig::gpt2_medium(), ModelConfig::gpt2_xl()] {
            c.validate().unwrap();
        }
    }

    #[test]
    fn indivisible_heads_are_rejected() {
        let mut c = ModelConfig::gpt2_small();
        c.n_head = 7;
        assert!(matches!(c.validate(), Err(Error::Consistency(_))));
    }
}
