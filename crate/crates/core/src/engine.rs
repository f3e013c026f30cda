//! Weights, tokenizer and prompt conventions bundled together. Everything
//! that turns text into numbers goes through here, so the CLI, the HTTP
//! service and the experiments share one code path.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::injection::{
    inject_vector, memory_tokens, memory_vector_from_tokens, InjectionResult, InjectionSpec, MemoryVector,
};
use crate::lens::{lens_report, ranked, LensReport, Projection, RankedToken};
use crate::model::{forward, load_model_dir, next_token_logits, ActivationCache, Gpt2Weights, ModelConfig};
use crate::tensor::softmax;
use crate::tokenizer::{TokenSequence, Vocabulary};

/// Environment variable naming a model directory.
pub const MODEL_DIR_ENV: &str = "MEMHOP_MODEL_DIR";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptOptions {
    /// Prefix every prompt with `<|endoftext|>`.
    #[serde(default)]
    pub prepend_bos: bool,
}

pub struct Engine {
    weights: Gpt2Weights,
    vocab: Vocabulary,
    options: PromptOptions,
    name: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ModelInfo {
    pub name: String,
    pub n_layer: usize,
    pub n_head: usize,
    pub d_model: usize,
    pub d_mlp: usize,
    pub vocab_size: usize,
    pub n_ctx: usize,
}

impl Engine {
    pub fn new(weights: Gpt2Weights, vocab: Vocabulary) -> Result<Self> {
        vocab.check_model(weights.config())?;
        let name = weights.config().name();
        Ok(Self {
            weights,
            vocab,
            options: PromptOptions::default(),
            name,
        })
    }

    /// Loads `model.safetensors` and `config.json` from `dir`. The tokenizer
    /// comes from `vocab.json`/`merges.txt` in the same directory when both
    /// exist, otherwise the bundled GPT-2 files are used.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let weights = load_model_dir(dir)?;
        let (vocab_path, merges_path) = (dir.join("vocab.json"), dir.join("merges.txt"));
        let vocab = if vocab_path.is_file() && merges_path.is_file() {
            Vocabulary::load(vocab_path, merges_path)?
        } else {
            Vocabulary::gpt2()?
        };
        Self::new(weights, vocab)
    }

    /// Model directory from `MEMHOP_MODEL_DIR`, if set.
    pub fn model_dir_from_env() -> Option<PathBuf> {
        std::env::var_os(MODEL_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from)
    }

    /// A small randomly initialised model over the real GPT-2 vocabulary.
    /// Its outputs are meaningless; it exists so the tooling can run end to
    /// end without a checkpoint.
    pub fn demo(seed: u64) -> Result<Self> {
        let config = ModelConfig {
            n_layer: 4,
            n_head: 4,
            d_model: 64,
            d_mlp: 256,
            vocab_size: 50257,
            n_ctx: 256,
            ln_eps: 1e-5,
        };
        let weights = Gpt2Weights::random_scaled(config, seed, 0.2)?;
        let mut engine = Self::new(weights, Vocabulary::gpt2()?)?;
        engine.name = format!("random-demo-{seed}");
        Ok(engine)
    }

    /// Loads from `dir`, else from `MEMHOP_MODEL_DIR`, else falls back to
    /// [`Engine::demo`].
    pub fn load_or_demo(dir: Option<&Path>) -> Result<Self> {
        match dir.map(Path::to_path_buf).or_else(Self::model_dir_from_env) {
            Some(dir) => Self::load(dir),
            None => {
                log::warn!("no model directory given; using a random demo model");
                Self::demo(0)
            }
        }
    }

    pub fn with_options(mut self, options: PromptOptions) -> Self {
        self.options = options;
        self
    }

    pub fn options(&self) -> PromptOptions {
        self.options
    }

    pub fn weights(&self) -> &Gpt2Weights {
        &self.weights
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn config(&self) -> &ModelConfig {
        self.weights.config()
    }

    pub fn info(&self) -> ModelInfo {
        let c = self.config();
        ModelInfo {
            name: self.name.clone(),
            n_layer: c.n_layer,
            n_head: c.n_head,
            d_model: c.d_model,
            d_mlp: c.d_mlp,
            vocab_size: self.vocab.len(),
            n_ctx: c.n_ctx,
        }
    }

    /// Prompt tokens exactly as the model sees them.
    pub fn encode_prompt(&self, prompt: &str) -> Result<TokenSequence> {
        if prompt.is_empty() {
            return Err(Error::argument("prompt is empty"));
        }
        let mut ids = Vec::new();
        if self.options.prepend_bos {
            ids.push(
                self.vocab
                    .end_of_text()
                    .ok_or_else(|| Error::Consistency("vocabulary has no <|endoftext|> token".into()))?,
            );
        }
        ids.extend(self.vocab.encode(prompt).iter());
        let max = self.config().n_ctx;
        if ids.len() > max {
            return Err(Error::ContextLength { len: ids.len(), max });
        }
        Ok(TokenSequence::new(ids))
    }

    /// First token of `" " + answer`.
    pub fn answer_token(&self, answer: &str) -> Result<u32> {
        let answer = answer.trim();
        if answer.is_empty() {
            return Err(Error::argument("answer is empty"));
        }
        Ok(self.vocab.encode(&format!(" {answer}"))[0])
    }

    pub fn memory_tokens(&self, memory: &str) -> Result<Vec<u32>> {
        memory_tokens(&self.vocab, memory)
    }

    pub fn memory_vector(&self, spec: &InjectionSpec) -> Result<MemoryVector> {
        memory_vector_from_tokens(&self.weights, &self.memory_tokens(&spec.memory)?, spec.basis)
    }

    pub fn forward(&self, prompt: &str) -> Result<ActivationCache> {
        forward(&self.weights, &self.encode_prompt(prompt)?, None)
    }

    pub fn next_token_distribution(&self, prompt: &str) -> Result<Vec<f32>> {
        Ok(softmax(&next_token_logits(&self.weights, &self.encode_prompt(prompt)?, None)?))
    }

    pub fn complete(&self, prompt: &str, k: usize) -> Result<Vec<RankedToken>> {
        ranked(&self.vocab, &self.next_token_distribution(prompt)?, k)
    }

    pub fn answer_probability(&self, prompt: &str, answer: &str) -> Result<f32> {
        let token = self.answer_token(answer)?;
        Ok(self.next_token_distribution(prompt)?[token as usize])
    }

    pub fn lens(&self, prompt: &str, k: usize, projection: Projection) -> Result<LensReport> {
        let tokens = self.encode_prompt(prompt)?;
        let mut report = lens_report(&self.weights, &self.vocab, &tokens, k, projection)?;
        report.prompt = prompt.to_string();
        Ok(report)
    }

    pub fn inject(&self, prompt: &str, spec: &InjectionSpec) -> Result<InjectionResult> {
        spec.validate(&self.weights)?;
        let tokens = self.encode_prompt(prompt)?;
        let memory = self.memory_vector(spec)?;
        inject_vector(&self.weights, &tokens, spec.layer, spec.tau, &memory.b_star, spec.policy)
    }
}
