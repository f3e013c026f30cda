//! GPT-2 parameters, checkpoint loading and the hookable forward pass.

mod cache;
mod config;
mod forward;
mod loader;
mod weights;

pub use cache::{next_token_distribution, ActivationCache, LayerCache};
pub use config::ModelConfig;
pub use forward::{
    attention_layer, embed, forward, mlp_layer, next_token_logits, residual_before, residual_stream, resume_last_logits,
    AttentionHook, AttentionOutput,
};
pub use loader::{load_model, load_model_dir, CONFIG_FILE, WEIGHTS_FILE};
pub use weights::{Gpt2Weights, LayerWeights, Qkv, Unembedding};
