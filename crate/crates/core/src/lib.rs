//! GPT-2 inference with hookable attention outputs, an attention-head logit
//! lens, memory injection, and the sweep harness built on them.
//!
//! ```no_run
//! use memhop::{Engine, InjectionSpec};
//!
//! let engine = Engine::load("models/gpt2")?;
//! let spec = InjectionSpec::new("The Great Barrier Reef", 9, 4.0);
//! let prompt = "The largest coral reef system in the world is located off the coast of";
//! let run = engine.inject(prompt, &spec)?;
//! let (pre, post) = run.answer(engine.answer_token("Australia")?);
//! println!("{pre:.4} -> {post:.4}");
//! # Ok::<(), memhop::Error>(())
//! ```

pub mod datasets;
pub mod engine;
pub mod error;
pub mod experiments;
pub mod injection;
pub mod lens;
pub mod model;
pub mod tensor;
pub mod tokenizer;

pub use datasets::{load_prompt_pairs, PartOfSpeech, PosLexicon, PromptPair};
pub use engine::{Engine, ModelInfo, PromptOptions};
pub use error::{Error, Result};
pub use injection::{percent_difference, InjectionSpec, MemoryBasis, PositionPolicy};
pub use lens::{LensEntry, LensReport, Projection, RankedToken};
pub use model::{Gpt2Weights, ModelConfig};
pub use tensor::Tensor2D;
pub use tokenizer::{TokenSequence, Vocabulary};
