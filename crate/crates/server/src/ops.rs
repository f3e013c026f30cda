//! Request handling shared by the HTTP routes and the command line, so both
//! produce the same numbers from the same code.

use std::fmt;
use std::path::PathBuf;

use memhop::lens::{ranked, LensReport};
use memhop::{percent_difference, Engine, InjectionSpec, MemoryBasis, ModelInfo, PositionPolicy, Projection, RankedToken};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorKind {
    /// Malformed request content: empty prompt, prompt too long, bad layer or tau.
    BadRequest,
    /// Well-formed but unusable values: k out of range, empty memory or answer.
    Unprocessable,
    Internal,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OpError {
    pub kind: ErrorKind,
    pub message: String,
}

impl OpError {
    fn bad(message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::BadRequest,
            message: message.into(),
        }
    }

    fn unprocessable(message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Unprocessable,
            message: message.into(),
        }
    }
}

impl From<memhop::Error> for OpError {
    fn from(e: memhop::Error) -> Self {
        let kind = match e {
            memhop::Error::ContextLength { .. } => ErrorKind::BadRequest,
            memhop::Error::Argument(_) => ErrorKind::Unprocessable,
            _ => ErrorKind::Internal,
        };
        Self {
            kind,
            message: e.to_string(),
        }
    }
}

impl fmt::Display for OpError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for OpError {}

pub type OpResult<T> = Result<T, OpError>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ServiceConfig {
    pub bind: String,
    pub model_dir: Option<PathBuf>,
    pub default_k: usize,
    /// Longest accepted prompt in tokens; at most the model context.
    pub max_prompt_tokens: usize,
    pub static_dir: Option<PathBuf>,
    /// Allowed CORS origin; any origin when unset.
    pub cors_origin: Option<String>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:8080".into(),
            model_dir: None,
            default_k: 10,
            max_prompt_tokens: 1024,
            static_dir: None,
            cors_origin: None,
        }
    }
}

impl ServiceConfig {
    pub fn validate(&self, info: &ModelInfo) -> OpResult<()> {
        if self.max_prompt_tokens == 0 || self.max_prompt_tokens > info.n_ctx {
            return Err(OpError::bad(format!(
                "max_prompt_tokens must be in 1..={} for {}",
                info.n_ctx, info.name
            )));
        }
        if self.default_k == 0 || self.default_k > info.vocab_size {
            return Err(OpError::bad(format!("default_k must be in 1..={}", info.vocab_size)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Deserialize)]
pub struct CompleteRequest {
    pub prompt: String,
    pub k: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompleteResponse {
    pub prompt: String,
    pub tokens: Vec<RankedToken>,
}

#[derive(Clone, Debug, Deserialize)]
pub struct LensRequest {
    pub prompt: String,
    pub k: Option<usize>,
    #[serde(default)]
    pub apply_final_ln: bool,
    /// Overrides `apply_final_ln` when present.
    #[serde(default)]
    pub projection: Option<Projection>,
}

#[derive(Clone, Debug, Deserialize)]
pub struct InjectRequest {
    pub prompt: String,
    pub memory: String,
    pub layer: usize,
    pub tau: f32,
    #[serde(default)]
    pub policy: PositionPolicy,
    #[serde(default)]
    pub basis: MemoryBasis,
    pub answer: Option<String>,
    pub k: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InjectResponse {
    pub prompt: String,
    pub memory: String,
    pub layer: usize,
    pub tau: f64,
    pub policy: PositionPolicy,
    pub basis: MemoryBasis,
    pub pre_topk: Vec<RankedToken>,
    pub post_topk: Vec<RankedToken>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pre_answer_prob: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub post_answer_prob: Option<f64>,
    /// Absent when there is no answer or its clean probability is zero.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pct_diff: Option<f64>,
}

/// A loaded model plus request limits. Immutable once built.
pub struct Service {
    engine: Engine,
    config: ServiceConfig,
}

impl Service {
    pub fn new(engine: Engine, config: ServiceConfig) -> OpResult<Self> {
        config.validate(&engine.info())?;
        Ok(Self { engine, config })
    }

    /// Limits wide enough for command line use: the full context and k = 10.
    pub fn unrestricted(engine: Engine) -> OpResult<Self> {
        let config = ServiceConfig {
            max_prompt_tokens: engine.config().n_ctx,
            ..ServiceConfig::default()
        };
        Self::new(engine, config)
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn model_info(&self) -> ModelInfo {
        self.engine.info()
    }

    fn check_prompt(&self, prompt: &str) -> OpResult<()> {
        if prompt.trim().is_empty() {
            return Err(OpError::bad("prompt is empty"));
        }
        let n = self.engine.encode_prompt(prompt)?.len();
        if n > self.config.max_prompt_tokens {
            return Err(OpError::bad(format!(
                "prompt has {n} tokens, limit is {}",
                self.config.max_prompt_tokens
            )));
        }
        Ok(())
    }

    fn check_k(&self, k: Option<usize>) -> OpResult<usize> {
        let k = k.unwrap_or(self.config.default_k);
        let v = self.engine.config().vocab_size;
        if k == 0 || k > v {
            return Err(OpError::unprocessable(format!("k must be in 1..={v}, got {k}")));
        }
        Ok(k)
    }

    pub fn complete(&self, req: &CompleteRequest) -> OpResult<CompleteResponse> {
        self.check_prompt(&req.prompt)?;
        let k = self.check_k(req.k)?;
        Ok(CompleteResponse {
            prompt: req.prompt.clone(),
            tokens: self.engine.complete(&req.prompt, k)?,
        })
    }

    pub fn lens(&self, req: &LensRequest) -> OpResult<LensReport> {
        self.check_prompt(&req.prompt)?;
        let k = self.check_k(req.k)?;
        let projection = req.projection.unwrap_or(Projection::from_flag(req.apply_final_ln));
        Ok(self.engine.lens(&req.prompt, k, projection)?)
    }

    pub fn inject(&self, req: &InjectRequest) -> OpResult<InjectResponse> {
        self.check_prompt(&req.prompt)?;
        let k = self.check_k(req.k)?;
        let n_layer = self.engine.config().n_layer;
        if req.layer >= n_layer {
            return Err(OpError::bad(format!("layer {} out of range (model has {n_layer})", req.layer)));
        }
        if !(req.tau.is_finite() && req.tau >= 0.0) {
            return Err(OpError::bad(format!("tau must be finite and nonnegative, got {}", req.tau)));
        }
        if req.memory.trim().is_empty() {
            return Err(OpError::unprocessable("memory is empty"));
        }
        let answer = match &req.answer {
            Some(a) if a.trim().is_empty() => return Err(OpError::unprocessable("answer is empty")),
            Some(a) => Some((a.clone(), self.engine.answer_token(a)?)),
            None => None,
        };
        let spec = InjectionSpec::new(req.memory.clone(), req.layer, req.tau)
            .with_policy(req.policy)
            .with_basis(req.basis);
        let result = self.engine.inject(&req.prompt, &spec)?;
        let vocab = self.engine.vocab();
        let (answer, pre_answer_prob, post_answer_prob, pct_diff) = match answer {
            Some((text, token)) => {
                let (pre, post) = result.answer(token);
                let (pre, post) = (pre as f64, post as f64);
                (Some(text), Some(pre), Some(post), percent_difference(pre, post).ok())
            }
            None => (None, None, None, None),
        };
        Ok(InjectResponse {
            prompt: req.prompt.clone(),
            memory: req.memory.clone(),
            layer: req.layer,
            tau: req.tau as f64,
            policy: req.policy,
            basis: req.basis,
            pre_topk: ranked(vocab, &result.pre, k)?,
            post_topk: ranked(vocab, &result.post, k)?,
            answer,
            pre_answer_prob,
            post_answer_prob,
            pct_diff,
        })
    }
}
