use super::{ActivationCache, Gpt2Weights, LayerCache};
use crate::error::{Error, Result};
use crate::tensor::{gelu, layer_norm, matmul, matmul_transposed, row_softmax, Tensor2D};

/// Transform applied to an attention layer's output a^ℓ before it is added
/// to the residual stream.
pub trait AttentionHook: Sync {
    fn apply(&self, layer: usize, attn_out: &mut Tensor2D) -> Result<()>;
}

impl<F> AttentionHook for F
where
    F: Fn(usize, &mut Tensor2D) -> Result<()> + Sync,
{
    fn apply(&self, layer: usize, attn_out: &mut Tensor2D) -> Result<()> {
        self(layer, attn_out)
    }
}

/// Output of one attention layer.
#[derive(Clone, Debug)]
pub struct AttentionOutput {
    /// a^ℓ, hooked if a hook was given.
    pub attn_out: Tensor2D,
    pub heads: Vec<Tensor2D>,
    pub patterns: Vec<Tensor2D>,
}

fn check_tokens(weights: &Gpt2Weights, tokens: &[u32]) -> Result<()> {
    let c = weights.config();
    if tokens.is_empty() {
        return Err(Error::argument("token sequence is empty"));
    }
    if tokens.len() > c.n_ctx {
        return Err(Error::ContextLength {
            len: tokens.len(),
            max: c.n_ctx,
        });
    }
    if let Some(&id) = tokens.iter().find(|&&t| t as usize >= c.vocab_size) {
        return Err(Error::TokenRange {
            id,
            vocab_size: c.vocab_size,
        });
    }
    Ok(())
}

fn check_layer(weights: &Gpt2Weights, layer: usize) -> Result<()> {
    let n = weights.config().n_layer;
    if layer >= n {
        return Err(Error::argument(format!("layer {layer} out of range (model has {n})")));
    }
    Ok(())
}

fn check_resid(weights: &Gpt2Weights, resid: &Tensor2D) -> Result<()> {
    let c = weights.config();
    if resid.rows() == 0 || resid.cols() != c.d_model {
        return Err(Error::Shape {
            op: "residual stream",
            left: resid.shape(),
            right: (resid.rows(), c.d_model),
        });
    }
    if resid.rows() > c.n_ctx {
        return Err(Error::ContextLength {
            len: resid.rows(),
            max: c.n_ctx,
        });
    }
    Ok(())
}

/// x⁰_i = W_E[t_i] + W_pos[i].
pub fn embed(weights: &Gpt2Weights, tokens: &[u32]) -> Result<Tensor2D> {
    check_tokens(weights, tokens)?;
    let d = weights.config().d_model;
    let mut data = Vec::with_capacity(tokens.len() * d);
    for (i, &t) in tokens.iter().enumerate() {
        data.extend(weights.wte.row(t as usize).iter().zip(weights.wpe.row(i)).map(|(a, b)| a + b));
    }
    Tensor2D::new(tokens.len(), d, data)
}

fn causal_mask(n: usize) -> Tensor2D {
    let mut mask = Tensor2D::zeros(n, n);
    for r in 0..n {
        mask.row_mut(r)[..=r].fill(1.0);
    }
    mask
}

/// Multi-head causal self-attention over LN1 of `resid_prev`.
///
/// a^ℓ is the head sum Σ_j h^{ℓ,j} plus the output bias; `hook` sees that
/// sum and may rewrite it.
pub fn attention_layer(
    weights: &Gpt2Weights,
    resid_prev: &Tensor2D,
    layer: usize,
    hook: Option<&dyn AttentionHook>,
) -> Result<AttentionOutput> {
    check_layer(weights, layer)?;
    check_resid(weights, resid_prev)?;
    let c = weights.config();
    let lw = &weights.layers[layer];
    let (n, d, dh) = (resid_prev.rows(), c.d_model, c.head_dim());

    let x = layer_norm(resid_prev, &lw.ln1_gamma, &lw.ln1_beta, c.ln_eps)?;
    let mut qkv = matmul(&x, &lw.w_qkv)?;
    qkv.add_row_vector(&lw.b_qkv)?;
    let mask = causal_mask(n);
    let scale = 1.0 / (dh as f32).sqrt();

    let mut heads = Vec::with_capacity(c.n_head);
    let mut patterns = Vec::with_capacity(c.n_head);
    let mut attn_out = Tensor2D::zeros(n, d);
    for j in 0..c.n_head {
        let q = qkv.columns(j * dh, (j + 1) * dh)?;
        let k = qkv.columns(d + j * dh, d + (j + 1) * dh)?;
        let v = qkv.columns(2 * d + j * dh, 2 * d + (j + 1) * dh)?;
        let mut scores = matmul_transposed(&q, &k)?;
        scores.scale(scale);
        let pattern = row_softmax(&scores, Some(&mask))?;
        let z = matmul(&pattern, &v)?;
        let h = matmul(&z, &lw.head_output(j, dh)?)?;
        attn_out.add_assign(&h)?;
        heads.push(h);
        patterns.push(pattern);
    }
    attn_out.add_row_vector(&lw.b_o)?;
    if let Some(hook) = hook {
        hook.apply(layer, &mut attn_out)?;
        if attn_out.shape() != (n, d) {
            return Err(Error::Shape {
                op: "attention hook output",
                left: attn_out.shape(),
                right: (n, d),
            });
        }
    }
    Ok(AttentionOutput {
        attn_out,
        heads,
        patterns,
    })
}

/// m^ℓ = GELU(LN2(a + R_prev) W_in + b_in) W_out + b_out.
pub fn mlp_layer(weights: &Gpt2Weights, attn_out: &Tensor2D, resid_prev: &Tensor2D, layer: usize) -> Result<Tensor2D> {
    check_layer(weights, layer)?;
    let c = weights.config();
    let lw = &weights.layers[layer];
    let mid = resid_prev.add(attn_out)?;
    let x = layer_norm(&mid, &lw.ln2_gamma, &lw.ln2_beta, c.ln_eps)?;
    let mut hidden = matmul(&x, &lw.w_in)?;
    hidden.add_row_vector(&lw.b_in)?;
    let mut out = matmul(&gelu(&hidden), &lw.w_out)?;
    out.add_row_vector(&lw.b_out)?;
    Ok(out)
}

struct Block {
    attn: AttentionOutput,
    mlp_out: Tensor2D,
    resid_post: Tensor2D,
}

fn block(weights: &Gpt2Weights, resid: &Tensor2D, layer: usize, hook: Option<&dyn AttentionHook>) -> Result<Block> {
    let attn = attention_layer(weights, resid, layer, hook)?;
    let mlp_out = mlp_layer(weights, &attn.attn_out, resid, layer)?;
    let mut resid_post = resid.add(&attn.attn_out)?;
    resid_post.add_assign(&mlp_out)?;
    Ok(Block {
        attn,
        mlp_out,
        resid_post,
    })
}

/// Full forward pass recording every intermediate.
pub fn forward(weights: &Gpt2Weights, tokens: &[u32], hook: Option<&dyn AttentionHook>) -> Result<ActivationCache> {
    let c = weights.config();
    let embedded = embed(weights, tokens)?;
    let mut layers: Vec<LayerCache> = Vec::with_capacity(c.n_layer);
    for layer in 0..c.n_layer {
        let resid_pre = layers.last().map_or(&embedded, |l| &l.resid_post).clone();
        let b = block(weights, &resid_pre, layer, hook)?;
        layers.push(LayerCache {
            resid_pre,
            heads: b.attn.heads,
            patterns: b.attn.patterns,
            attn_out: b.attn.attn_out,
            mlp_out: b.mlp_out,
            resid_post: b.resid_post,
        });
    }
    let last = layers.last().map_or(&embedded, |l| &l.resid_post);
    let final_ln = layer_norm(last, &weights.lnf_gamma, &weights.lnf_beta, c.ln_eps)?;
    let logits = weights.unembed(&final_ln)?;
    Ok(ActivationCache {
        tokens: tokens.to_vec(),
        embed: embedded,
        layers,
        final_ln,
        logits,
    })
}

/// Residual stream entering `layer` (R^{layer-1}); `layer == L` gives R^L.
pub fn residual_before(weights: &Gpt2Weights, tokens: &[u32], layer: usize) -> Result<Tensor2D> {
    if layer > weights.config().n_layer {
        return Err(Error::argument(format!("layer {layer} out of range")));
    }
    let mut resid = embed(weights, tokens)?;
    for l in 0..layer {
        resid = block(weights, &resid, l, None)?.resid_post;
    }
    Ok(resid)
}

/// Runs blocks `from_layer..L` on `resid` and returns the last position's
/// logits. Nothing is cached.
pub fn resume_last_logits(
    weights: &Gpt2Weights,
    resid: &Tensor2D,
    from_layer: usize,
    hook: Option<&dyn AttentionHook>,
) -> Result<Vec<f32>> {
    let c = weights.config();
    if from_layer > c.n_layer {
        return Err(Error::argument(format!("layer {from_layer} out of range")));
    }
    check_resid(weights, resid)?;
    let mut resid = resid.clone();
    for l in from_layer..c.n_layer {
        resid = block(weights, &resid, l, hook)?.resid_post;
    }
    let last = Tensor2D::row_vector(resid.last_row());
    let normed = layer_norm(&last, &weights.lnf_gamma, &weights.lnf_beta, c.ln_eps)?;
    Ok(weights.unembed(&normed)?.into_data())
}

/// Last-position logits without building a cache.
pub fn next_token_logits(weights: &Gpt2Weights, tokens: &[u32], hook: Option<&dyn AttentionHook>) -> Result<Vec<f32>> {
    let resid = embed(weights, tokens)?;
    resume_last_logits(weights, &resid, 0, hook)
}

/// Residual stream entering every block, plus R^L at index L.
pub fn residual_stream(weights: &Gpt2Weights, tokens: &[u32]) -> Result<Vec<Tensor2D>> {
    let mut out = Vec::with_capacity(weights.config().n_layer + 1);
    out.push(embed(weights, tokens)?);
    for l in 0..weights.config().n_layer {
        let next = block(weights, &out[l], l, None)?.resid_post;
        out.push(next);
    }
    Ok(out)
}
