use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ModelConfig;
use crate::error::{Error, Result};
use crate::tensor::{matmul, matmul_transposed, Tensor2D};

/// Parameters of one transformer block. Matrices are stored input-major,
/// so a layer is `x · W + b`.
#[derive(Clone, Debug)]
pub struct LayerWeights {
    pub ln1_gamma: Vec<f32>,
    pub ln1_beta: Vec<f32>,
    /// Fused query/key/value projection, d × 3d.
    pub w_qkv: Tensor2D,
    pub b_qkv: Vec<f32>,
    /// Attention output projection, d × d.
    pub w_o: Tensor2D,
    pub b_o: Vec<f32>,
    pub ln2_gamma: Vec<f32>,
    pub ln2_beta: Vec<f32>,
    /// d × d_mlp
    pub w_in: Tensor2D,
    pub b_in: Vec<f32>,
    /// d_mlp × d
    pub w_out: Tensor2D,
    pub b_out: Vec<f32>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Qkv {
    Query = 0,
    Key = 1,
    Value = 2,
}

impl LayerWeights {
    /// d × (d/H) slice of W_Q, W_K or W_V for one head.
    pub fn head_projection(&self, which: Qkv, head: usize, head_dim: usize) -> Result<Tensor2D> {
        let d = self.w_o.rows();
        let start = which as usize * d + head * head_dim;
        self.w_qkv.columns(start, start + head_dim)
    }

    /// (d/H) × d slice of W_O for one head.
    pub fn head_output(&self, head: usize, head_dim: usize) -> Result<Tensor2D> {
        self.w_o.row_range(head * head_dim, (head + 1) * head_dim)
    }
}

/// How logits are produced from the final hidden state.
#[derive(Clone, Debug)]
pub enum Unembedding {
    /// W_U = W_Eᵀ.
    Tied,
    /// Separate d × |V| matrix.
    Separate(Tensor2D),
}

/// Full parameter set of a GPT-2 checkpoint.
#[derive(Clone, Debug)]
pub struct Gpt2Weights {
    pub config: ModelConfig,
    /// |V| × d
    pub wte: Tensor2D,
    /// n_ctx × d
    pub wpe: Tensor2D,
    pub layers: Vec<LayerWeights>,
    pub lnf_gamma: Vec<f32>,
    pub lnf_beta: Vec<f32>,
    pub unembedding: Unembedding,
}

impl Gpt2Weights {
    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn is_tied(&self) -> bool {
        matches!(self.unembedding, Unembedding::Tied)
    }

    /// Materialized W_U (d × |V|).
    pub fn unembedding_matrix(&self) -> Tensor2D {
        match &self.unembedding {
            Unembedding::Tied => self.wte.transpose(),
            Unembedding::Separate(w) => w.clone(),
        }
    }

    /// `x · W_U` for an n × d input.
    pub fn unembed(&self, x: &Tensor2D) -> Result<Tensor2D> {
        match &self.unembedding {
            Unembedding::Tied => matmul_transposed(x, &self.wte),
            Unembedding::Separate(w) => matmul(x, w),
        }
    }

    /// Row `token` of W_Uᵀ, the vector that un-embeds to that token.
    pub fn unembedding_column(&self, token: u32) -> Result<Vec<f32>> {
        let t = token as usize;
        if t >= self.config.vocab_size {
            return Err(Error::TokenRange {
                id: token,
                vocab_size: self.config.vocab_size,
            });
        }
        Ok(match &self.unembedding {
            Unembedding::Tied => self.wte.row(t).to_vec(),
            Unembedding::Separate(w) => (0..w.rows()).map(|r| w.get(r, t)).collect(),
        })
    }

    /// Checks every tensor against the config.
    pub fn validate(&self) -> Result<()> {
        let c = &self.config;
        c.validate()?;
        let (d, p, v) = (c.d_model, c.d_mlp, c.vocab_size);
        let check = |name: String, got: (usize, usize), want: (usize, usize)| {
            if got == want {
                Ok(())
            } else {
                Err(Error::Consistency(format!("{name} has shape {got:?}, expected {want:?}")))
            }
        };
        let check_vec = |name: String, got: usize, want: usize| check(name, (1, got), (1, want));

        check("wte".into(), self.wte.shape(), (v, d))?;
        check("wpe".into(), self.wpe.shape(), (c.n_ctx, d))?;
        if self.layers.len() != c.n_layer {
            return Err(Error::Consistency(format!(
                "{} layers present, config says {}",
                self.layers.len(),
                c.n_layer
            )));
        }
        for (i, l) in self.layers.iter().enumerate() {
            check_vec(format!("h.{i}.ln_1.weight"), l.ln1_gamma.len(), d)?;
            check_vec(format!("h.{i}.ln_1.bias"), l.ln1_beta.len(), d)?;
            check(format!("h.{i}.attn.c_attn.weight"), l.w_qkv.shape(), (d, 3 * d))?;
            check_vec(format!("h.{i}.attn.c_attn.bias"), l.b_qkv.len(), 3 * d)?;
            check(format!("h.{i}.attn.c_proj.weight"), l.w_o.shape(), (d, d))?;
            check_vec(format!("h.{i}.attn.c_proj.bias"), l.b_o.len(), d)?;
            check_vec(format!("h.{i}.ln_2.weight"), l.ln2_gamma.len(), d)?;
            check_vec(format!("h.{i}.ln_2.bias"), l.ln2_beta.len(), d)?;
            check(format!("h.{i}.mlp.c_fc.weight"), l.w_in.shape(), (d, p))?;
            check_vec(format!("h.{i}.mlp.c_fc.bias"), l.b_in.len(), p)?;
            check(format!("h.{i}.mlp.c_proj.weight"), l.w_out.shape(), (p, d))?;
            check_vec(format!("h.{i}.mlp.c_proj.bias"), l.b_out.len(), d)?;
        }
        check_vec("ln_f.weight".into(), self.lnf_gamma.len(), d)?;
        check_vec("ln_f.bias".into(), self.lnf_beta.len(), d)?;
        if let Unembedding::Separate(w) = &self.unembedding {
            check("lm_head".into(), w.shape(), (d, v))?;
        }
        Ok(())
    }

    /// Seeded random weights with tied embeddings. Layer-norm gains sit near
    /// one; everything else is uniform in ±`scale`.
    pub fn random(config: ModelConfig, seed: u64) -> Result<Self> {
        Self::random_scaled(config, seed, 0.5)
    }

    pub fn random_scaled(config: ModelConfig, seed: u64, scale: f32) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut vec = |n: usize| -> Vec<f32> { (0..n).map(|_| rng.gen_range(-scale..=scale)).collect() };
        let (d, p) = (config.d_model, config.d_mlp);
        let mut mat = |r: usize, c: usize| Tensor2D::new(r, c, vec(r * c));
        let wte = mat(config.vocab_size, d)?;
        let wpe = mat(config.n_ctx, d)?;
        let mut layers = Vec::with_capacity(config.n_layer);
        for _ in 0..config.n_layer {
            layers.push(LayerWeights {
                ln1_gamma: gains(&mut mat, d)?,
                ln1_beta: mat(1, d)?.into_data(),
                w_qkv: mat(d, 3 * d)?,
                b_qkv: mat(1, 3 * d)?.into_data(),
                w_o: mat(d, d)?,
                b_o: mat(1, d)?.into_data(),
                ln2_gamma: gains(&mut mat, d)?,
                ln2_beta: mat(1, d)?.into_data(),
                w_in: mat(d, p)?,
                b_in: mat(1, p)?.into_data(),
                w_out: mat(p, d)?,
                b_out: mat(1, d)?.into_data(),
            });
        }
        let lnf_gamma = gains(&mut mat, d)?;
        let lnf_beta = mat(1, d)?.into_data();
        let weights = Self {
            config,
            wte,
            wpe,
            layers,
            lnf_gamma,
            lnf_beta,
            unembedding: Unembedding::Tied,
        };
        weights.validate()?;
        Ok(weights)
    }
}

fn gains(mat: &mut impl FnMut(usize, usize) -> Result<Tensor2D>, d: usize) -> Result<Vec<f32>> {
    Ok(mat(1, d)?.into_data().into_iter().map(|x| 1.0 + 0.5 * x).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ModelConfig {
        ModelConfig {
            n_layer: 2,
            n_head: 2,
            d_model: 8,
            d_mlp: 16,
            vocab_size: 11,
            n_ctx: 16,
            ln_eps: 1e-5,
        }
    }

    #[test]
    fn random_weights_are_seeded() {
        let a = Gpt2Weights::random(tiny(), 3).unwrap();
        let b = Gpt2Weights::random(tiny(), 3).unwrap();
        let c = Gpt2Weights::random(tiny(), 4).unwrap();
        assert_eq!(a.wte, b.wte);
        assert_ne!(a.wte, c.wte);
    }

    #[test]
    fn head_slices_partition_the_fused_projection() {
        let w = Gpt2Weights::random(tiny(), 1).unwrap();
        let l = &w.layers[0];
        let k1 = l.head_projection(Qkv::Key, 1, 4).unwrap();
        assert_eq!(k1.shape(), (8, 4));
        for r in 0..8 {
            for c in 0..4 {
                assert_eq!(k1.get(r, c), l.w_qkv.get(r, 8 + 4 + c));
            }
        }
        let o0 = l.head_output(0, 4).unwrap();
        assert_eq!(o0.row(3), l.w_o.row(3));
    }

    #[test]
    fn tied_unembedding_is_the_embedding_transpose() {
        let w = Gpt2Weights::random(tiny(), 2).unwrap();
        let wu = w.unembedding_matrix();
        assert_eq!(wu.max_abs_diff(&w.wte.transpose()).unwrap(), 0.0);
        assert_eq!(w.unembedding_column(5).unwrap(), w.wte.row(5));
        assert!(w.unembedding_column(11).is_err());
    }
}
