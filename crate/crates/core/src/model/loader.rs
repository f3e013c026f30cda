use std::fs::File;
use std::path::Path;

use memmap2::Mmap;
use safetensors::tensor::TensorView;
use safetensors::{Dtype, SafeTensors};

use super::{Gpt2Weights, LayerWeights, ModelConfig, Unembedding};
use crate::error::{Error, Result};
use crate::tensor::Tensor2D;

/// File names looked up inside a model directory.
pub const WEIGHTS_FILE: &str = "model.safetensors";
pub const CONFIG_FILE: &str = "config.json";

/// Loads a GPT-2 safetensors archive and checks it against `config`.
///
/// Accepts the Hugging Face names with or without the `transformer.`
/// prefix. A `lm_head.weight` identical to `wte` is treated as tied.
pub fn load_model(weights_path: impl AsRef<Path>, config: &ModelConfig) -> Result<Gpt2Weights> {
    let path = weights_path.as_ref();
    config.validate()?;
    let file = File::open(path).map_err(|e| Error::load(path, e))?;
    // SAFETY: the map is read-only and dropped before this function returns;
    // concurrent truncation of the file is outside what we guard against.
    let mmap = unsafe { Mmap::map(&file) }.map_err(|e| Error::load(path, e))?;
    let archive = SafeTensors::deserialize(&mmap).map_err(|e| Error::load(path, e))?;
    Archive { inner: archive, path }.weights(config)
}

/// Loads `config.json` and `model.safetensors` from a directory.
pub fn load_model_dir(dir: impl AsRef<Path>) -> Result<Gpt2Weights> {
    let dir = dir.as_ref();
    let config = ModelConfig::from_hf_json(dir.join(CONFIG_FILE))?;
    load_model(dir.join(WEIGHTS_FILE), &config)
}

struct Archive<'a> {
    inner: SafeTensors<'a>,
    path: &'a Path,
}

impl Archive<'_> {
    fn view(&self, name: &str) -> Result<TensorView<'_>> {
        self.inner
            .tensor(name)
            .or_else(|_| self.inner.tensor(&format!("transformer.{name}")))
            .map_err(|_| Error::MissingTensor(name.to_string()))
    }

    fn has(&self, name: &str) -> bool {
        self.view(name).is_ok()
    }

    fn values(&self, name: &str, view: &TensorView<'_>) -> Result<Vec<f32>> {
        if view.dtype() != Dtype::F32 {
            return Err(Error::load(
                self.path,
                format!("{name} is {:?}; only F32 archives are supported", view.dtype()),
            ));
        }
        Ok(view
            .data()
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect())
    }

    fn matrix(&self, name: &str, rows: usize, cols: usize) -> Result<Tensor2D> {
        let view = self.view(name)?;
        if view.shape() != [rows, cols] {
            return Err(Error::Consistency(format!(
                "{name} has shape {:?}, expected [{rows}, {cols}]",
                view.shape()
            )));
        }
        Tensor2D::new(rows, cols, self.values(name, &view)?)
    }

    fn vector(&self, name: &str, len: usize) -> Result<Vec<f32>> {
        let view = self.view(name)?;
        if view.shape() != [len] {
            return Err(Error::Consistency(format!(
                "{name} has shape {:?}, expected [{len}]",
                view.shape()
            )));
        }
        self.values(name, &view)
    }

    fn weights(&self, config: &ModelConfig) -> Result<Gpt2Weights> {
        let (d, p, v) = (config.d_model, config.d_mlp, config.vocab_size);
        let wte = self.matrix("wte.weight", v, d)?;
        let wpe = self.matrix("wpe.weight", config.n_ctx, d)?;

        let mut layers = Vec::with_capacity(config.n_layer);
        for i in 0..config.n_layer {
            let n = |s: &str| format!("h.{i}.{s}");
            layers.push(LayerWeights {
                ln1_gamma: self.vector(&n("ln_1.weight"), d)?,
                ln1_beta: self.vector(&n("ln_1.bias"), d)?,
                w_qkv: self.matrix(&n("attn.c_attn.weight"), d, 3 * d)?,
                b_qkv: self.vector(&n("attn.c_attn.bias"), 3 * d)?,
                w_o: self.matrix(&n("attn.c_proj.weight"), d, d)?,
                b_o: self.vector(&n("attn.c_proj.bias"), d)?,
                ln2_gamma: self.vector(&n("ln_2.weight"), d)?,
                ln2_beta: self.vector(&n("ln_2.bias"), d)?,
                w_in: self.matrix(&n("mlp.c_fc.weight"), d, p)?,
                b_in: self.vector(&n("mlp.c_fc.bias"), p)?,
                w_out: self.matrix(&n("mlp.c_proj.weight"), p, d)?,
                b_out: self.vector(&n("mlp.c_proj.bias"), d)?,
            });
        }
        if self.has(&format!("h.{}.ln_1.weight", config.n_layer)) {
            return Err(Error::Consistency(format!(
                "archive has more than the configured {} layers",
                config.n_layer
            )));
        }
        let lnf_gamma = self.vector("ln_f.weight", d)?;
        let lnf_beta = self.vector("ln_f.bias", d)?;

        // lm_head is a torch Linear, stored |V| × d.
        let unembedding = match self.inner.tensor("lm_head.weight") {
            Ok(_) => {
                let head = self.matrix("lm_head.weight", v, d)?;
                if head == wte {
                    Unembedding::Tied
                } else {
                    Unembedding::Separate(head.transpose())
                }
            }
            Err(_) => Unembedding::Tied,
        };

        let weights = Gpt2Weights {
            config: config.clone(),
            wte,
            wpe,
            layers,
            lnf_gamma,
            lnf_beta,
            unembedding,
        };
        weights.validate()?;
        Ok(weights)
    }
}
