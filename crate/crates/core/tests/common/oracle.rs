//! Straight-line f64 GPT-2 written from the block equations with plain loops.
//! Shares nothing with the engine beyond reading its weight fields.

use memhop::model::Gpt2Weights;

pub type Mat = Vec<Vec<f64>>;

pub struct OracleLayer {
    pub heads: Vec<Mat>,
    pub patterns: Vec<Mat>,
    pub attn_out: Mat,
    pub mlp_out: Mat,
    pub resid_post: Mat,
}

pub struct OracleRun {
    pub embed: Mat,
    pub layers: Vec<OracleLayer>,
    pub logits: Mat,
}

fn ln(x: &Mat, g: &[f32], b: &[f32], eps: f32) -> Mat {
    x.iter()
        .map(|row| {
            let n = row.len() as f64;
            let mu = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
            let s = (var + eps as f64).sqrt();
            row.iter()
                .enumerate()
                .map(|(i, v)| (v - mu) / s * g[i] as f64 + b[i] as f64)
                .collect()
        })
        .collect()
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (x + 0.044715 * x.powi(3))).tanh())
}

pub fn run(w: &Gpt2Weights, tokens: &[u32]) -> OracleRun {
    let c = &w.config;
    let (d, h, dh, p) = (c.d_model, c.n_head, c.d_model / c.n_head, c.d_mlp);
    let n = tokens.len();

    let mut r: Mat = (0..n)
        .map(|i| (0..d).map(|k| w.wte.get(tokens[i] as usize, k) as f64 + w.wpe.get(i, k) as f64).collect())
        .collect();
    let embed = r.clone();
    let mut layers = Vec::new();

    for lw in &w.layers {
        let x = ln(&r, &lw.ln1_gamma, &lw.ln1_beta, c.ln_eps);
        // proj(i, col) = (x W_qkv + b)[i][col]
        let proj = |i: usize, col: usize| {
            let mut s = lw.b_qkv[col] as f64;
            for k in 0..d {
                s += x[i][k] * lw.w_qkv.get(k, col) as f64;
            }
            s
        };
        let mut heads = Vec::new();
        let mut patterns = Vec::new();
        for j in 0..h {
            let q: Mat = (0..n).map(|i| (0..dh).map(|e| proj(i, j * dh + e)).collect()).collect();
            let kk: Mat = (0..n).map(|i| (0..dh).map(|e| proj(i, d + j * dh + e)).collect()).collect();
            let v: Mat = (0..n).map(|i| (0..dh).map(|e| proj(i, 2 * d + j * dh + e)).collect()).collect();
            let mut a = vec![vec![0.0; n]; n];
            for i in 0..n {
                let scores: Vec<f64> = (0..=i)
                    .map(|t| (0..dh).map(|e| q[i][e] * kk[t][e]).sum::<f64>() / (dh as f64).sqrt())
                    .collect();
                let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = scores.iter().map(|s| (s - m).exp()).sum();
                for t in 0..=i {
                    a[i][t] = (scores[t] - m).exp() / z;
                }
            }
            let mut out = vec![vec![0.0; d]; n];
            for i in 0..n {
                for e in 0..dh {
                    let zv: f64 = (0..n).map(|t| a[i][t] * v[t][e]).sum();
                    for k in 0..d {
                        out[i][k] += zv * lw.w_o.get(j * dh + e, k) as f64;
                    }
                }
            }
            heads.push(out);
            patterns.push(a);
        }
        let attn_out: Mat = (0..n)
            .map(|i| (0..d).map(|k| heads.iter().map(|hh| hh[i][k]).sum::<f64>() + lw.b_o[k] as f64).collect())
            .collect();
        let mid: Mat = (0..n).map(|i| (0..d).map(|k| r[i][k] + attn_out[i][k]).collect()).collect();
        let x2 = ln(&mid, &lw.ln2_gamma, &lw.ln2_beta, c.ln_eps);
        let mut mlp_out = vec![vec![0.0; d]; n];
        for i in 0..n {
            let hidden: Vec<f64> = (0..p)
                .map(|u| {
                    let s: f64 = (0..d).map(|k| x2[i][k] * lw.w_in.get(k, u) as f64).sum();
                    gelu(s + lw.b_in[u] as f64)
                })
                .collect();
            for k in 0..d {
                mlp_out[i][k] =
                    (0..p).map(|u| hidden[u] * lw.w_out.get(u, k) as f64).sum::<f64>() + lw.b_out[k] as f64;
            }
        }
        r = (0..n).map(|i| (0..d).map(|k| mid[i][k] + mlp_out[i][k]).collect()).collect();
        layers.push(OracleLayer {
            heads,
            patterns,
            attn_out,
            mlp_out,
            resid_post: r.clone(),
        });
    }

    let f = ln(&r, &w.lnf_gamma, &w.lnf_beta, c.ln_eps);
    let wu = w.unembedding_matrix();
    let logits = f
        .iter()
        .map(|row| (0..c.vocab_size).map(|t| (0..d).map(|k| row[k] * wu.get(k, t) as f64).sum()).collect())
        .collect();
    OracleRun { embed, layers, logits }
}
