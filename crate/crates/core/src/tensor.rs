//! Dense row-major `f32` matrices and the handful of kernels GPT-2 needs.
//!
//! Everything here is a pure function of its inputs. Matrix products go
//! through `matrixmultiply`'s packed sgemm with `f32` accumulation; large
//! products are split into fixed column blocks and run on the rayon pool,
//! so results do not depend on the number of threads.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Products with at least this many multiply-adds are split across threads.
const PARALLEL_WORK: usize = 1 << 22;
/// Output columns per parallel block.
const COLUMN_BLOCK: usize = 2048;

/// Below this many left-hand rows, products skip packing and loop directly.
const FEW_ROWS: usize = 4;

fn dot(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0.0f32; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: f32 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for i in 0..8 {
            acc[i] += x[i] * y[i];
        }
    }
    acc.iter().sum::<f32>() + tail
}

/// Dense row-major matrix of 32-bit floats.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct Tensor2D {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl Tensor2D {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::argument(format!(
                "tensor data has {} elements, expected {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(n, n);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    /// Builds a matrix from equal-length rows.
    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::argument(format!(
                    "row {i} has {} columns, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    /// A single row as a `1 x n` matrix.
    pub fn row_vector(values: &[f32]) -> Self {
        Self {
            rows: 1,
            cols: values.len(),
            data: values.to_vec(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f32 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f32] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f32] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f32]> {
        // chunks_exact(0) panics; an empty-column matrix has no data anyway
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    pub fn last_row(&self) -> &[f32] {
        self.row(self.rows - 1)
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    /// Copy of columns `start..end`.
    pub fn columns(&self, start: usize, end: usize) -> Result<Self> {
        if start > end || end > self.cols {
            return Err(Error::argument(format!(
                "column range {start}..{end} outside {} columns",
                self.cols
            )));
        }
        let width = end - start;
        let mut data = Vec::with_capacity(self.rows * width);
        for row in self.iter_rows() {
            data.extend_from_slice(&row[start..end]);
        }
        Ok(Self {
            rows: self.rows,
            cols: width,
            data,
        })
    }

    /// Copy of rows `start..end`.
    pub fn row_range(&self, start: usize, end: usize) -> Result<Self> {
        if start > end || end > self.rows {
            return Err(Error::argument(format!(
                "row range {start}..{end} outside {} rows",
                self.rows
            )));
        }
        Ok(Self {
            rows: end - start,
            cols: self.cols,
            data: self.data[start * self.cols..end * self.cols].to_vec(),
        })
    }

    pub fn add(&self, other: &Tensor2D) -> Result<Self> {
        let mut out = self.clone();
        out.add_assign(other)?;
        Ok(out)
    }

    pub fn sub(&self, other: &Tensor2D) -> Result<Self> {
        self.check_same_shape("sub", other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn add_assign(&mut self, other: &Tensor2D) -> Result<()> {
        self.check_same_shape("add", other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    /// Adds `v` to every row.
    pub fn add_row_vector(&mut self, v: &[f32]) -> Result<()> {
        if v.len() != self.cols {
            return Err(Error::Shape {
                op: "add_row_vector",
                left: self.shape(),
                right: (1, v.len()),
            });
        }
        for row in self.data.chunks_exact_mut(self.cols.max(1)) {
            for (a, b) in row.iter_mut().zip(v) {
                *a += b;
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f32) {
        for x in &mut self.data {
            *x *= factor;
        }
    }

    /// Largest absolute elementwise difference.
    pub fn max_abs_diff(&self, other: &Tensor2D) -> Result<f32> {
        self.check_same_shape("max_abs_diff", other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(0.0f32, |m, (a, b)| m.max((a - b).abs())))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    fn check_same_shape(&self, op: &'static str, other: &Tensor2D) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::Shape {
                op,
                left: self.shape(),
                right: other.shape(),
            });
        }
        Ok(())
    }
}

/// Strided read-only operand for sgemm.
#[derive(Clone, Copy)]
struct Operand<'a> {
    data: &'a [f32],
    row_stride: isize,
    col_stride: isize,
}

/// `out[m x n] = a[m x k] * b[k x n]`, computed block by block over `n`.
fn gemm(m: usize, k: usize, n: usize, a: Operand<'_>, b: Operand<'_>) -> Vec<f32> {
    let mut out = vec![0.0f32; m * n];
    if m == 0 || n == 0 || k == 0 {
        return out;
    }
    if m * k * n < PARALLEL_WORK || n <= COLUMN_BLOCK {
        // SAFETY: strides describe in-bounds layouts of `a.data` (m x k),
        // `b.data` (k x n) and `out` (m x n, row-major); checked by callers.
        unsafe {
            matrixmultiply::sgemm(
                m,
                k,
                n,
                1.0,
                a.data.as_ptr(),
                a.row_stride,
                a.col_stride,
                b.data.as_ptr(),
                b.row_stride,
                b.col_stride,
                0.0,
                out.as_mut_ptr(),
                n as isize,
                1,
            );
        }
        return out;
    }

    let blocks: Vec<(usize, Vec<f32>)> = (0..n)
        .step_by(COLUMN_BLOCK)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|start| {
            let width = COLUMN_BLOCK.min(n - start);
            let mut block = vec![0.0f32; m * width];
            // SAFETY: column block `start..start + width` of `b` stays inside
            // the k x n layout; `block` is m x width row-major.
            unsafe {
                matrixmultiply::sgemm(
                    m,
                    k,
                    width,
                    1.0,
                    a.data.as_ptr(),
                    a.row_stride,
                    a.col_stride,
                    b.data.as_ptr().offset(start as isize * b.col_stride),
                    b.row_stride,
                    b.col_stride,
                    0.0,
                    block.as_mut_ptr(),
                    width as isize,
                    1,
                );
            }
            (start, block)
        })
        .collect();

    for (start, block) in blocks {
        let width = block.len() / m;
        for r in 0..m {
            out[r * n + start..r * n + start + width]
                .copy_from_slice(&block[r * width..(r + 1) * width]);
        }
    }
    out
}

/// Standard matrix product `a * b`.
pub fn matmul(a: &Tensor2D, b: &Tensor2D) -> Result<Tensor2D> {
    if a.cols != b.rows {
        return Err(Error::Shape {
            op: "matmul",
            left: a.shape(),
            right: b.shape(),
        });
    }
    if a.rows <= FEW_ROWS {
        let mut data = vec![0.0f32; a.rows * b.cols];
        for (out, x) in data.chunks_exact_mut(b.cols.max(1)).zip(a.data.chunks_exact(a.cols.max(1))) {
            for (&xk, brow) in x.iter().zip(b.data.chunks_exact(b.cols.max(1))) {
                for (o, &v) in out.iter_mut().zip(brow) {
                    *o += xk * v;
                }
            }
        }
        return Ok(Tensor2D {
            rows: a.rows,
            cols: b.cols,
            data,
        });
    }
    let data = gemm(
        a.rows,
        a.cols,
        b.cols,
        Operand {
            data: &a.data,
            row_stride: a.cols as isize,
            col_stride: 1,
        },
        Operand {
            data: &b.data,
            row_stride: b.cols as isize,
            col_stride: 1,
        },
    );
    Ok(Tensor2D {
        rows: a.rows,
        cols: b.cols,
        data,
    })
}

/// `a * bᵀ` without materialising the transpose.
pub fn matmul_transposed(a: &Tensor2D, b: &Tensor2D) -> Result<Tensor2D> {
    if a.cols != b.cols {
        return Err(Error::Shape {
            op: "matmul_transposed",
            left: a.shape(),
            right: b.shape(),
        });
    }
    if a.rows <= FEW_ROWS && a.cols > 0 {
        let data = a
            .data
            .chunks_exact(a.cols)
            .flat_map(|x| b.data.chunks_exact(b.cols).map(move |brow| dot(x, brow)))
            .collect();
        return Ok(Tensor2D {
            rows: a.rows,
            cols: b.rows,
            data,
        });
    }
    let data = gemm(
        a.rows,
        a.cols,
        b.rows,
        Operand {
            data: &a.data,
            row_stride: a.cols as isize,
            col_stride: 1,
        },
        Operand {
            data: &b.data,
            row_stride: 1,
            col_stride: b.cols as isize,
        },
    );
    Ok(Tensor2D {
        rows: a.rows,
        cols: b.rows,
        data,
    })
}

/// Row-wise softmax with optional binary mask; masked entries get exactly 0.
pub fn row_softmax(x: &Tensor2D, mask: Option<&Tensor2D>) -> Result<Tensor2D> {
    if let Some(mask) = mask {
        if mask.shape() != x.shape() {
            return Err(Error::Shape {
                op: "row_softmax mask",
                left: x.shape(),
                right: mask.shape(),
            });
        }
        if mask.data.iter().any(|&m| m != 0.0 && m != 1.0) {
            return Err(Error::argument("softmax mask entries must be 0 or 1"));
        }
    }
    let mut out = x.clone();
    for r in 0..x.rows {
        let keep = mask.map(|m| m.row(r));
        let row = out.row_mut(r);
        let unmasked = |c: usize| keep.is_none_or(|k| k[c] != 0.0);
        let max = (0..row.len())
            .filter(|&c| unmasked(c))
            .map(|c| row[c])
            .fold(f32::NEG_INFINITY, f32::max);
        if max == f32::NEG_INFINITY {
            return Err(Error::DegenerateSoftmax { row: r });
        }
        let mut sum = 0.0f32;
        for (c, v) in row.iter_mut().enumerate() {
            if unmasked(c) {
                *v = (*v - max).exp();
                sum += *v;
            } else {
                *v = 0.0;
            }
        }
        let inv = 1.0 / sum;
        for v in row.iter_mut() {
            *v *= inv;
        }
    }
    Ok(out)
}

/// Softmax of a single vector.
pub fn softmax(values: &[f32]) -> Vec<f32> {
    let max = values.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let mut out: Vec<f32> = values.iter().map(|v| (v - max).exp()).collect();
    let inv = 1.0 / out.iter().sum::<f32>();
    for v in &mut out {
        *v *= inv;
    }
    out
}

/// Per-row layer normalisation followed by `gamma * x + beta`.
pub fn layer_norm(x: &Tensor2D, gamma: &[f32], beta: &[f32], eps: f32) -> Result<Tensor2D> {
    if gamma.len() != x.cols || beta.len() != x.cols {
        return Err(Error::Shape {
            op: "layer_norm",
            left: x.shape(),
            right: (gamma.len(), beta.len()),
        });
    }
    let mut out = x.clone();
    let n = x.cols as f64;
    for row in out.data.chunks_exact_mut(x.cols.max(1)) {
        let mean = row.iter().map(|&v| v as f64).sum::<f64>() / n;
        let var = row
            .iter()
            .map(|&v| {
                let d = v as f64 - mean;
                d * d
            })
            .sum::<f64>()
            / n;
        let inv = 1.0 / (var + eps as f64).sqrt();
        for ((v, g), b) in row.iter_mut().zip(gamma).zip(beta) {
            *v = ((*v as f64 - mean) * inv) as f32 * g + b;
        }
    }
    Ok(out)
}

/// Tanh-approximation GELU, as used by the released GPT-2 checkpoints.
pub fn gelu_scalar(x: f32) -> f32 {
    const SQRT_2_OVER_PI: f32 = 0.797_884_6;
    0.5 * x * (1.0 + (SQRT_2_OVER_PI * (x + 0.044_715 * x * x * x)).tanh())
}

pub fn gelu(x: &Tensor2D) -> Tensor2D {
    Tensor2D {
        rows: x.rows,
        cols: x.cols,
        data: x.data.iter().map(|&v| gelu_scalar(v)).collect(),
    }
}

/// The `k` largest entries, descending; equal values keep the lower id first.
pub fn top_k(probs: &[f32], k: usize) -> Result<Vec<(u32, f32)>> {
    if k == 0 || k > probs.len() {
        return Err(Error::argument(format!(
            "top_k: k = {k} must be in 1..={}",
            probs.len()
        )));
    }
    let order = |a: &(u32, f32), b: &(u32, f32)| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0));
    let mut entries: Vec<(u32, f32)> = probs
        .iter()
        .enumerate()
        .map(|(i, &p)| (i as u32, p))
        .collect();
    if k < entries.len() {
        entries.select_nth_unstable_by(k - 1, order);
        entries.truncate(k);
    }
    entries.sort_unstable_by(order);
    Ok(entries)
}
