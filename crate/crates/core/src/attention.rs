//! Multi-head scaled dot-product attention and sinusoidal positions.
//!
//! For each head `h`, `O_h = softmax(Q_h K_hᵀ / sqrt(d_head)) V_h` with
//! `Q_h = Q W_Q^h` and likewise for keys and values. Heads are concatenated
//! and mapped back to the model width by `W_O`.
//!
//! The per-head projections are stored side by side in one `d_model ×
//! d_model` matrix per role; head `h` owns columns `h·d_head..(h+1)·d_head`.

use crate::autodiff::{Tape, Var};
use crate::error::{MatError, Result};
use crate::params::{Bound, Linear, ParamStore};
use crate::rng::SplitRng;
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct AttentionParams {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub heads: usize,
    pub d_model: usize,
}

impl AttentionParams {
    pub fn new(store: &mut ParamStore, name: &str, d_model: usize, heads: usize, rng: &mut SplitRng) -> Result<Self> {
        if heads == 0 || !d_model.is_multiple_of(heads) {
            return Err(MatError::Config(format!(
                "{heads} heads do not evenly split attention width {d_model}"
            )));
        }
        Ok(AttentionParams {
            query: Linear::new(store, &format!("{name}.w_q"), d_model, d_model, false, rng),
            key: Linear::new(store, &format!("{name}.w_k"), d_model, d_model, false, rng),
            value: Linear::new(store, &format!("{name}.w_v"), d_model, d_model, false, rng),
            output: Linear::new(store, &format!("{name}.w_o"), d_model, d_model, false, rng),
            heads,
            d_model,
        })
    }

    pub fn d_head(&self) -> usize {
        self.d_model / self.heads
    }
}

/// Attention of `queries` (`ℓq × d`) over `keys`/`values` (`ℓk × d`).
pub fn multi_head_attention(
    tape: &mut Tape,
    bound: &Bound,
    params: &AttentionParams,
    queries: Var,
    keys: Var,
    values: Var,
) -> Result<Var> {
    let d = params.d_model;
    for (what, v) in [("queries", queries), ("keys", keys), ("values", values)] {
        match tape.shape(v) {
            [_, w] if *w == d => {}
            s => {
                return Err(MatError::dim(
                    "multi_head_attention",
                    format!("{what} have shape {s:?}, expected width {d}"),
                ))
            }
        }
    }
    if tape.shape(keys)[0] != tape.shape(values)[0] {
        return Err(MatError::dim(
            "multi_head_attention",
            format!("{} keys but {} values", tape.shape(keys)[0], tape.shape(values)[0]),
        ));
    }

    let q = params.query.forward(tape, bound, queries)?;
    let k = params.key.forward(tape, bound, keys)?;
    let v = params.value.forward(tape, bound, values)?;
    let dh = params.d_head();
    let scale = 1.0 / (dh as f64).sqrt();

    let mut heads = Vec::with_capacity(params.heads);
    for h in 0..params.heads {
        let qh = tape.slice_cols(q, h * dh, dh)?;
        let kh = tape.slice_cols(k, h * dh, dh)?;
        let vh = tape.slice_cols(v, h * dh, dh)?;
        let kt = tape.transpose(kh)?;
        let logits = tape.matmul(qh, kt)?;
        let logits = tape.scale(logits, scale);
        let weights = tape.softmax(logits, 1)?;
        heads.push(tape.matmul(weights, vh)?);
    }
    let cat = if heads.len() == 1 {
        heads[0]
    } else {
        tape.concat_cols(&heads)?
    };
    params.output.forward(tape, bound, cat)
}

/// Fixed sinusoidal position codes: entry `i` of position `t` is
/// `sin(t · c^(i/d))` for even `i` and `cos(t · c^(i/d))` for odd `i`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PositionalEncoding {
    pub base: f64,
    pub width: usize,
}

impl PositionalEncoding {
    pub const DEFAULT_BASE: f64 = 10_000.0;

    pub fn new(width: usize) -> Self {
        PositionalEncoding {
            base: Self::DEFAULT_BASE,
            width,
        }
    }

    pub fn embedding(&self, t: usize) -> Vec<f64> {
        let d = self.width as f64;
        (0..self.width)
            .map(|i| {
                let arg = t as f64 * self.base.powf(i as f64 / d);
                if i % 2 == 0 {
                    arg.sin()
                } else {
                    arg.cos()
                }
            })
            .collect()
    }

    /// Rows `0..len` stacked into a `len × width` matrix.
    pub fn table(&self, len: usize) -> Tensor {
        let data = (0..len).flat_map(|t| self.embedding(t)).collect();
        Tensor::matrix(len, self.width, data).expect("table shape")
    }
}
