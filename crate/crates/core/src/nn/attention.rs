//! Multi-head scaled dot-product self-attention.
//!
//! Projections for all heads are stored as single `[heads*d x model_dim]`
//! matrices; head `h` uses the column block `[h*d, (h+1)*d)` of the
//! projected sequence. No positional encoding is added, so the stack is
//! permutation-equivariant over frames.

use super::layers::LayerNorm;
use super::params::{ParamId, ParamStore, Partition, Session};
use crate::autodiff::Var;
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct MultiHeadAttention {
    pub heads: usize,
    pub d_k: usize,
    pub d_v: usize,
    pub model_dim: usize,
    wq: ParamId,
    bq: ParamId,
    wk: ParamId,
    wv: ParamId,
    bv: ParamId,
    wo: ParamId,
    bo: ParamId,
}

/// Output of one attention layer, with the per-head attention matrices kept
/// on the tape for inspection.
pub struct AttentionOutput {
    pub output: Var,
    pub weights: Vec<Var>,
}

impl MultiHeadAttention {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        partition: Partition,
        model_dim: usize,
        heads: usize,
        d_k: usize,
        d_v: usize,
        seed: u64,
    ) -> Result<Self> {
        if heads == 0 || heads * d_v != model_dim {
            return Err(Error::invalid(format!(
                "attention: heads ({heads}) x d_v ({d_v}) must equal model_dim ({model_dim})"
            )));
        }
        let mut weight = |tag: &str, rows: usize, cols: usize| {
            store.add_uniform(format!("{name}.{tag}.weight"), partition, &[rows, cols], cols, seed)
        };
        let wq = weight("query", heads * d_k, model_dim);
        // no key bias: it shifts every score in a row equally and cancels in the softmax
        let wk = weight("key", heads * d_k, model_dim);
        let wv = weight("value", heads * d_v, model_dim);
        let wo = weight("out", model_dim, heads * d_v);
        let mut bias = |tag: &str, rows: usize, cols: usize| {
            store.add_uniform(format!("{name}.{tag}.bias"), partition, &[rows], cols, seed)
        };
        let bq = bias("query", heads * d_k, model_dim);
        let bv = bias("value", heads * d_v, model_dim);
        let bo = bias("out", model_dim, heads * d_v);
        Ok(MultiHeadAttention {
            heads,
            d_k,
            d_v,
            model_dim,
            wq,
            bq,
            wk,
            wv,
            bv,
            wo,
            bo,
        })
    }

    fn project(s: &mut Session, x: Var, w: ParamId, b: Option<ParamId>, steps: usize) -> Result<Var> {
        let w = s.param(w);
        let wt = s.tape.transpose(w)?;
        let y = s.tape.matmul(x, wt)?;
        match b {
            Some(b) => {
                let b = s.param(b);
                let bb = s.tape.broadcast_rows(b, steps)?;
                s.tape.add(y, bb)
            }
            None => Ok(y),
        }
    }

    /// `x + W_o [head_1 ; ... ; head_H]` where
    /// `head_h = softmax(Q_h K_h^T / sqrt(d_k)) V_h`.
    pub fn forward(&self, s: &mut Session, x: Var) -> Result<AttentionOutput> {
        let shape = s.tape.shape(x).to_vec();
        if shape.len() != 2 || shape[1] != self.model_dim {
            return Err(Error::Shape {
                op: "multi_head_attention",
                lhs: shape,
                rhs: vec![self.model_dim],
            });
        }
        let steps = shape[0];
        let q = Self::project(s, x, self.wq, Some(self.bq), steps)?;
        let k = Self::project(s, x, self.wk, None, steps)?;
        let v = Self::project(s, x, self.wv, Some(self.bv), steps)?;
        let scale = 1.0 / (self.d_k as f64).sqrt();
        let mut heads = Vec::with_capacity(self.heads);
        let mut weights = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let qh = s.tape.slice(q, 1, h * self.d_k, (h + 1) * self.d_k)?;
            let kh = s.tape.slice(k, 1, h * self.d_k, (h + 1) * self.d_k)?;
            let vh = s.tape.slice(v, 1, h * self.d_v, (h + 1) * self.d_v)?;
            let kt = s.tape.transpose(kh)?;
            let scores = s.tape.matmul(qh, kt)?;
            let scores = s.tape.scale(scores, scale);
            let attn = s.tape.softmax(scores)?;
            heads.push(s.tape.matmul(attn, vh)?);
            weights.push(attn);
        }
        let merged = s.tape.concat(&heads, 1)?;
        let out = Self::project(s, merged, self.wo, Some(self.bo), steps)?;
        let output = s.tape.add(x, out)?;
        Ok(AttentionOutput { output, weights })
    }
}

/// Chain of attention layers followed by a single LayerNorm.
#[derive(Clone, Debug)]
pub struct AttentionStack {
    layers: Vec<MultiHeadAttention>,
    norm: LayerNorm,
}

pub struct StackOutput {
    pub output: Var,
    /// Attention matrices, `[layer][head]`.
    pub weights: Vec<Vec<Var>>,
}

impl AttentionStack {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        partition: Partition,
        layers: usize,
        model_dim: usize,
        heads: usize,
        d_k: usize,
        d_v: usize,
        seed: u64,
    ) -> Result<Self> {
        let layers = (0..layers)
            .map(|i| {
                MultiHeadAttention::new(
                    store,
                    &format!("{name}.layer{i}"),
                    partition,
                    model_dim,
                    heads,
                    d_k,
                    d_v,
                    seed,
                )
            })
            .collect::<Result<_>>()?;
        let norm = LayerNorm::new(store, &format!("{name}.norm"), partition, model_dim);
        Ok(AttentionStack { layers, norm })
    }

    pub fn layers(&self) -> &[MultiHeadAttention] {
        &self.layers
    }

    pub fn forward(&self, s: &mut Session, x: Var) -> Result<StackOutput> {
        let mut h = x;
        let mut weights = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let out = layer.forward(s, h)?;
            h = out.output;
            weights.push(out.weights);
        }
        let output = self.norm.forward(s, h)?;
        Ok(StackOutput { output, weights })
    }
}
