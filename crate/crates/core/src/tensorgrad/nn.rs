//! Layers assembled from graph primitives.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::graph::{Graph, Var};
use super::params::{Bound, ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::Result;

pub fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], bound: f64) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(-bound..bound))
}

/// Approximately N(0, std^2) entries, truncated at two standard deviations.
pub fn trunc_normal(rng: &mut ChaCha8Rng, shape: &[usize], std: f64) -> Tensor {
    Tensor::from_fn(shape, |_| loop {
        let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
        let u2: f64 = rng.random();
        let z = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
        if z.abs() <= 2.0 {
            break z * std;
        }
    })
}

#[derive(Debug, Clone)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
    pub d_in: usize,
    pub d_out: usize,
}

impl Linear {
    /// Uniform(+-1/sqrt(d_in)) initialization.
    pub fn new(store: &mut ParamStore, name: &str, d_in: usize, d_out: usize, bias: bool, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (d_in as f64).sqrt();
        let w = store.add(format!("{name}.w"), uniform(rng, &[d_in, d_out], bound), true);
        let b = bias.then(|| store.add(format!("{name}.b"), uniform(rng, &[d_out], bound), true));
        Self { w, b, d_in, d_out }
    }

    pub fn zeros(store: &mut ParamStore, name: &str, d_in: usize, d_out: usize) -> Self {
        let w = store.add(format!("{name}.w"), Tensor::zeros(&[d_in, d_out]), true);
        let b = Some(store.add(format!("{name}.b"), Tensor::zeros(&[d_out]), true));
        Self { w, b, d_in, d_out }
    }

    /// Applies to the last axis of `x`.
    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        let y = g.matmul(x, p.var(self.w))?;
        match self.b {
            Some(b) => {
                let shape = g.shape(y).to_vec();
                let bb = g.expand(p.var(b), &shape)?;
                g.add(y, bb)
            }
            None => Ok(y),
        }
    }
}

/// Elementwise affine map along the last axis.
pub fn affine(g: &mut Graph, x: Var, scale: Var, shift: Var) -> Result<Var> {
    let shape = g.shape(x).to_vec();
    let s = g.expand(scale, &shape)?;
    let t = g.expand(shift, &shape)?;
    let y = g.mul(x, s)?;
    g.add(y, t)
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub eps: f64,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, d: usize) -> Self {
        let gamma = store.add(format!("{name}.gamma"), Tensor::full(&[d], 1.0), true);
        let beta = store.add(format!("{name}.beta"), Tensor::zeros(&[d]), true);
        Self { gamma, beta, eps: 1e-5 }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        let n = g.layer_norm(x, self.eps)?;
        affine(g, n, p.var(self.gamma), p.var(self.beta))
    }
}

/// softmax(q k^T / sqrt(d)) v for `[batch, n, d]` inputs, with dropout on the
/// attention weights.
pub fn scaled_dot_product_attention(g: &mut Graph, q: Var, k: Var, v: Var, dropout: f64) -> Result<Var> {
    let d = *g.shape(q).last().unwrap_or(&1);
    let kt = g.transpose(k)?;
    let s = g.matmul(q, kt)?;
    let s = g.scale(s, 1.0 / (d as f64).sqrt());
    let nd = g.shape(s).len();
    let a = g.softmax(s, nd - 1)?;
    let a = g.dropout(a, dropout)?;
    g.matmul(a, v)
}

#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    pub qkv: Linear,
    pub proj: Linear,
    pub heads: usize,
    pub dim_head: usize,
}

impl MultiHeadAttention {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, heads: usize, dim_head: usize, rng: &mut ChaCha8Rng) -> Self {
        let inner = heads * dim_head;
        Self {
            qkv: Linear::new(store, &format!("{name}.qkv"), dim, 3 * inner, false, rng),
            proj: Linear::new(store, &format!("{name}.proj"), inner, dim, true, rng),
            heads,
            dim_head,
        }
    }

    /// `x` is `[batch, tokens, dim]`.
    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var, dropout: f64) -> Result<Var> {
        let s = g.shape(x).to_vec();
        let (b, n) = (s[0], s[1]);
        let (h, dh) = (self.heads, self.dim_head);
        let inner = h * dh;
        let qkv = self.qkv.forward(g, p, x)?;
        let split = |g: &mut Graph, i: usize| -> Result<Var> {
            let t = g.slice(qkv, 2, i * inner, (i + 1) * inner)?;
            let t = g.reshape(t, &[b, n, h, dh])?;
            let t = g.permute(t, &[0, 2, 1, 3])?;
            g.reshape(t, &[b * h, n, dh])
        };
        let q = split(g, 0)?;
        let k = split(g, 1)?;
        let v = split(g, 2)?;
        let o = scaled_dot_product_attention(g, q, k, v, dropout)?;
        let o = g.reshape(o, &[b, h, n, dh])?;
        let o = g.permute(o, &[0, 2, 1, 3])?;
        let o = g.reshape(o, &[b, n, inner])?;
        let o = self.proj.forward(g, p, o)?;
        g.dropout(o, dropout)
    }
}

/// Pre-norm transformer block with a GELU feed-forward layer.
#[derive(Debug, Clone)]
pub struct TransformerBlock {
    pub ln1: LayerNorm,
    pub attn: MultiHeadAttention,
    pub ln2: LayerNorm,
    pub fc1: Linear,
    pub fc2: Linear,
}

impl TransformerBlock {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        dim: usize,
        heads: usize,
        dim_head: usize,
        mlp_dim: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        Self {
            ln1: LayerNorm::new(store, &format!("{name}.ln1"), dim),
            attn: MultiHeadAttention::new(store, &format!("{name}.attn"), dim, heads, dim_head, rng),
            ln2: LayerNorm::new(store, &format!("{name}.ln2"), dim),
            fc1: Linear::new(store, &format!("{name}.fc1"), dim, mlp_dim, true, rng),
            fc2: Linear::new(store, &format!("{name}.fc2"), mlp_dim, dim, true, rng),
        }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var, dropout: f64) -> Result<Var> {
        let h = self.ln1.forward(g, p, x)?;
        let h = self.attn.forward(g, p, h, dropout)?;
        let x = g.add(x, h)?;
        let h = self.ln2.forward(g, p, x)?;
        let h = self.fc1.forward(g, p, h)?;
        let h = g.gelu(h);
        let h = g.dropout(h, dropout)?;
        let h = self.fc2.forward(g, p, h)?;
        let h = g.dropout(h, dropout)?;
        g.add(x, h)
    }
}

/// Stack of blocks followed by a final layer norm.
#[derive(Debug, Clone)]
pub struct Transformer {
    pub blocks: Vec<TransformerBlock>,
    pub norm: LayerNorm,
}

impl Transformer {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        dim: usize,
        depth: usize,
        heads: usize,
        dim_head: usize,
        mlp_dim: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let blocks = (0..depth)
            .map(|i| TransformerBlock::new(store, &format!("{name}.block{i}"), dim, heads, dim_head, mlp_dim, rng))
            .collect();
        Self { blocks, norm: LayerNorm::new(store, &format!("{name}.norm"), dim) }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, mut x: Var, dropout: f64) -> Result<Var> {
        for b in &self.blocks {
            x = b.forward(g, p, x, dropout)?;
        }
        self.norm.forward(g, p, x)
    }
}
