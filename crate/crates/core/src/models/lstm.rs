use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ForwardCtx, N_CLASSES, N_INPUT_WEEKS, N_LEADS};
use crate::error::{Error, Result};
use crate::tensorgrad::nn::{affine, uniform, Linear};
use crate::tensorgrad::{Bound, Graph, ParamId, ParamStore, Tensor, Var};

/// LSTM cell with gates ordered input, forget, candidate, output.
#[derive(Debug, Clone)]
pub struct LstmCell {
    pub w_x: ParamId,
    pub w_h: ParamId,
    pub b: ParamId,
    pub hidden: usize,
}

impl LstmCell {
    pub fn new(store: &mut ParamStore, name: &str, d_in: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        let k = 1.0 / (hidden as f64).sqrt();
        Self {
            w_x: store.add(format!("{name}.w_x"), uniform(rng, &[d_in, 4 * hidden], k), true),
            w_h: store.add(format!("{name}.w_h"), uniform(rng, &[hidden, 4 * hidden], k), true),
            b: store.add(format!("{name}.b"), uniform(rng, &[4 * hidden], k), true),
            hidden,
        }
    }

    /// One step: `x` is `[batch, d_in]`, `h` and `c` are `[batch, hidden]`.
    pub fn step(&self, g: &mut Graph, p: &Bound, x: Var, h: Var, c: Var) -> Result<(Var, Var)> {
        let hd = self.hidden;
        let zx = g.matmul(x, p.var(self.w_x))?;
        let zh = g.matmul(h, p.var(self.w_h))?;
        let z = g.add(zx, zh)?;
        let shape = g.shape(z).to_vec();
        let bb = g.expand(p.var(self.b), &shape)?;
        let z = g.add(z, bb)?;
        let gate = |g: &mut Graph, i: usize| g.slice(z, 1, i * hd, (i + 1) * hd);
        let i = gate(g, 0)?;
        let i = g.sigmoid(i);
        let f = gate(g, 1)?;
        let f = g.sigmoid(f);
        let u = gate(g, 2)?;
        let u = g.tanh(u);
        let o = gate(g, 3)?;
        let o = g.sigmoid(o);
        let fc = g.mul(f, c)?;
        let iu = g.mul(i, u)?;
        let c2 = g.add(fc, iu)?;
        let tc = g.tanh(c2);
        let h2 = g.mul(o, tc)?;
        Ok((h2, c2))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeqConfig {
    pub input_dim: usize,
    pub hidden: usize,
    pub dropout: f64,
    /// Batch normalization (then dropout) on the inputs before the encoder.
    pub input_batch_norm: bool,
}

/// Encoder-decoder LSTM: six input weeks in, class logits for six lead weeks out.
///
/// The decoder is an LSTM cell started from the encoder's final state and
/// fed a learned start token at every lead; a shared linear head maps each
/// decoder state to class logits.
#[derive(Debug, Clone)]
pub struct SequenceForecaster {
    pub cfg: SeqConfig,
    pub store: ParamStore,
    enc: LstmCell,
    dec: LstmCell,
    start: ParamId,
    head: Linear,
    bn: Option<BatchNorm>,
}

#[derive(Debug, Clone)]
struct BatchNorm {
    gamma: ParamId,
    beta: ParamId,
    mean: ParamId,
    var: ParamId,
}

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

impl SequenceForecaster {
    pub fn new(cfg: SeqConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        if cfg.input_dim == 0 || cfg.hidden == 0 {
            return Err(Error::Config("input and hidden sizes must be positive".into()));
        }
        if !(0.0..1.0).contains(&cfg.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", cfg.dropout)));
        }
        let mut store = ParamStore::new();
        let bn = cfg.input_batch_norm.then(|| BatchNorm {
            gamma: store.add("bn.gamma", Tensor::full(&[cfg.input_dim], 1.0), true),
            beta: store.add("bn.beta", Tensor::zeros(&[cfg.input_dim]), true),
            mean: store.add("bn.running_mean", Tensor::zeros(&[cfg.input_dim]), false),
            var: store.add("bn.running_var", Tensor::full(&[cfg.input_dim], 1.0), false),
        });
        let enc = LstmCell::new(&mut store, "encoder", cfg.input_dim, cfg.hidden, rng);
        let dec = LstmCell::new(&mut store, "decoder", cfg.input_dim, cfg.hidden, rng);
        let start = store.add("decoder.start", uniform(rng, &[cfg.input_dim], 0.1), true);
        let head = Linear::new(&mut store, "head", cfg.hidden, N_CLASSES, true, rng);
        Ok(Self { cfg, store, enc, dec, start, head, bn })
    }

    fn normalize_inputs(&self, g: &mut Graph, p: &Bound, x: Var, ctx: &mut ForwardCtx) -> Result<Var> {
        let Some(bn) = &self.bn else { return Ok(x) };
        let s = g.shape(x).to_vec();
        let f = self.cfg.input_dim;
        let flat = g.reshape(x, &[s[0] * s[1], f])?;
        let normed = if g.is_training() {
            let (y, mean, var) = g.batch_norm(flat, BN_EPS)?;
            ctx.bn_updates.push(super::BnUpdate { mean_id: bn.mean, var_id: bn.var, mean, var, n: s[0] * s[1] });
            y
        } else {
            let rm = self.store.get(bn.mean).data();
            let rv = self.store.get(bn.var).data();
            let shift = Tensor::from_fn(&[f], |j| -rm[j] / (rv[j] + BN_EPS).sqrt());
            let scale = Tensor::from_fn(&[f], |j| 1.0 / (rv[j] + BN_EPS).sqrt());
            let sc = g.constant(scale);
            let sh = g.constant(shift);
            affine(g, flat, sc, sh)?
        };
        let y = affine(g, normed, p.var(bn.gamma), p.var(bn.beta))?;
        let y = g.dropout(y, self.cfg.dropout)?;
        g.reshape(y, &s)
    }

    /// `x` is `[batch, 6, input_dim]`; returns logits `[batch, 6, 4]`.
    pub fn logits(&self, g: &mut Graph, p: &Bound, x: Var, ctx: &mut ForwardCtx) -> Result<Var> {
        let s = g.shape(x).to_vec();
        if s.len() != 3 || s[1] != N_INPUT_WEEKS || s[2] != self.cfg.input_dim {
            return Err(Error::Shape(format!(
                "expected [batch, {N_INPUT_WEEKS}, {}] inputs, got {s:?}",
                self.cfg.input_dim
            )));
        }
        let b = s[0];
        let x = self.normalize_inputs(g, p, x, ctx)?;
        let mut h = g.constant(Tensor::zeros(&[b, self.cfg.hidden]));
        let mut c = g.constant(Tensor::zeros(&[b, self.cfg.hidden]));
        for t in 0..N_INPUT_WEEKS {
            let xt = g.slice(x, 1, t, t + 1)?;
            let xt = g.reshape(xt, &[b, self.cfg.input_dim])?;
            (h, c) = self.enc.step(g, p, xt, h, c)?;
        }
        let tok = g.expand(p.var(self.start), &[b, self.cfg.input_dim])?;
        let mut outs = Vec::with_capacity(N_LEADS);
        for _ in 0..N_LEADS {
            (h, c) = self.dec.step(g, p, tok, h, c)?;
            let hd = g.dropout(h, self.cfg.dropout)?;
            let o = self.head.forward(g, p, hd)?;
            outs.push(g.reshape(o, &[b, 1, N_CLASSES])?);
        }
        g.concat(&outs, 1)
    }
}
