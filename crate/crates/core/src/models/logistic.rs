use super::{N_CLASSES, N_LEADS};
use crate::error::{Error, Result};
use crate::tensorgrad::nn::Linear;
use crate::tensorgrad::{Adam, Bound, Graph, ParamStore, Tensor, Var};

/// Six independent multinomial logistic heads, one per lead week, on a shared
/// flattened input.
#[derive(Debug, Clone)]
pub struct LogisticRegression {
    pub store: ParamStore,
    pub input_dim: usize,
    pub l2: f64,
    lin: Linear,
}

/// Smallest accepted L2 penalty.
pub const MIN_L2: f64 = 1e-6;

impl LogisticRegression {
    pub fn new(input_dim: usize, l2: f64) -> Result<Self> {
        if l2 < MIN_L2 {
            return Err(Error::Config(format!("logistic L2 penalty {l2} below {MIN_L2}")));
        }
        let mut store = ParamStore::new();
        let lin = Linear::zeros(&mut store, "logit", input_dim, N_LEADS * N_CLASSES);
        Ok(Self { store, input_dim, l2, lin })
    }

    /// `x` is `[batch, input_dim]`; returns logits `[batch, 6, 4]`.
    pub fn logits(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        let b = g.shape(x)[0];
        let z = self.lin.forward(g, p, x)?;
        g.reshape(z, &[b, N_LEADS, N_CLASSES])
    }

    /// Penalized maximum likelihood by full-batch Adam.
    /// `x` is `[n, input_dim]`, `y` holds the six target classes of each row.
    pub fn fit(&mut self, x: &Tensor, y: &[[u8; N_LEADS]], iterations: usize, lr: f64) -> Result<f64> {
        let n = x.shape()[0];
        if x.ndim() != 2 || x.shape()[1] != self.input_dim || y.len() != n || n == 0 {
            return Err(Error::Shape("logistic design matrix and targets disagree".into()));
        }
        let onehot = Tensor::from_fn(&[n, N_LEADS, N_CLASSES], |i| {
            let (r, rest) = (i / (N_LEADS * N_CLASSES), i % (N_LEADS * N_CLASSES));
            (y[r][rest / N_CLASSES] as usize == rest % N_CLASSES) as u8 as f64
        });
        let mut opt = Adam::new(lr, 0.0);
        let mut last = f64::NAN;
        for _ in 0..iterations {
            let mut g = Graph::new();
            let p = self.store.bind(&mut g, false);
            let xv = g.constant(x.clone());
            let z = self.logits(&mut g, &p, xv)?;
            let lp = g.log_softmax(z, 2)?;
            let t = g.constant(onehot.clone());
            let picked = g.mul(lp, t)?;
            let nll = g.sum(picked);
            let nll = g.scale(nll, -1.0 / n as f64);
            let w = p.var(self.lin.w);
            let w2 = g.mul(w, w)?;
            let pen = g.sum(w2);
            let pen = g.scale(pen, self.l2);
            let loss = g.add(nll, pen)?;
            last = g.value(loss).item();
            if !last.is_finite() {
                return Err(Error::Numeric("logistic loss diverged".into()));
            }
            g.backward(loss)?;
            let grads = self.store.gradients(&g, &p);
            opt.step(&mut self.store, &grads);
        }
        Ok(last)
    }

    pub fn predict(&self, x: &Tensor) -> Result<Vec<[[f64; N_CLASSES]; N_LEADS]>> {
        let mut g = Graph::new();
        let p = self.store.bind(&mut g, true);
        let xv = g.constant(x.clone());
        let z = self.logits(&mut g, &p, xv)?;
        let pr = g.softmax(z, 2)?;
        Ok(super::probs_from_tensor(g.value(pr)))
    }
}
