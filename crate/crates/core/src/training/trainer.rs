use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{sequence_loss, LossKind};
use crate::error::{Error, Result};
use crate::eval::balanced_accuracy_by_lead;
use crate::models::{ForwardCtx, Probs, SequenceForecaster, BN_MOMENTUM, N_LEADS};
use crate::tensorgrad::{clip_global_norm, Adam, Graph, ParamId, ParamStore, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    /// L2 penalty added to the gradient.
    pub weight_decay: f64,
    pub clip_norm: f64,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    /// Length of the weight-averaging phase relative to the epochs trained.
    pub swa_fraction: f64,
    pub swa_lr: f64,
    pub loss: LossKind,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.swa_lr >= 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Config("batch size and epochs must be positive".into()));
        }
        if !(self.clip_norm > 0.0) || self.weight_decay < 0.0 || !(0.0..=1.0).contains(&self.swa_fraction) {
            return Err(Error::Config("invalid clip norm, weight decay or SWA fraction".into()));
        }
        Ok(())
    }
}

/// Inputs `[n, 6, features]` and six targets per row.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: Tensor,
    pub y: Vec<[u8; N_LEADS]>,
}

impl Dataset {
    pub fn new(x: Tensor, y: Vec<[u8; N_LEADS]>) -> Result<Self> {
        if x.ndim() != 3 || x.shape()[0] != y.len() || x.shape()[1] != N_LEADS {
            return Err(Error::Shape(format!("dataset inputs {:?} with {} targets", x.shape(), y.len())));
        }
        Ok(Self { x, y })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    fn rows(&self, idx: &[usize]) -> (Tensor, Vec<[u8; N_LEADS]>) {
        let per = self.x.len() / self.len();
        let mut data = Vec::with_capacity(idx.len() * per);
        idx.iter().for_each(|&i| data.extend_from_slice(&self.x.data()[i * per..(i + 1) * per]));
        let mut shape = self.x.shape().to_vec();
        shape[0] = idx.len();
        (Tensor::new(shape, data).expect("consistent rows"), idx.iter().map(|&i| self.y[i]).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Main,
    Averaging,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub phase: Phase,
    pub train_loss: f64,
    /// Mean over lead weeks of the validation balanced accuracy.
    pub val_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub main_epochs: usize,
    pub averaging_epochs: usize,
    pub final_val_score: f64,
}

/// Class probabilities for every row of `x`.
pub fn predict(model: &SequenceForecaster, x: &Tensor) -> Result<Vec<Probs>> {
    let n = x.shape()[0];
    let per = x.len() / n.max(1);
    let mut out = Vec::with_capacity(n);
    for start in (0..n).step_by(256) {
        let end = (start + 256).min(n);
        let mut shape = x.shape().to_vec();
        shape[0] = end - start;
        let chunk = Tensor::new(shape, x.data()[start * per..end * per].to_vec())?;
        let mut g = Graph::new();
        let p = model.store.bind(&mut g, true);
        let xv = g.constant(chunk);
        let z = model.logits(&mut g, &p, xv, &mut ForwardCtx::default())?;
        let pr = g.softmax(z, 2)?;
        out.extend(crate::models::probs_from_tensor(g.value(pr)));
    }
    Ok(out)
}

fn score(model: &SequenceForecaster, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Ok(f64::NAN);
    }
    let probs = predict(model, &data.x)?;
    let bacc = balanced_accuracy_by_lead(&probs, &data.y)?;
    Ok(bacc.iter().sum::<f64>() / N_LEADS as f64)
}

fn running_update(store: &mut ParamStore, ctx: &ForwardCtx) {
    for u in &ctx.bn_updates {
        let unbias = u.n as f64 / (u.n as f64 - 1.0);
        let m = store.get_mut(u.mean_id).data_mut();
        m.iter_mut().zip(&u.mean).for_each(|(r, b)| *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * b);
        let v = store.get_mut(u.var_id).data_mut();
        v.iter_mut().zip(&u.var).for_each(|(r, b)| *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * b * unbias);
    }
}

struct Stepper<'a> {
    cfg: &'a TrainConfig,
    opt: Adam,
    step: u64,
}

impl Stepper<'_> {
    fn epoch(&mut self, model: &mut SequenceForecaster, data: &Dataset, epoch: usize) -> Result<f64> {
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed ^ (epoch as u64).wrapping_mul(0x2545_F491_4F6C_DD1D));
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut count = 0usize;
        for (bi, idx) in order.chunks(self.cfg.batch_size).enumerate() {
            if idx.len() < 2 && model.cfg.input_batch_norm {
                continue;
            }
            let (x, y) = data.rows(idx);
            let mut g = Graph::training(self.cfg.seed, self.step);
            let p = model.store.bind(&mut g, false);
            let xv = g.constant(x);
            let mut ctx = ForwardCtx::default();
            let z = model.logits(&mut g, &p, xv, &mut ctx)?;
            let loss = sequence_loss(&mut g, z, &y, self.cfg.loss)?;
            let lv = g.value(loss).item();
            if !lv.is_finite() {
                return Err(Error::NonFinite(format!("loss {lv} at epoch {epoch}, step {}, batch {bi}", self.step)));
            }
            g.backward(loss)?;
            let mut grads = model.store.gradients(&g, &p);
            clip_global_norm(&mut grads, self.cfg.clip_norm);
            self.opt.step(&mut model.store, &grads);
            running_update(&mut model.store, &ctx);
            total += lv * idx.len() as f64;
            count += idx.len();
            self.step += 1;
        }
        Ok(total / count.max(1) as f64)
    }
}

fn trainable_ids(store: &ParamStore) -> Vec<ParamId> {
    store.ids().filter(|&i| store.is_trainable(i)).collect()
}

/// Recompute batch-norm running statistics as the average over training batches.
fn refresh_batch_norm(model: &mut SequenceForecaster, data: &Dataset, cfg: &TrainConfig) -> Result<()> {
    if !model.cfg.input_batch_norm {
        return Ok(());
    }
    let order: Vec<usize> = (0..data.len()).collect();
    let mut sums: Vec<(ParamId, ParamId, Vec<f64>, Vec<f64>)> = Vec::new();
    let mut batches = 0usize;
    for idx in order.chunks(cfg.batch_size).filter(|c| c.len() >= 2) {
        let (x, _) = data.rows(idx);
        let mut g = Graph::training(cfg.seed, u64::MAX - batches as u64);
        let p = model.store.bind(&mut g, true);
        let xv = g.constant(x);
        let mut ctx = ForwardCtx::default();
        model.logits(&mut g, &p, xv, &mut ctx)?;
        for (k, u) in ctx.bn_updates.iter().enumerate() {
            let unbias = u.n as f64 / (u.n as f64 - 1.0);
            if sums.len() <= k {
                sums.push((u.mean_id, u.var_id, vec![0.0; u.mean.len()], vec![0.0; u.var.len()]));
            }
            sums[k].2.iter_mut().zip(&u.mean).for_each(|(a, b)| *a += b);
            sums[k].3.iter_mut().zip(&u.var).for_each(|(a, b)| *a += b * unbias);
        }
        batches += 1;
    }
    for (mid, vid, m, v) in sums {
        let n = batches.max(1) as f64;
        model.store.get_mut(mid).data_mut().iter_mut().zip(&m).for_each(|(r, s)| *r = s / n);
        model.store.get_mut(vid).data_mut().iter_mut().zip(&v).for_each(|(r, s)| *r = s / n);
    }
    Ok(())
}

/// Train with early stopping on the validation score, restore the best
/// weights, then run the weight-averaging phase and refresh batch-norm statistics.
pub fn train(model: &mut SequenceForecaster, train: &Dataset, val: &Dataset, cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Empty("no training samples".into()));
    }
    if train.x.shape()[2] != model.cfg.input_dim {
        return Err(Error::Shape(format!(
            "model expects {} features, data has {}",
            model.cfg.input_dim,
            train.x.shape()[2]
        )));
    }
    let mut st = Stepper { cfg, opt: Adam::new(cfg.lr, cfg.weight_decay), step: 0 };
    let mut history = Vec::new();
    let mut best = (f64::NEG_INFINITY, 0usize, model.store.clone());
    let mut since_best = 0;
    let mut main_epochs = 0;
    for epoch in 0..cfg.max_epochs {
        let loss = st.epoch(model, train, epoch)?;
        let s = score(model, val)?;
        history.push(EpochRecord { epoch, phase: Phase::Main, train_loss: loss, val_score: s });
        main_epochs += 1;
        if s > best.0 || (best.0 == f64::NEG_INFINITY && s.is_nan()) {
            best = (s, epoch, model.store.clone());
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    model.store = best.2;
    let best_epoch = best.1;

    let averaging_epochs = if cfg.swa_fraction > 0.0 && cfg.swa_lr > 0.0 {
        (cfg.swa_fraction * main_epochs as f64).ceil().max(1.0) as usize
    } else {
        0
    };
    if averaging_epochs > 0 {
        st.opt.lr = cfg.swa_lr;
        let ids = trainable_ids(&model.store);
        let mut avg: Vec<Vec<f64>> = ids.iter().map(|&i| model.store.get(i).data().to_vec()).collect();
        for k in 0..averaging_epochs {
            let epoch = main_epochs + k;
            let loss = st.epoch(model, train, epoch)?;
            let n = (k + 1) as f64;
            for (a, &i) in avg.iter_mut().zip(&ids) {
                a.iter_mut().zip(model.store.get(i).data()).for_each(|(m, v)| *m += (v - *m) / (n + 1.0));
            }
            let s = score(model, val)?;
            history.push(EpochRecord { epoch, phase: Phase::Averaging, train_loss: loss, val_score: s });
        }
        for (a, &i) in avg.into_iter().zip(&ids) {
            model.store.get_mut(i).data_mut().copy_from_slice(&a);
        }
        refresh_batch_norm(model, train, cfg)?;
    }
    let final_val_score = score(model, val)?;
    Ok(TrainReport { history, best_epoch, main_epochs, averaging_epochs, final_val_score })
}
