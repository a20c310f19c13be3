use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::models::{patchify, MaskedAutoencoder, PatchMask};
use crate::tensorgrad::{clip_global_norm, Adam, Graph};

#[derive(Debug, Clone, PartialEq)]
pub struct MaeTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

/// Self-supervised reconstruction training on images `[n, h, w]`.
/// Returns the mean masked-patch loss of every epoch.
pub fn train_mae(mae: &mut MaskedAutoencoder, images: &[f64], n: usize, cfg: &MaeTrainConfig) -> Result<Vec<f64>> {
    if n == 0 || cfg.batch_size == 0 {
        return Err(Error::Empty("no images for autoencoder training".into()));
    }
    let patches = patchify(images, n, &mae.cfg)?;
    let (np, pl) = (mae.cfg.n_patches(), mae.cfg.patch_len());
    let n_masked = mae.cfg.n_masked();
    let mut opt = Adam::new(cfg.lr, 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut losses = Vec::with_capacity(cfg.epochs);
    let mut step = 0u64;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for idx in order.chunks(cfg.batch_size) {
            let mut data = Vec::with_capacity(idx.len() * np * pl);
            idx.iter().for_each(|&i| data.extend_from_slice(&patches.data()[i * np * pl..(i + 1) * np * pl]));
            let batch = crate::tensorgrad::Tensor::new(vec![idx.len(), np, pl], data)?;
            let masks: Vec<PatchMask> = idx.iter().map(|_| PatchMask::random(np, n_masked, &mut rng)).collect();
            let mut g = Graph::training(cfg.seed, step);
            let p = mae.store.bind(&mut g, false);
            let loss = mae.loss(&mut g, &p, &batch, &masks)?;
            let lv = g.value(loss).item();
            if !lv.is_finite() {
                return Err(Error::NonFinite(format!("autoencoder loss at epoch {epoch}, step {step}")));
            }
            g.backward(loss)?;
            let mut grads = mae.store.gradients(&g, &p);
            clip_global_norm(&mut grads, 1.0);
            opt.step(&mut mae.store, &grads);
            total += lv * idx.len() as f64;
            step += 1;
        }
        losses.push(total / n as f64);
    }
    Ok(losses)
}
