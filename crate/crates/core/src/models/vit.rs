use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensorgrad::nn::{trunc_normal, Linear, Transformer};
use crate::tensorgrad::{Bound, Graph, ParamId, ParamStore, Tensor, Var};

/// Vision-transformer encoder and masked-autoencoder decoder sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VitConfig {
    pub image: (usize, usize),
    pub patch: (usize, usize),
    pub dim: usize,
    pub depth: usize,
    pub heads: usize,
    pub dim_head: usize,
    pub mlp_dim: usize,
    pub dropout: f64,
    pub emb_dropout: f64,
    /// Decoder width; also the size of the pooled embedding.
    pub decoder_dim: usize,
    pub decoder_depth: usize,
    pub decoder_heads: usize,
    pub decoder_dim_head: usize,
    pub mask_ratio: f64,
}

impl VitConfig {
    pub fn validate(&self) -> Result<()> {
        let (h, w) = self.image;
        let (ph, pw) = self.patch;
        if ph == 0 || pw == 0 || h % ph != 0 || w % pw != 0 {
            return Err(Error::Config(format!("image {h}x{w} is not divisible into {ph}x{pw} patches")));
        }
        if !(self.mask_ratio > 0.0 && self.mask_ratio < 1.0) {
            return Err(Error::Config(format!("mask ratio {} outside (0, 1)", self.mask_ratio)));
        }
        if self.n_masked() == 0 || self.n_masked() >= self.n_patches() {
            return Err(Error::Config("mask ratio leaves no masked or no visible patches".into()));
        }
        if [self.dim, self.depth, self.heads, self.dim_head, self.mlp_dim, self.decoder_dim, self.decoder_heads, self.decoder_dim_head]
            .contains(&0)
        {
            return Err(Error::Config("transformer sizes must be positive".into()));
        }
        Ok(())
    }

    pub fn n_patches(&self) -> usize {
        (self.image.0 / self.patch.0) * (self.image.1 / self.patch.1)
    }

    pub fn patch_len(&self) -> usize {
        self.patch.0 * self.patch.1
    }

    /// round(mask_ratio * patches).
    pub fn n_masked(&self) -> usize {
        (self.mask_ratio * self.n_patches() as f64).round() as usize
    }
}

/// Split images `[n, h, w]` (row-major) into patch vectors `[n, patches, ph*pw]`,
/// patches ordered row-major over the patch grid.
pub fn patchify(images: &[f64], n: usize, cfg: &VitConfig) -> Result<Tensor> {
    let (h, w) = cfg.image;
    let (ph, pw) = cfg.patch;
    if images.len() != n * h * w {
        return Err(Error::Shape(format!("{} pixels for {n} images of {h}x{w}", images.len())));
    }
    let (gh, gw) = (h / ph, w / pw);
    let mut out = Vec::with_capacity(images.len());
    for b in 0..n {
        let img = &images[b * h * w..(b + 1) * h * w];
        for pi in 0..gh {
            for pj in 0..gw {
                for r in 0..ph {
                    let row = (pi * ph + r) * w + pj * pw;
                    out.extend_from_slice(&img[row..row + pw]);
                }
            }
        }
    }
    Tensor::new(vec![n, gh * gw, ph * pw], out)
}

/// Visible and masked patch indices of one image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchMask {
    pub visible: Vec<usize>,
    pub masked: Vec<usize>,
}

impl PatchMask {
    /// Uniformly random mask with `n_masked` of `n` patches hidden.
    pub fn random(n: usize, n_masked: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(rng);
        let mut masked = perm[..n_masked].to_vec();
        let mut visible = perm[n_masked..].to_vec();
        masked.sort_unstable();
        visible.sort_unstable();
        Self { visible, masked }
    }
}

/// Mean squared error between `pred` and `patches` over the masked patches
/// of each image; visible patches do not contribute.
pub fn masked_mse(g: &mut Graph, pred: Var, patches: &Tensor, masks: &[PatchMask]) -> Result<Var> {
    if g.shape(pred) != patches.shape() || masks.len() != patches.shape()[0] {
        return Err(Error::Shape("predictions, patches and masks disagree".into()));
    }
    let midx: Vec<Vec<usize>> = masks.iter().map(|m| m.masked.clone()).collect();
    let pm = g.gather(pred, &midx)?;
    let x = g.constant(patches.clone());
    let target = g.gather(x, &midx)?;
    let diff = g.sub(pm, target)?;
    let sq = g.mul(diff, diff)?;
    Ok(g.mean(sq))
}

/// Masked autoencoder around a ViT encoder.
#[derive(Debug, Clone)]
pub struct MaskedAutoencoder {
    pub cfg: VitConfig,
    pub store: ParamStore,
    patch_embed: Linear,
    pos: ParamId,
    encoder: Transformer,
    enc_to_dec: Linear,
    mask_token: ParamId,
    dec_pos: ParamId,
    decoder: Transformer,
    to_pixels: Linear,
}

impl MaskedAutoencoder {
    pub fn new(cfg: VitConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        cfg.validate()?;
        let mut s = ParamStore::new();
        let n = cfg.n_patches();
        let patch_embed = Linear::new(&mut s, "encoder.patch_embed", cfg.patch_len(), cfg.dim, true, rng);
        let pos = s.add("encoder.pos", trunc_normal(rng, &[n, cfg.dim], 0.02), true);
        let encoder = Transformer::new(&mut s, "encoder", cfg.dim, cfg.depth, cfg.heads, cfg.dim_head, cfg.mlp_dim, rng);
        let enc_to_dec = Linear::new(&mut s, "encoder.to_decoder", cfg.dim, cfg.decoder_dim, true, rng);
        let mask_token = s.add("decoder.mask_token", trunc_normal(rng, &[cfg.decoder_dim], 0.02), true);
        let dec_pos = s.add("decoder.pos", trunc_normal(rng, &[n, cfg.decoder_dim], 0.02), true);
        let decoder = Transformer::new(
            &mut s,
            "decoder",
            cfg.decoder_dim,
            cfg.decoder_depth,
            cfg.decoder_heads,
            cfg.decoder_dim_head,
            4 * cfg.decoder_dim,
            rng,
        );
        let to_pixels = Linear::new(&mut s, "decoder.to_pixels", cfg.decoder_dim, cfg.patch_len(), true, rng);
        Ok(Self { cfg, store: s, patch_embed, pos, encoder, enc_to_dec, mask_token, dec_pos, decoder, to_pixels })
    }

    fn check_patches(&self, t: &Tensor) -> Result<()> {
        let want = [self.cfg.n_patches(), self.cfg.patch_len()];
        if t.ndim() != 3 || t.shape()[1..] != want {
            return Err(Error::Shape(format!("expected [batch, {}, {}] patches, got {:?}", want[0], want[1], t.shape())));
        }
        Ok(())
    }

    fn tokens(&self, g: &mut Graph, p: &Bound, patches: Var) -> Result<Var> {
        let x = self.patch_embed.forward(g, p, patches)?;
        let shape = g.shape(x).to_vec();
        let pos = g.expand(p.var(self.pos), &shape)?;
        let x = g.add(x, pos)?;
        g.dropout(x, self.cfg.emb_dropout)
    }

    /// Encoder output for the visible patches only, `[batch, visible, dim]`.
    pub fn encode_visible(&self, g: &mut Graph, p: &Bound, patches: Var, masks: &[PatchMask]) -> Result<Var> {
        let tok = self.tokens(g, p, patches)?;
        let vis: Vec<Vec<usize>> = masks.iter().map(|m| m.visible.clone()).collect();
        let x = g.gather(tok, &vis)?;
        self.encoder.forward(g, p, x, self.cfg.dropout)
    }

    /// Reconstructed pixels for every patch, `[batch, patches, patch_len]`.
    pub fn reconstruct(&self, g: &mut Graph, p: &Bound, patches: &Tensor, masks: &[PatchMask]) -> Result<Var> {
        self.check_patches(patches)?;
        let b = patches.shape()[0];
        if masks.len() != b {
            return Err(Error::Shape("one mask per image required".into()));
        }
        let n = self.cfg.n_patches();
        let x = g.constant(patches.clone());
        let enc = self.encode_visible(g, p, x, masks)?;
        let d = self.enc_to_dec.forward(g, p, enc)?;
        let nm = masks[0].masked.len();
        let mt = g.expand(p.var(self.mask_token), &[b, nm, self.cfg.decoder_dim])?;
        let full = g.concat(&[d, mt], 1)?;
        let order: Vec<Vec<usize>> = masks
            .iter()
            .map(|m| {
                let mut o = vec![0; n];
                m.visible.iter().enumerate().for_each(|(j, &v)| o[v] = j);
                m.masked.iter().enumerate().for_each(|(j, &v)| o[v] = m.visible.len() + j);
                o
            })
            .collect();
        let full = g.gather(full, &order)?;
        let dp = g.expand(p.var(self.dec_pos), &[b, n, self.cfg.decoder_dim])?;
        let full = g.add(full, dp)?;
        let dec = self.decoder.forward(g, p, full, self.cfg.dropout)?;
        self.to_pixels.forward(g, p, dec)
    }

    /// Mean squared reconstruction error over masked patches.
    pub fn loss(&self, g: &mut Graph, p: &Bound, patches: &Tensor, masks: &[PatchMask]) -> Result<Var> {
        let pred = self.reconstruct(g, p, patches, masks)?;
        masked_mse(g, pred, patches, masks)
    }

    /// Pooled embedding `[batch, decoder_dim]`: the encoder runs on all
    /// patches, its output is projected to decoder width and averaged over patches.
    pub fn embed(&self, g: &mut Graph, p: &Bound, patches: Var) -> Result<Var> {
        let tok = self.tokens(g, p, patches)?;
        let enc = self.encoder.forward(g, p, tok, self.cfg.dropout)?;
        let d = self.enc_to_dec.forward(g, p, enc)?;
        g.mean_axis(d, 1)
    }

    /// Embeddings of raw images `[n, h, w]`, evaluated without gradients.
    pub fn embed_images(&self, images: &[f64], n: usize) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(n);
        let per = self.cfg.image.0 * self.cfg.image.1;
        for chunk in (0..n).collect::<Vec<_>>().chunks(64) {
            let (a, z) = (chunk[0], chunk[chunk.len() - 1] + 1);
            let patches = patchify(&images[a * per..z * per], z - a, &self.cfg)?;
            let mut g = Graph::new();
            let p = self.store.bind(&mut g, true);
            let x = g.constant(patches);
            let e = self.embed(&mut g, &p, x)?;
            let d = self.cfg.decoder_dim;
            out.extend(g.value(e).data().chunks(d).map(<[f64]>::to_vec));
        }
        Ok(out)
    }
}
