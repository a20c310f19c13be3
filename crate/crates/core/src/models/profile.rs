use serde::{Deserialize, Serialize};

use super::vit::VitConfig;
use crate::error::{Error, Result};
use crate::training::{LossKind, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Regime history only.
    Lstm,
    /// Regime history plus SPV and MJO indices.
    IndexLstm,
    /// Regime history plus frozen ViT embeddings of the driver fields.
    VitLstm,
    Logistic,
    Persistence,
    Climatology,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Lstm => "lstm",
            ModelKind::IndexLstm => "index_lstm",
            ModelKind::VitLstm => "vit_lstm",
            ModelKind::Logistic => "logistic",
            ModelKind::Persistence => "persistence",
            ModelKind::Climatology => "climatology",
        }
    }
}

/// Size presets: `paper` reproduces the published configuration, `desk`
/// shrinks it to run on a laptop CPU.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    #[default]
    Desk,
    Paper,
}

impl std::str::FromStr for Profile {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Profile::Desk),
            "paper" => Ok(Profile::Paper),
            other => Err(Error::Argument(format!("unknown profile {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileConfig {
    pub lstm_hidden: usize,
    pub dropout: f64,
    pub members: usize,
    pub train: TrainConfig,
    pub mae_epochs: usize,
    pub mae_batch: usize,
    pub mae_lr: f64,
    vit_template: VitConfig,
}

impl ProfileConfig {
    pub fn new(profile: Profile) -> Self {
        match profile {
            Profile::Paper => Self {
                lstm_hidden: 256,
                dropout: 0.165,
                members: 100,
                train: TrainConfig {
                    lr: 1e-4,
                    batch_size: 72,
                    weight_decay: 9e-4,
                    clip_norm: 0.827,
                    max_epochs: 200,
                    patience: 10,
                    swa_fraction: 0.25,
                    swa_lr: 2.5e-5,
                    loss: LossKind::AdaptiveFocal,
                    seed: 0,
                },
                mae_epochs: 100,
                mae_batch: 64,
                mae_lr: 1e-4,
                vit_template: VitConfig {
                    image: (22, 256),
                    patch: (2, 16),
                    dim: 512,
                    depth: 6,
                    heads: 16,
                    dim_head: 64,
                    mlp_dim: 2048,
                    dropout: 0.1,
                    emb_dropout: 0.1,
                    decoder_dim: 32,
                    decoder_depth: 6,
                    decoder_heads: 8,
                    decoder_dim_head: 64,
                    mask_ratio: 0.75,
                },
            },
            Profile::Desk => Self {
                lstm_hidden: 32,
                dropout: 0.0,
                members: 4,
                train: TrainConfig {
                    lr: 1e-2,
                    batch_size: 32,
                    weight_decay: 9e-4,
                    clip_norm: 0.827,
                    max_epochs: 150,
                    patience: 30,
                    swa_fraction: 0.25,
                    swa_lr: 2.5e-3,
                    loss: LossKind::AdaptiveFocal,
                    seed: 0,
                },
                mae_epochs: 30,
                mae_batch: 32,
                mae_lr: 1e-3,
                vit_template: VitConfig {
                    image: (8, 32),
                    patch: (2, 8),
                    dim: 64,
                    depth: 2,
                    heads: 4,
                    dim_head: 16,
                    mlp_dim: 128,
                    dropout: 0.0,
                    emb_dropout: 0.0,
                    decoder_dim: 16,
                    decoder_depth: 1,
                    decoder_heads: 2,
                    decoder_dim_head: 8,
                    mask_ratio: 0.75,
                },
            },
        }
    }

    /// ViT settings for images of the given size.
    pub fn vit(&self, image: (usize, usize)) -> Result<VitConfig> {
        let cfg = VitConfig { image, ..self.vit_template.clone() };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn embedding_dim(&self) -> usize {
        self.vit_template.decoder_dim
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_vit_geometry() {
        let p = ProfileConfig::new(Profile::Paper);
        let v = p.vit((22, 256)).unwrap();
        assert_eq!(v.n_patches(), 176);
        assert_eq!(v.n_masked(), 132);
        assert_eq!(p.embedding_dim(), 32);
        assert!(p.vit((22, 250)).is_err());
    }
}
