//! Forecasting models and baselines.
//!
//! Every model maps six weekly input steps to class probabilities for the
//! four regimes at six weekly lead times.

mod baselines;
mod logistic;
mod lstm;
mod profile;
mod record;
mod vit;

pub use baselines::{climatology_forecast, persistence_forecast, ClimatologyBaseline};
pub use logistic::{LogisticRegression, MIN_L2};
pub use lstm::{LstmCell, SeqConfig, SequenceForecaster, BN_EPS, BN_MOMENTUM};
pub use profile::{ModelKind, Profile, ProfileConfig};
pub use record::ForecastRecord;
pub use vit::{masked_mse, patchify, MaskedAutoencoder, PatchMask, VitConfig};

use crate::error::{Error, Result};
use crate::tensorgrad::{ParamId, Tensor};

pub const N_CLASSES: usize = 4;
pub const N_INPUT_WEEKS: usize = 6;
pub const N_LEADS: usize = 6;
/// Width of one Index-LSTM input step: regime one-hot, SPV, and the MJO
/// class as eight phase slots (all zero when the MJO is inactive).
pub const INDEX_WIDTH: usize = 4 + 1 + 8;

pub type Probs = [[f64; N_CLASSES]; N_LEADS];

/// Batch-norm statistics observed during a training forward pass.
#[derive(Debug, Clone)]
pub struct BnUpdate {
    pub mean_id: ParamId,
    pub var_id: ParamId,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub n: usize,
}

/// Side outputs of a forward pass.
#[derive(Debug, Clone, Default)]
pub struct ForwardCtx {
    pub bn_updates: Vec<BnUpdate>,
}

pub(crate) fn probs_from_tensor(t: &Tensor) -> Vec<Probs> {
    t.data()
        .chunks(N_LEADS * N_CLASSES)
        .map(|c| {
            let mut p = [[0.0; N_CLASSES]; N_LEADS];
            for (l, row) in p.iter_mut().enumerate() {
                row.copy_from_slice(&c[l * N_CLASSES..(l + 1) * N_CLASSES]);
            }
            p
        })
        .collect()
}

pub fn regime_one_hot(regime: u8) -> [f64; N_CLASSES] {
    let mut v = [0.0; N_CLASSES];
    v[regime as usize] = 1.0;
    v
}

/// One Index-LSTM input step.
pub fn index_step(regime: u8, spv: f64, mjo_phase: u8) -> [f64; INDEX_WIDTH] {
    let mut v = [0.0; INDEX_WIDTH];
    v[regime as usize] = 1.0;
    v[4] = spv;
    if mjo_phase > 0 {
        v[4 + mjo_phase as usize] = 1.0;
    }
    v
}

/// Check that a step has the regime one-hot, one scalar, and at most one
/// active MJO phase slot.
pub fn validate_index_step(v: &[f64]) -> Result<()> {
    if v.len() != INDEX_WIDTH {
        return Err(Error::Shape(format!("index step has width {}, expected {INDEX_WIDTH}", v.len())));
    }
    let one_hot = |s: &[f64]| s.iter().all(|&x| x == 0.0 || x == 1.0) && s.iter().sum::<f64>() == 1.0;
    if !one_hot(&v[..4]) {
        return Err(Error::Validation("regime slots are not one-hot".into()));
    }
    if !v[4].is_finite() {
        return Err(Error::Validation("SPV slot is not finite".into()));
    }
    let mjo = &v[5..];
    if !(mjo.iter().all(|&x| x == 0.0) || one_hot(mjo)) {
        return Err(Error::Validation("MJO slots are neither empty nor one-hot".into()));
    }
    Ok(())
}
