//! End-to-end experiment helpers: driver preprocessing, sample construction,
//! autoencoder pretraining and per-member model runs.

use std::collections::{BTreeSet, HashMap};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::calendar;
use crate::drivers::{mjo_phase, spv_index, MjoSeries, MJO_ACTIVE_THRESHOLD};
use crate::error::{Error, Result};
use crate::eval::SkillReport;
use crate::gridstore::{DatedSeries, GriddedField};
use crate::models::{
    climatology_forecast, persistence_forecast, ClimatologyBaseline, ForecastRecord, LogisticRegression,
    MaskedAutoencoder, ModelKind, Probs, ProfileConfig, SeqConfig, SequenceForecaster, N_CLASSES, N_INPUT_WEEKS,
};
use crate::preprocess::{anomalies, mean_std, rolling_mean, standardize_series, ClimatologyPolicy, Standardizer, StandardizeMode};
use crate::regimes::RegimeSeries;
use crate::tensorgrad::{ParamStore, Tensor};
use crate::training::{
    build_windows, by_split, embedding_inputs, index_inputs, predict, regime_inputs, run_ensemble, targets, train,
    train_mae, Dataset, FeatureScaler, MaeTrainConfig, MemberOutcome, Split, TrainReport, WindowConfig, WindowSample,
};

/// Raw driver data: daily u10 and OLR fields and daily RMM components.
#[derive(Debug, Clone)]
pub struct DriverInputs {
    pub u10: GriddedField,
    pub olr: GriddedField,
    pub rmm1: DatedSeries,
    pub rmm2: DatedSeries,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PrepareConfig {
    pub rolling_days: usize,
    pub climatology: ClimatologyPolicy,
    pub window: WindowConfig,
    pub mjo_threshold: f64,
}

impl Default for PrepareConfig {
    fn default() -> Self {
        Self {
            rolling_days: 7,
            climatology: ClimatologyPolicy::default(),
            window: WindowConfig::default(),
            mjo_threshold: MJO_ACTIVE_THRESHOLD,
        }
    }
}

/// Samples plus the model-ready driver data they refer to.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub regimes: RegimeSeries,
    pub samples: Vec<WindowSample>,
    /// SPV index standardized with training-split statistics.
    pub spv: DatedSeries,
    /// Unstandardized SPV values on training input days.
    pub spv_train_values: Vec<f64>,
    pub spv_raw: DatedSeries,
    pub mjo: MjoSeries,
    /// Standardized anomaly fields.
    pub u10: GriddedField,
    pub olr: GriddedField,
}

fn training_days(samples: &[WindowSample]) -> BTreeSet<i64> {
    samples.iter().filter(|s| s.split == Split::Train).flat_map(|s| s.input_days).collect()
}

fn standardized_anomalies(field: &GriddedField, cfg: &PrepareConfig, train_winters: &BTreeSet<i32>) -> Result<GriddedField> {
    let anoms = anomalies(&rolling_mean(field, cfg.rolling_days)?, &cfg.climatology)?;
    let reference = anoms.select_times(|d| calendar::winter_of(d).is_some_and(|w| train_winters.contains(&w)))?;
    Standardizer::fit(&reference, StandardizeMode::Pooled)?.apply(&anoms)
}

/// Smooth and standardize the drivers and cut regime windows where every
/// driver is available.
pub fn prepare(regimes: &RegimeSeries, inputs: &DriverInputs, cfg: &PrepareConfig) -> Result<Prepared> {
    let spv_raw = spv_index(&rolling_mean(&inputs.u10, cfg.rolling_days)?)?;
    let mjo = MjoSeries::new(mjo_phase(&inputs.rmm1, &inputs.rmm2, cfg.rolling_days, cfg.mjo_threshold)?)?;
    let u10_days: BTreeSet<i64> = inputs.u10.times().iter().copied().collect();
    let olr_days: BTreeSet<i64> = inputs.olr.times().iter().copied().collect();
    let lag = cfg.rolling_days as i64 - 1;
    let samples = build_windows(regimes, &cfg.window, |d| {
        spv_raw.get(d).is_some()
            && mjo.get(d).is_some()
            && olr_days.contains(&d)
            && olr_days.contains(&(d - lag))
            && u10_days.contains(&(d - lag))
    })?;
    let train_days = training_days(&samples);
    if train_days.is_empty() {
        return Err(Error::Coverage("no training windows".into()));
    }
    let spv_train_values: Vec<f64> = train_days.iter().filter_map(|&d| spv_raw.get(d)).collect();
    let (m, s) = mean_std(&spv_train_values);
    if !(s > 0.0) {
        return Err(Error::Degenerate("SPV index is constant over the training split".into()));
    }
    let spv = standardize_series(&spv_raw, m, s)?;
    let train_winters: BTreeSet<i32> =
        samples.iter().filter(|s| s.split == Split::Train).map(|s| s.winter).collect();
    let u10 = standardized_anomalies(&inputs.u10, cfg, &train_winters)?;
    let olr = standardized_anomalies(&inputs.olr, cfg, &train_winters)?;
    Ok(Prepared { regimes: regimes.clone(), samples, spv, spv_train_values, spv_raw, mjo, u10, olr })
}

/// Frozen autoencoder embeddings of both driver fields, keyed by day.
#[derive(Debug, Clone)]
pub struct Embeddings {
    pub u10: HashMap<i64, Vec<f64>>,
    pub olr: HashMap<i64, Vec<f64>>,
    pub u10_losses: Vec<f64>,
    pub olr_losses: Vec<f64>,
    pub u10_encoder: ParamStore,
    pub olr_encoder: ParamStore,
}

fn images(field: &GriddedField, days: &[i64]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(days.len() * field.grid_len());
    for &d in days {
        let t = field
            .time_index(d)
            .ok_or_else(|| Error::Coverage(format!("{} has no map for {}", field.name(), calendar::format_iso(d))))?;
        out.extend(field.map(t).iter().map(|&v| v as f64));
    }
    Ok(out)
}

fn pretrain_one(
    field: &GriddedField,
    train_days: &[i64],
    all_days: &[i64],
    prof: &ProfileConfig,
    seed: u64,
) -> Result<(HashMap<i64, Vec<f64>>, Vec<f64>, ParamStore)> {
    let cfg = prof.vit((field.lats().len(), field.lons().len()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mae = MaskedAutoencoder::new(cfg, &mut rng)?;
    let tcfg = MaeTrainConfig { epochs: prof.mae_epochs, batch_size: prof.mae_batch, lr: prof.mae_lr, seed };
    let losses = train_mae(&mut mae, &images(field, train_days)?, train_days.len(), &tcfg)?;
    let emb = mae.embed_images(&images(field, all_days)?, all_days.len())?;
    Ok((all_days.iter().copied().zip(emb).collect(), losses, mae.store))
}

/// Pretrain one masked autoencoder per driver field on training input weeks
/// and embed every input week.
pub fn pretrain_embeddings(p: &Prepared, prof: &ProfileConfig, seed: u64) -> Result<Embeddings> {
    let train_days: Vec<i64> = training_days(&p.samples).into_iter().collect();
    let all_days: Vec<i64> =
        p.samples.iter().flat_map(|s| s.input_days).collect::<BTreeSet<i64>>().into_iter().collect();
    let (u10, u10_losses, u10_encoder) = pretrain_one(&p.u10, &train_days, &all_days, prof, seed)?;
    let (olr, olr_losses, olr_encoder) = pretrain_one(&p.olr, &train_days, &all_days, prof, seed.wrapping_add(1))?;
    Ok(Embeddings { u10, olr, u10_losses, olr_losses, u10_encoder, olr_encoder })
}

/// Result of training and testing one ensemble member.
#[derive(Debug, Clone)]
pub struct MemberRun {
    pub kind: ModelKind,
    pub member: usize,
    pub seed: u64,
    pub records: Vec<ForecastRecord>,
    pub report: SkillReport,
    pub train_report: Option<TrainReport>,
    pub params: Option<ParamStore>,
}

impl MemberRun {
    pub fn checksum(&self) -> Option<String> {
        self.params.as_ref().map(ParamStore::checksum)
    }
}

fn sequence_inputs(kind: ModelKind, p: &Prepared, emb: Option<&Embeddings>, rows: &[&WindowSample]) -> Result<Tensor> {
    match kind {
        ModelKind::Lstm => Ok(regime_inputs(rows)),
        ModelKind::IndexLstm => index_inputs(rows, &p.spv, &p.mjo),
        ModelKind::VitLstm => {
            let e = emb.ok_or_else(|| Error::Config("ViT-LSTM needs pretrained embeddings".into()))?;
            embedding_inputs(rows, &[&e.u10, &e.olr])
        }
        _ => Err(Error::Argument(format!("{} is not a sequence model", kind.name()))),
    }
}

fn records(rows: &[&WindowSample], probs: Vec<Probs>, seed: u64) -> Result<Vec<ForecastRecord>> {
    rows.iter()
        .zip(probs)
        .map(|(s, pr)| ForecastRecord::new(s.anchor, seed, pr, s.targets, s.inputs))
        .collect()
}

/// Train (if needed) and evaluate one member of `kind` on the test split.
pub fn run_member(
    kind: ModelKind,
    p: &Prepared,
    emb: Option<&Embeddings>,
    prof: &ProfileConfig,
    member: usize,
    seed: u64,
) -> Result<MemberRun> {
    let train_rows = by_split(&p.samples, Split::Train);
    let val_rows = by_split(&p.samples, Split::Validation);
    let test_rows = by_split(&p.samples, Split::Test);
    if train_rows.is_empty() || test_rows.is_empty() {
        return Err(Error::Coverage("training and test splits must both be non-empty".into()));
    }
    let (probs, train_report, params) = match kind {
        ModelKind::Lstm | ModelKind::IndexLstm | ModelKind::VitLstm => {
            let mut xtr = sequence_inputs(kind, p, emb, &train_rows)?;
            let mut xva = sequence_inputs(kind, p, emb, &val_rows)?;
            let mut xte = sequence_inputs(kind, p, emb, &test_rows)?;
            if kind == ModelKind::VitLstm {
                let sc = FeatureScaler::fit(&xtr)?;
                xtr = sc.apply(&xtr)?;
                xva = sc.apply(&xva)?;
                xte = sc.apply(&xte)?;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cfg = SeqConfig {
                input_dim: xtr.shape()[2],
                hidden: prof.lstm_hidden,
                dropout: prof.dropout,
                input_batch_norm: kind != ModelKind::Lstm,
            };
            let mut model = SequenceForecaster::new(cfg, &mut rng)?;
            let train_set = Dataset::new(xtr, targets(&train_rows))?;
            let val_set = Dataset::new(xva, targets(&val_rows))?;
            let tcfg = crate::training::TrainConfig { seed, ..prof.train.clone() };
            let rep = train(&mut model, &train_set, &val_set, &tcfg)?;
            (predict(&model, &xte)?, Some(rep), Some(model.store))
        }
        ModelKind::Logistic => {
            let flat = |rows: &[&WindowSample]| {
                let x = regime_inputs(rows);
                x.reshaped(&[rows.len(), N_INPUT_WEEKS * N_CLASSES])
            };
            let mut lr = LogisticRegression::new(N_INPUT_WEEKS * N_CLASSES, 1e-3)?;
            lr.fit(&flat(&train_rows)?, &targets(&train_rows), 400, 0.05)?;
            (lr.predict(&flat(&test_rows)?)?, None, Some(lr.store))
        }
        ModelKind::Persistence => (test_rows.iter().map(|s| persistence_forecast(&s.inputs)).collect(), None, None),
        ModelKind::Climatology => {
            let train_winters: BTreeSet<i32> = train_rows.iter().map(|s| s.winter).collect();
            let keep: Vec<usize> = (0..p.regimes.len())
                .filter(|&i| calendar::winter_of(p.regimes.times()[i]).is_some_and(|w| train_winters.contains(&w)))
                .collect();
            let series = RegimeSeries::new(
                keep.iter().map(|&i| p.regimes.times()[i]).collect(),
                keep.iter().map(|&i| p.regimes.labels()[i]).collect(),
            )?;
            let clim = ClimatologyBaseline::fit(&series)?;
            let probs = test_rows.iter().map(|s| climatology_forecast(&clim, s.anchor)).collect::<Result<Vec<_>>>()?;
            (probs, None, None)
        }
    };
    let recs = records(&test_rows, probs, seed)?;
    let report = SkillReport::from_predictions(
        kind.name(),
        &recs.iter().map(|r| r.probs).collect::<Vec<_>>(),
        &recs.iter().map(|r| r.targets).collect::<Vec<_>>(),
    )?;
    Ok(MemberRun { kind, member, seed, records: recs, report, train_report, params })
}

/// Train `members` independent members of `kind` with seeds `seed_base + m`.
pub fn run_model_ensemble(
    kind: ModelKind,
    p: &Prepared,
    emb: Option<&Embeddings>,
    prof: &ProfileConfig,
    members: usize,
    seed_base: u64,
    jobs: usize,
) -> Result<Vec<MemberOutcome<MemberRun>>> {
    run_ensemble(members, seed_base, jobs, |m, seed| run_member(kind, p, emb, prof, m, seed))
}

/// Ensemble skill of one model: mean and spread of balanced accuracy per lead week.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub model: String,
    pub members_ok: usize,
    pub members_failed: usize,
    pub balanced_accuracy_mean: Vec<f64>,
    pub balanced_accuracy_std: Vec<f64>,
    pub members: Vec<SkillReport>,
}

pub fn summarize_model(kind: ModelKind, outcomes: &[MemberOutcome<MemberRun>]) -> Result<ModelSummary> {
    let ok: Vec<&MemberRun> = outcomes.iter().filter_map(|o| o.result.as_ref().ok()).collect();
    let failed = outcomes.len() - ok.len();
    let s = crate::training::summarize(&ok.iter().map(|r| r.report.balanced_accuracy()).collect::<Vec<_>>(), failed)?;
    Ok(ModelSummary {
        model: kind.name().to_string(),
        members_ok: s.members_ok,
        members_failed: failed,
        balanced_accuracy_mean: s.mean,
        balanced_accuracy_std: s.std,
        members: ok.iter().map(|r| r.report.clone()).collect(),
    })
}
