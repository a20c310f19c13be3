use std::path::Path;

use serde::{Deserialize, Serialize};

use super::opportunity::{percentile, OpportunitySet, MAX_LAG};
use crate::drivers::MjoSeries;
use crate::error::{Error, Result};
use crate::gridstore::{csv_io, DatedSeries};
use crate::models::{ForecastRecord, N_CLASSES, N_LEADS};

pub const STRONG_VORTEX_PERCENTILE: f64 = 80.0;
pub const WEAK_VORTEX_PERCENTILE: f64 = 30.0;

/// Which forecasts a composite is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompositeGroup {
    /// Selected high-confidence correct forecasts, keyed by predicted regime.
    Opportunities,
    /// All forecasts, keyed by predicted regime.
    Predictions,
    /// All forecasts, keyed by target regime.
    Targets,
}

impl CompositeGroup {
    pub const ALL: [Self; 3] = [Self::Opportunities, Self::Predictions, Self::Targets];

    pub fn name(self) -> &'static str {
        match self {
            Self::Opportunities => "opportunities",
            Self::Predictions => "predictions",
            Self::Targets => "targets",
        }
    }
}

/// Record indices per `[regime][lead]` for a group.
fn members(records: &[ForecastRecord], opps: &OpportunitySet, group: CompositeGroup) -> Vec<Vec<Vec<usize>>> {
    let mut out = vec![vec![Vec::new(); N_LEADS]; N_CLASSES];
    match group {
        CompositeGroup::Opportunities => {
            for &(n, w) in &opps.selected {
                out[records[n].predicted(w) as usize][w].push(n);
            }
            out.iter_mut().flatten().for_each(|v| v.sort_unstable());
        }
        CompositeGroup::Predictions | CompositeGroup::Targets => {
            for (n, r) in records.iter().enumerate() {
                for w in 0..N_LEADS {
                    let k = if group == CompositeGroup::Targets { r.targets[w] } else { r.predicted(w) };
                    out[k as usize][w].push(n);
                }
            }
        }
    }
    out
}

/// Day lying `lag` weeks before lead week `lead` (0-based) of a record.
fn lag_day(r: &ForecastRecord, lead: usize, lag: usize) -> i64 {
    r.anchor + 7 * (lead as i64 + 1 - lag as i64)
}

/// Order-independent mean and population standard deviation.
fn mean_std(values: &mut [f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    let mut dev: Vec<f64> = values.iter().map(|v| (v - m).powi(2)).collect();
    dev.sort_by(f64::total_cmp);
    Some((m, (dev.iter().sum::<f64>() / n).sqrt()))
}

fn check_opps(records: &[ForecastRecord], opps: &OpportunitySet) -> Result<()> {
    if opps.selected.iter().any(|&(n, w)| n >= records.len() || w >= N_LEADS) {
        return Err(Error::Argument("opportunity set does not index these records".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpvCell {
    pub group: CompositeGroup,
    pub regime: u8,
    pub lead_week: usize,
    pub lag: usize,
    /// Forecasts with an SPV value at this lag.
    pub n: usize,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    /// Share of contributing states above the strong-vortex threshold.
    pub strong_fraction: Option<f64>,
    pub weak_fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpvComposites {
    pub series_mean: f64,
    pub strong_threshold: f64,
    pub weak_threshold: f64,
    pub cells: Vec<SpvCell>,
}

impl SpvComposites {
    pub fn get(&self, group: CompositeGroup, regime: u8, lead_week: usize, lag: usize) -> Option<&SpvCell> {
        self.cells
            .iter()
            .find(|c| c.group == group && c.regime == regime && c.lead_week == lead_week && c.lag == lag)
    }
}

/// Lag composites of SPV anomalies (relative to the mean of `spv`) for lags
/// 1..=11 weeks before each lead week. Strong and weak vortex thresholds come
/// from `training_spv`.
pub fn spv_composites(
    records: &[ForecastRecord],
    opps: &OpportunitySet,
    spv: &DatedSeries,
    training_spv: &[f64],
) -> Result<SpvComposites> {
    check_opps(records, opps)?;
    if spv.is_empty() {
        return Err(Error::Empty("empty SPV series".into()));
    }
    let series_mean = {
        let mut v = spv.values().to_vec();
        mean_std(&mut v).expect("non-empty").0
    };
    let strong = percentile(training_spv, STRONG_VORTEX_PERCENTILE)?;
    let weak = percentile(training_spv, WEAK_VORTEX_PERCENTILE)?;
    let mut cells = Vec::new();
    for group in CompositeGroup::ALL {
        let groups = members(records, opps, group);
        for (k, by_lead) in groups.iter().enumerate() {
            for (i, idx) in by_lead.iter().enumerate() {
                for lag in 1..=MAX_LAG {
                    let raw: Vec<f64> = idx.iter().filter_map(|&n| spv.get(lag_day(&records[n], i, lag))).collect();
                    let frac = |f: &dyn Fn(f64) -> bool| {
                        (!raw.is_empty()).then(|| raw.iter().filter(|&&v| f(v)).count() as f64 / raw.len() as f64)
                    };
                    let strong_fraction = frac(&|v| v > strong);
                    let weak_fraction = frac(&|v| v < weak);
                    let mut anom: Vec<f64> = raw.iter().map(|v| v - series_mean).collect();
                    let ms = mean_std(&mut anom);
                    cells.push(SpvCell {
                        group,
                        regime: k as u8,
                        lead_week: i + 1,
                        lag,
                        n: raw.len(),
                        mean: ms.map(|m| m.0),
                        std: ms.map(|m| m.1),
                        strong_fraction,
                        weak_fraction,
                    });
                }
            }
        }
    }
    Ok(SpvComposites { series_mean, strong_threshold: strong, weak_threshold: weak, cells })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MjoCell {
    pub group: CompositeGroup,
    pub regime: u8,
    pub lead_week: usize,
    pub lag: usize,
    pub n: usize,
    pub rmm1: Option<f64>,
    pub rmm2: Option<f64>,
    /// Mean vector lies outside the unit circle.
    pub active: bool,
}

/// Mean RMM1/RMM2 per regime, lead week and lag; each mean is taken over the
/// forecasts of that regime.
pub fn mjo_composites(records: &[ForecastRecord], opps: &OpportunitySet, mjo: &MjoSeries) -> Result<Vec<MjoCell>> {
    check_opps(records, opps)?;
    let mut cells = Vec::new();
    for group in CompositeGroup::ALL {
        let groups = members(records, opps, group);
        for (k, by_lead) in groups.iter().enumerate() {
            for (i, idx) in by_lead.iter().enumerate() {
                for lag in 1..=MAX_LAG {
                    let (mut a, mut b): (Vec<f64>, Vec<f64>) = idx
                        .iter()
                        .filter_map(|&n| mjo.get(lag_day(&records[n], i, lag)))
                        .map(|m| (m.rmm1, m.rmm2))
                        .unzip();
                    let n = a.len();
                    let m1 = mean_std(&mut a).map(|m| m.0);
                    let m2 = mean_std(&mut b).map(|m| m.0);
                    let active = matches!((m1, m2), (Some(x), Some(y)) if x.hypot(y) >= crate::drivers::MJO_ACTIVE_THRESHOLD);
                    cells.push(MjoCell { group, regime: k as u8, lead_week: i + 1, lag, n, rmm1: m1, rmm2: m2, active });
                }
            }
        }
    }
    Ok(cells)
}

/// Counts per lead week indexed `[correct = 0 / incorrect = 1][active = 0 / inactive = 1]`,
/// where activity is the MJO state of the most recent input week.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivePhaseTable {
    pub counts: [[[usize; 2]; 2]; N_LEADS],
}

pub fn active_phase_confusion(records: &[ForecastRecord], mjo: &MjoSeries) -> Result<ActivePhaseTable> {
    let mut counts = [[[0; 2]; 2]; N_LEADS];
    for r in records {
        let m = mjo
            .get(r.anchor)
            .ok_or_else(|| Error::Coverage(format!("no MJO record for {}", crate::calendar::format_iso(r.anchor))))?;
        let a = usize::from(m.phase == 0);
        for (w, c) in counts.iter_mut().enumerate() {
            c[usize::from(!r.correct(w))][a] += 1;
        }
    }
    Ok(ActivePhaseTable { counts })
}

/// Mean and standard deviation of active-phase tables across ensemble members.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivePhaseSummary {
    pub mean: [[[f64; 2]; 2]; N_LEADS],
    pub std: [[[f64; 2]; 2]; N_LEADS],
    pub members: usize,
}

pub fn aggregate_active_phase(tables: &[ActivePhaseTable]) -> Result<ActivePhaseSummary> {
    if tables.is_empty() {
        return Err(Error::Empty("no member tables".into()));
    }
    let mut mean = [[[0.0; 2]; 2]; N_LEADS];
    let mut std = [[[0.0; 2]; 2]; N_LEADS];
    for w in 0..N_LEADS {
        for a in 0..2 {
            for b in 0..2 {
                let mut v: Vec<f64> = tables.iter().map(|t| t.counts[w][a][b] as f64).collect();
                let (m, s) = mean_std(&mut v).expect("non-empty");
                mean[w][a][b] = m;
                std[w][a][b] = s;
            }
        }
    }
    Ok(ActivePhaseSummary { mean, std, members: tables.len() })
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:?}"))
}

/// CSV with columns group, regime, week, lag, mean, std, n.
pub fn write_spv_composites_csv(path: impl AsRef<Path>, comp: &SpvComposites) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    w.write_record(["group", "regime", "week", "lag", "mean", "std", "n"]).map_err(|e| csv_io(path, e))?;
    for c in &comp.cells {
        w.write_record([
            c.group.name().to_string(),
            c.regime.to_string(),
            c.lead_week.to_string(),
            c.lag.to_string(),
            opt(c.mean),
            opt(c.std),
            c.n.to_string(),
        ])
        .map_err(|e| csv_io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// CSV with columns group, regime, week, lag, rmm1, rmm2, n.
pub fn write_mjo_composites_csv(path: impl AsRef<Path>, cells: &[MjoCell]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    w.write_record(["group", "regime", "week", "lag", "rmm1", "rmm2", "n"]).map_err(|e| csv_io(path, e))?;
    for c in cells {
        w.write_record([
            c.group.name().to_string(),
            c.regime.to_string(),
            c.lead_week.to_string(),
            c.lag.to_string(),
            opt(c.rmm1),
            opt(c.rmm2),
            c.n.to_string(),
        ])
        .map_err(|e| csv_io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
