use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::calendar;
use crate::error::{Error, Result};
use crate::models::{N_INPUT_WEEKS, N_LEADS};
use crate::regimes::RegimeSeries;

/// Days spanned by one window: six input weeks and six lead weeks.
pub const WINDOW_SPAN_DAYS: i64 = 7 * (N_INPUT_WEEKS + N_LEADS) as i64 - 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
    Test,
}

/// Chronological assignment of whole winters to splits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitSpec {
    /// Winters by start year: training up to `train_last`, validation up to
    /// `val_last`, the rest test.
    Years { train_last: i32, val_last: i32 },
    /// Fractions of the available winters, in time order.
    Fractions { train: f64, validation: f64 },
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec::Fractions { train: 0.7, validation: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowConfig {
    pub stride_days: usize,
    pub split: SplitSpec,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self { stride_days: 7, split: SplitSpec::default() }
    }
}

/// One training example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSample {
    /// Date of the most recent input week.
    pub anchor: i64,
    pub winter: i32,
    pub split: Split,
    pub input_days: [i64; N_INPUT_WEEKS],
    pub inputs: [u8; N_INPUT_WEEKS],
    pub targets: [u8; N_LEADS],
}

impl WindowSample {
    pub fn target_day(&self, lead: usize) -> i64 {
        self.anchor + 7 * (lead as i64 + 1)
    }
}

fn assign_splits(winters: &[i32], spec: &SplitSpec) -> Result<BTreeMap<i32, Split>> {
    let mut out = BTreeMap::new();
    match spec {
        SplitSpec::Years { train_last, val_last } => {
            if val_last < train_last {
                return Err(Error::Config("validation period ends before training".into()));
            }
            for &w in winters {
                let s = if w <= *train_last {
                    Split::Train
                } else if w <= *val_last {
                    Split::Validation
                } else {
                    Split::Test
                };
                out.insert(w, s);
            }
        }
        SplitSpec::Fractions { train, validation } => {
            if !(*train > 0.0 && *validation >= 0.0 && train + validation <= 1.0) {
                return Err(Error::Config(format!("bad split fractions {train}/{validation}")));
            }
            let n = winters.len();
            let n_train = ((train * n as f64).round() as usize).clamp(1, n);
            let n_val = ((validation * n as f64).round() as usize).min(n - n_train);
            for (i, &w) in winters.iter().enumerate() {
                let s = if i < n_train {
                    Split::Train
                } else if i < n_train + n_val {
                    Split::Validation
                } else {
                    Split::Test
                };
                out.insert(w, s);
            }
        }
    }
    Ok(out)
}

/// Slide windows through every winter of a daily regime series.
///
/// Input weeks are `t-35, t-28, ..., t` and lead week `i` verifies on
/// `t + 7 i`. Every one of the twelve dates must lie in the same winter, be
/// present in `regimes`, and satisfy `available`. Winters with fewer than
/// 78 days are skipped.
pub fn build_windows(
    regimes: &RegimeSeries,
    cfg: &WindowConfig,
    available: impl Fn(i64) -> bool,
) -> Result<Vec<WindowSample>> {
    if cfg.stride_days == 0 {
        return Err(Error::Argument("stride must be at least one day".into()));
    }
    let mut by_winter: BTreeMap<i32, (i64, i64)> = BTreeMap::new();
    for &d in regimes.times() {
        if let Some(w) = calendar::winter_of(d) {
            let e = by_winter.entry(w).or_insert((d, d));
            e.0 = e.0.min(d);
            e.1 = e.1.max(d);
        }
    }
    let mut usable = Vec::new();
    for (&w, &(first, last)) in &by_winter {
        if last - first + 1 < WINDOW_SPAN_DAYS {
            log::warn!("winter {w} spans only {} days; skipped", last - first + 1);
        } else {
            usable.push(w);
        }
    }
    if usable.is_empty() {
        return Err(Error::Coverage("no winter is long enough for a window".into()));
    }
    let splits = assign_splits(&usable, &cfg.split)?;
    let lookback = 7 * (N_INPUT_WEEKS as i64 - 1);
    let mut out = Vec::new();
    for &w in &usable {
        let (first, last) = by_winter[&w];
        let mut t = first + lookback;
        while t + 7 * N_LEADS as i64 <= last {
            let input_days: [i64; N_INPUT_WEEKS] = std::array::from_fn(|k| t - 7 * (N_INPUT_WEEKS - 1 - k) as i64);
            let target_days: [i64; N_LEADS] = std::array::from_fn(|i| t + 7 * (i as i64 + 1));
            let all: Vec<i64> = input_days.iter().chain(&target_days).copied().collect();
            let labels: Option<Vec<u8>> = all
                .iter()
                .map(|&d| regimes.get(d).filter(|_| available(d) && calendar::winter_of(d) == Some(w)))
                .collect();
            if let Some(l) = labels {
                out.push(WindowSample {
                    anchor: t,
                    winter: w,
                    split: splits[&w],
                    input_days,
                    inputs: std::array::from_fn(|k| l[k]),
                    targets: std::array::from_fn(|i| l[N_INPUT_WEEKS + i]),
                });
            }
            t += cfg.stride_days as i64;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_winter(year: i32) -> RegimeSeries {
        let s = calendar::winter_start(year);
        let times: Vec<i64> = (s..s + 137).collect();
        let labels = times.iter().map(|d| (d % 4) as u8).collect();
        RegimeSeries::new(times, labels).unwrap()
    }

    #[test]
    fn window_counts_for_one_winter() {
        let r = one_winter(1990);
        let all = |_| true;
        let cfg = |s| WindowConfig { stride_days: s, split: SplitSpec::Fractions { train: 1.0, validation: 0.0 } };
        assert_eq!(build_windows(&r, &cfg(7), all).unwrap().len(), 9);
        assert_eq!(build_windows(&r, &cfg(1), all).unwrap().len(), 60);
        assert_eq!(WINDOW_SPAN_DAYS, 78);
    }

    #[test]
    fn targets_follow_inputs() {
        let r = one_winter(1990);
        let cfg = WindowConfig { stride_days: 7, split: SplitSpec::Fractions { train: 1.0, validation: 0.0 } };
        let w = &build_windows(&r, &cfg, |_| true).unwrap()[0];
        assert_eq!(w.anchor, w.input_days[5]);
        assert_eq!(w.targets[0], r.get(w.anchor + 7).unwrap());
        assert_eq!(w.inputs[0], r.get(w.anchor - 35).unwrap());
    }
}
