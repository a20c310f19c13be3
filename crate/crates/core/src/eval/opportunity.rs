use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{ForecastRecord, N_CLASSES, N_INPUT_WEEKS, N_LEADS};

/// Largest lag, in weeks, between an input week and a lead week.
pub const MAX_LAG: usize = N_LEADS + N_INPUT_WEEKS - 1;

/// Percentile with linear interpolation between order statistics.
pub fn percentile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("percentile of an empty set".into()));
    }
    if !(0.0..=100.0).contains(&q) {
        return Err(Error::Argument(format!("percentile {q} outside [0, 100]")));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q / 100.0 * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    Ok(v[lo] + (pos - lo as f64) * (v[hi] - v[lo]))
}

/// Correct high-confidence forecasts, as `(record index, lead week index)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpportunitySet {
    pub percentile: f64,
    pub threshold: f64,
    pub selected: Vec<(usize, usize)>,
    /// Selected forecasts per `[regime][lead week]`.
    pub counts: [[usize; N_LEADS]; N_CLASSES],
}

impl OpportunitySet {
    /// Indices of the records selected at lead week index `lead`.
    pub fn at_lead(&self, lead: usize) -> impl Iterator<Item = usize> + '_ {
        self.selected.iter().filter(move |s| s.1 == lead).map(|s| s.0)
    }
}

/// Keep correct forecasts whose confidence reaches the given percentile of
/// all (record, lead week) confidences.
pub fn select_opportunities(records: &[ForecastRecord], pct: f64) -> Result<OpportunitySet> {
    if records.len() < 10 {
        return Err(Error::Empty(format!("{} records; at least 10 are needed for selection", records.len())));
    }
    let conf: Vec<f64> = records.iter().flat_map(|r| (0..N_LEADS).map(move |w| r.confidence(w))).collect();
    let threshold = percentile(&conf, pct)?;
    let mut selected = Vec::new();
    let mut counts = [[0; N_LEADS]; N_CLASSES];
    for (n, r) in records.iter().enumerate() {
        for w in 0..N_LEADS {
            if r.confidence(w) >= threshold && r.correct(w) {
                selected.push((n, w));
                counts[r.predicted(w) as usize][w] += 1;
            }
        }
    }
    Ok(OpportunitySet { percentile: pct, threshold, selected, counts })
}

/// Relative frequencies of predicted regimes given the regime observed
/// `dt` weeks earlier, minus the regime's occurrence in the test targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecursorTable {
    /// Flat `[c][k][i][dt - 1]`; `None` where the cell has no support.
    pub relative: Vec<Option<f64>>,
    pub conditional: Vec<Option<f64>>,
    /// Number of selected forecasts with precursor `c` per `[c][i][dt - 1]`.
    pub support: Vec<usize>,
    /// Target occurrence per `[k][i]` over all records.
    pub reference: [[f64; N_LEADS]; N_CLASSES],
}

impl PrecursorTable {
    fn idx(c: usize, k: usize, i: usize, dt: usize) -> usize {
        ((c * N_CLASSES + k) * N_LEADS + i) * MAX_LAG + dt - 1
    }

    /// Relative frequency for precursor `c`, predicted `k`, lead index `i`
    /// (0-based) and lag `dt` in 1..=11.
    pub fn get(&self, c: usize, k: usize, i: usize, dt: usize) -> Option<f64> {
        self.relative[Self::idx(c, k, i, dt)]
    }

    pub fn conditional(&self, c: usize, k: usize, i: usize, dt: usize) -> Option<f64> {
        self.conditional[Self::idx(c, k, i, dt)]
    }

    pub fn support(&self, c: usize, i: usize, dt: usize) -> usize {
        self.support[(c * N_LEADS + i) * MAX_LAG + dt - 1]
    }
}

/// Precursor table of the selected forecasts. Lead week `i + 1` and input
/// week `t - j` are `dt = i + 1 + j` weeks apart.
pub fn precursor_frequencies(records: &[ForecastRecord], opps: &OpportunitySet) -> Result<PrecursorTable> {
    if records.is_empty() {
        return Err(Error::Empty("no records for the reference occurrence".into()));
    }
    if opps.selected.iter().any(|&(n, w)| n >= records.len() || w >= N_LEADS) {
        return Err(Error::Argument("opportunity set does not index these records".into()));
    }
    let mut reference = [[0.0; N_LEADS]; N_CLASSES];
    for r in records {
        for w in 0..N_LEADS {
            reference[r.targets[w] as usize][w] += 1.0;
        }
    }
    reference.iter_mut().flatten().for_each(|v| *v /= records.len() as f64);

    let cells = N_CLASSES * N_CLASSES * N_LEADS * MAX_LAG;
    let mut relative = vec![None; cells];
    let mut conditional = vec![None; cells];
    let mut support = vec![0; N_CLASSES * N_LEADS * MAX_LAG];
    for i in 0..N_LEADS {
        let sel: Vec<usize> = opps.at_lead(i).collect();
        for j in 0..N_INPUT_WEEKS {
            let dt = i + 1 + j;
            let mut joint = [[0usize; N_CLASSES]; N_CLASSES];
            for &n in &sel {
                let r = &records[n];
                joint[r.input_lag(j) as usize][r.predicted(i) as usize] += 1;
            }
            for c in 0..N_CLASSES {
                let nx: usize = joint[c].iter().sum();
                support[(c * N_LEADS + i) * MAX_LAG + dt - 1] = nx;
                if nx == 0 {
                    continue;
                }
                for k in 0..N_CLASSES {
                    let p = joint[c][k] as f64 / nx as f64;
                    let at = PrecursorTable::idx(c, k, i, dt);
                    conditional[at] = Some(p);
                    relative[at] = Some(p - reference[k][i]);
                }
            }
        }
    }
    Ok(PrecursorTable { relative, conditional, support, reference })
}

/// Regime labels at the six lead weeks of a daily forecast starting on day 1.
pub fn hindcast_leadmap<T: Copy>(daily: &[T]) -> Result<[T; N_LEADS]> {
    const DAYS: [usize; N_LEADS] = [6, 13, 20, 27, 34, 40];
    if daily.len() < 40 {
        return Err(Error::Coverage(format!("daily forecast covers {} days, need 40", daily.len())));
    }
    Ok(DAYS.map(|d| daily[d - 1]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentile_matches_linear_rule() {
        let v: Vec<f64> = (0..5).map(f64::from).collect();
        assert_eq!(percentile(&v, 90.0).unwrap(), 3.6);
        assert_eq!(percentile(&v, 0.0).unwrap(), 0.0);
        assert_eq!(percentile(&[2.0], 50.0).unwrap(), 2.0);
    }

    #[test]
    fn leadmap_days() {
        let daily: Vec<usize> = (1..=40).collect();
        assert_eq!(hindcast_leadmap(&daily).unwrap(), [6, 13, 20, 27, 34, 40]);
        assert!(hindcast_leadmap(&daily[..39]).is_err());
    }
}
