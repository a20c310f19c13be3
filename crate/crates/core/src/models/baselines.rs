use std::collections::BTreeMap;

use super::{regime_one_hot, Probs, N_CLASSES, N_INPUT_WEEKS, N_LEADS};
use crate::calendar;
use crate::error::{Error, Result};
use crate::regimes::RegimeSeries;

/// Persistence: the anchor-week regime, with certainty, at every lead.
pub fn persistence_forecast(inputs: &[u8; N_INPUT_WEEKS]) -> Probs {
    [regime_one_hot(inputs[N_INPUT_WEEKS - 1]); N_LEADS]
}

/// Modal regime for each day of year over a reference label series.
#[derive(Debug, Clone, PartialEq)]
pub struct ClimatologyBaseline {
    pub mode: BTreeMap<u16, u8>,
}

impl ClimatologyBaseline {
    pub fn fit(series: &RegimeSeries) -> Result<Self> {
        if series.is_empty() {
            return Err(Error::Empty("no reference labels for climatology".into()));
        }
        let mut counts: BTreeMap<u16, [usize; N_CLASSES]> = BTreeMap::new();
        for (&t, &l) in series.times().iter().zip(series.labels()) {
            counts.entry(calendar::doy_key(t)).or_default()[l as usize] += 1;
        }
        let mode = counts
            .into_iter()
            .map(|(k, c)| {
                let mut best = 0;
                for j in 1..N_CLASSES {
                    if c[j] > c[best] {
                        best = j;
                    }
                }
                (k, best as u8)
            })
            .collect();
        Ok(Self { mode })
    }

    pub fn regime_for(&self, day: i64) -> Result<u8> {
        self.mode
            .get(&calendar::doy_key(day))
            .copied()
            .ok_or_else(|| Error::Coverage(format!("no climatology for {}", calendar::format_iso(day))))
    }
}

/// Climatological forecast for an anchor date: lead week i verifies on
/// anchor + 7 i days.
pub fn climatology_forecast(clim: &ClimatologyBaseline, anchor: i64) -> Result<Probs> {
    let mut p = [[0.0; N_CLASSES]; N_LEADS];
    for (i, row) in p.iter_mut().enumerate() {
        *row = regime_one_hot(clim.regime_for(anchor + 7 * (i as i64 + 1))?);
    }
    Ok(p)
}
