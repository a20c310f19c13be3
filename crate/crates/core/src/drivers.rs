//! Driver indices: the stratospheric polar vortex (SPV) index and MJO phase.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::calendar;
use crate::error::{Error, Result};
use crate::gridstore::{csv_io, parse_date, parse_f64, read_csv_columns, DatedSeries, GriddedField};
use crate::preprocess::rolling_mean_series;

/// Latitude of the SPV index ring.
pub const SPV_LATITUDE: f64 = 60.0;
/// Largest allowed distance between the requested ring and a grid latitude.
pub const SPV_LAT_TOLERANCE: f64 = 2.0;

/// Zonal mean of the field on the grid latitude nearest to 60N.
pub fn spv_index(u10: &GriddedField) -> Result<DatedSeries> {
    let (i, lat) = u10
        .lats()
        .iter()
        .copied()
        .enumerate()
        .min_by(|a, b| (a.1 - SPV_LATITUDE).abs().total_cmp(&(b.1 - SPV_LATITUDE).abs()))
        .expect("non-empty latitude axis");
    if (lat - SPV_LATITUDE).abs() > SPV_LAT_TOLERANCE {
        return Err(Error::Domain(format!("no latitude within {SPV_LAT_TOLERANCE} degrees of 60N (nearest {lat})")));
    }
    let nlon = u10.lons().len();
    let values = (0..u10.ntime())
        .map(|t| {
            let row = &u10.map(t)[i * nlon..(i + 1) * nlon];
            row.iter().map(|&v| v as f64).sum::<f64>() / nlon as f64
        })
        .collect();
    DatedSeries::new(u10.times().to_vec(), values)
}

/// Default amplitude below which the MJO counts as inactive.
pub const MJO_ACTIVE_THRESHOLD: f64 = 1.0;

/// Half-open 45-degree sector, counted anticlockwise from the positive RMM1
/// axis, that contains (x, y). The tests are exact sign comparisons.
fn sector(x: f64, y: f64) -> u8 {
    if y >= 0.0 && x > 0.0 {
        if y < x { 0 } else { 1 }
    } else if x <= 0.0 && y > 0.0 {
        if -x < y { 2 } else { 3 }
    } else if y <= 0.0 && x < 0.0 {
        if -y < -x { 4 } else { 5 }
    } else if x < -y {
        6
    } else {
        7
    }
}

/// MJO class: 0 when inactive, otherwise phase 1..=8.
///
/// Phase 1 covers angles [180, 225) degrees and phases advance anticlockwise,
/// so phase = floor(((theta + 180) mod 360) / 45) + 1.
pub fn phase_class(rmm1: f64, rmm2: f64, threshold: f64) -> u8 {
    if rmm1.hypot(rmm2) < threshold {
        return 0;
    }
    (sector(rmm1, rmm2) + 4) % 8 + 1
}

/// One day of the smoothed MJO state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MjoRecord {
    pub day: i64,
    pub rmm1: f64,
    pub rmm2: f64,
    pub amplitude: f64,
    pub phase: u8,
}

impl MjoRecord {
    pub fn new(day: i64, rmm1: f64, rmm2: f64, threshold: f64) -> Self {
        Self { day, rmm1, rmm2, amplitude: rmm1.hypot(rmm2), phase: phase_class(rmm1, rmm2, threshold) }
    }

    pub fn one_hot(&self) -> [f64; 9] {
        one_hot_mjo(self.phase)
    }
}

pub fn one_hot_mjo(phase: u8) -> [f64; 9] {
    let mut v = [0.0; 9];
    v[phase as usize] = 1.0;
    v
}

/// Smooth the RMM components with a trailing mean and classify each day.
pub fn mjo_phase(rmm1: &DatedSeries, rmm2: &DatedSeries, smoothing_days: usize, threshold: f64) -> Result<Vec<MjoRecord>> {
    if rmm1.times() != rmm2.times() {
        return Err(Error::Alignment("RMM1 and RMM2 are not on the same dates".into()));
    }
    let (a, b) = if smoothing_days > 1 {
        (rolling_mean_series(rmm1, smoothing_days)?, rolling_mean_series(rmm2, smoothing_days)?)
    } else {
        (rmm1.clone(), rmm2.clone())
    };
    Ok(a.times()
        .iter()
        .zip(a.values().iter().zip(b.values()))
        .map(|(&d, (&x, &y))| MjoRecord::new(d, x, y, threshold))
        .collect())
}

/// Date-indexed lookup over MJO records.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MjoSeries {
    pub records: Vec<MjoRecord>,
}

impl MjoSeries {
    pub fn new(records: Vec<MjoRecord>) -> Result<Self> {
        if records.windows(2).any(|w| w[1].day <= w[0].day) {
            return Err(Error::Validation("MJO records not strictly increasing in date".into()));
        }
        Ok(Self { records })
    }

    pub fn get(&self, day: i64) -> Option<&MjoRecord> {
        self.records.binary_search_by_key(&day, |r| r.day).ok().map(|i| &self.records[i])
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
        w.write_record(["date", "rmm1", "rmm2", "amplitude", "phase"]).map_err(|e| csv_io(path, e))?;
        for r in &self.records {
            w.write_record([
                calendar::format_iso(r.day),
                format!("{:?}", r.rmm1),
                format!("{:?}", r.rmm2),
                format!("{:?}", r.amplitude),
                r.phase.to_string(),
            ])
            .map_err(|e| csv_io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Read `date,rmm1,rmm2` (other columns ignored) and reclassify with `threshold`.
    pub fn read_csv(path: impl AsRef<Path>, threshold: f64) -> Result<Self> {
        let rows = read_csv_columns(path.as_ref(), &["date", "rmm1", "rmm2"])?;
        let mut recs = Vec::with_capacity(rows.len());
        for (line, c) in rows {
            recs.push(MjoRecord::new(parse_date(&c[0], line)?, parse_f64(&c[1], line)?, parse_f64(&c[2], line)?, threshold));
        }
        Self::new(recs)
    }

    pub fn components(&self) -> Result<(DatedSeries, DatedSeries)> {
        let t: Vec<i64> = self.records.iter().map(|r| r.day).collect();
        Ok((
            DatedSeries::new(t.clone(), self.records.iter().map(|r| r.rmm1).collect())?,
            DatedSeries::new(t, self.records.iter().map(|r| r.rmm2).collect())?,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn documented_examples() {
        assert_eq!(phase_class(1.0, 0.0, 1.0), 5);
        assert_eq!(phase_class(-1.0, -1.0, 1.0), 2);
        assert_eq!(phase_class(0.5, 0.5, 1.0), 0);
        assert_eq!(phase_class(-2.0, -0.1, 1.0), 1);
        assert_eq!(phase_class(0.0, 2.0, 1.0), 7);
    }

    #[test]
    fn one_hot_has_nine_slots() {
        let v = one_hot_mjo(3);
        assert_eq!(v.len(), 9);
        assert_eq!(v.iter().sum::<f64>(), 1.0);
        assert_eq!(v[3], 1.0);
    }

    #[test]
    fn spv_requires_nearby_ring() {
        let f = GriddedField::new("u", "m/s", vec![0], vec![50.0, 70.0], vec![0.0, 90.0], vec![1.0; 4]).unwrap();
        assert!(matches!(spv_index(&f), Err(Error::Domain(_))));
        let g = GriddedField::new("u", "m/s", vec![0], vec![59.0, 70.0], vec![0.0, 90.0], vec![1.0, 3.0, 0.0, 0.0]).unwrap();
        assert_eq!(spv_index(&g).unwrap().values(), &[2.0]);
    }

    #[test]
    fn misaligned_components_fail() {
        let a = DatedSeries::new(vec![0, 1], vec![0.0, 1.0]).unwrap();
        let b = DatedSeries::new(vec![0, 2], vec![0.0, 1.0]).unwrap();
        assert!(matches!(mjo_phase(&a, &b, 1, 1.0), Err(Error::Alignment(_))));
    }
}
