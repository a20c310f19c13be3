//! Regridding, smoothing, climatology, anomalies and standardization.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::calendar;
use crate::error::{Error, Result};
use crate::gridstore::{DatedSeries, GriddedField};

/// Locate `x` on a strictly monotone axis: returns (lower index, weight of upper).
fn bracket(axis: &[f64], x: f64) -> Option<(usize, f64)> {
    let n = axis.len();
    if n == 1 {
        return (axis[0] == x).then_some((0, 0.0));
    }
    let inc = axis[1] > axis[0];
    let (lo, hi) = if inc { (axis[0], axis[n - 1]) } else { (axis[n - 1], axis[0]) };
    if !(x >= lo && x <= hi) {
        return None;
    }
    // first index whose coordinate is past x in the axis direction
    let past = axis.partition_point(|&a| if inc { a <= x } else { a >= x });
    let i = past.saturating_sub(1).min(n - 2);
    let (a0, a1) = (axis[i], axis[i + 1]);
    let w = if x == a0 { 0.0 } else if x == a1 { 1.0 } else { (x - a0) / (a1 - a0) };
    Some((i, w))
}

/// Bilinear interpolation of every map onto a target grid inside the source hull.
pub fn regrid(field: &GriddedField, lats: &[f64], lons: &[f64]) -> Result<GriddedField> {
    let lat_w = lats
        .iter()
        .map(|&y| bracket(field.lats(), y).ok_or_else(|| Error::Domain(format!("latitude {y} outside source grid"))))
        .collect::<Result<Vec<_>>>()?;
    let lon_w = lons
        .iter()
        .map(|&x| bracket(field.lons(), x).ok_or_else(|| Error::Domain(format!("longitude {x} outside source grid"))))
        .collect::<Result<Vec<_>>>()?;
    let snlon = field.lons().len();
    let single_lat = field.lats().len() == 1;
    let single_lon = snlon == 1;
    let mut out = Vec::with_capacity(field.ntime() * lats.len() * lons.len());
    for t in 0..field.ntime() {
        let m = field.map(t);
        let at = |i: usize, j: usize| m[i * snlon + j] as f64;
        for &(i, wy) in &lat_w {
            for &(j, wx) in &lon_w {
                let i1 = if single_lat { i } else { i + 1 };
                let j1 = if single_lon { j } else { j + 1 };
                let top = at(i, j) * (1.0 - wx) + at(i, j1) * wx;
                let bot = at(i1, j) * (1.0 - wx) + at(i1, j1) * wx;
                out.push((top * (1.0 - wy) + bot * wy) as f32);
            }
        }
    }
    GriddedField::new(
        field.name(),
        field.units(),
        field.times().to_vec(),
        lats.to_vec(),
        lons.to_vec(),
        out,
    )
}

/// Split a sorted day axis into runs of consecutive days, as index ranges.
pub fn contiguous_runs(times: &[i64]) -> Vec<std::ops::Range<usize>> {
    let mut runs = Vec::new();
    let mut start = 0;
    for i in 1..=times.len() {
        if i == times.len() || times[i] != times[i - 1] + 1 {
            if i > start {
                runs.push(start..i);
            }
            start = i;
        }
    }
    runs
}

/// Trailing rolling mean over rows of `row_len` values. The output keeps the
/// date of the last day of each window; windows never cross a gap in the days.
pub fn rolling_mean_rows(times: &[i64], rows: &[f64], row_len: usize, window: usize) -> Result<(Vec<i64>, Vec<f64>)> {
    if window == 0 {
        return Err(Error::Argument("rolling window must be positive".into()));
    }
    if window > times.len() {
        return Err(Error::Argument(format!(
            "rolling window {window} longer than the {} available days",
            times.len()
        )));
    }
    let mut out_t = Vec::new();
    let mut out = Vec::new();
    let mut acc = vec![0.0; row_len];
    for run in contiguous_runs(times) {
        if run.len() < window {
            continue;
        }
        acc.iter_mut().for_each(|a| *a = 0.0);
        for t in run.clone() {
            let row = &rows[t * row_len..(t + 1) * row_len];
            acc.iter_mut().zip(row).for_each(|(a, v)| *a += v);
            if t + 1 - run.start > window {
                let old = &rows[(t - window) * row_len..(t - window + 1) * row_len];
                acc.iter_mut().zip(old).for_each(|(a, v)| *a -= v);
            }
            if t + 1 - run.start >= window {
                out_t.push(times[t]);
                out.extend(acc.iter().map(|a| a / window as f64));
            }
        }
    }
    if out_t.is_empty() {
        return Err(Error::Argument(format!("no contiguous run spans {window} days")));
    }
    Ok((out_t, out))
}

pub fn rolling_mean(field: &GriddedField, window: usize) -> Result<GriddedField> {
    let rows: Vec<f64> = field.values().iter().map(|&v| v as f64).collect();
    let (t, v) = rolling_mean_rows(field.times(), &rows, field.grid_len(), window)?;
    field.with_data(t, v.into_iter().map(|x| x as f32).collect())
}

pub fn rolling_mean_series(series: &DatedSeries, window: usize) -> Result<DatedSeries> {
    let (t, v) = rolling_mean_rows(series.times(), series.values(), 1, window)?;
    DatedSeries::new(t, v)
}

/// Restrict a field to extended-winter days.
pub fn extended_winter(field: &GriddedField) -> Result<GriddedField> {
    field.select_times(calendar::in_extended_winter)
}

/// Mean map for each day-of-year key over an inclusive range of calendar years.
#[derive(Debug, Clone, PartialEq)]
pub struct Climatology {
    pub years: (i32, i32),
    pub maps: BTreeMap<u16, Vec<f64>>,
}

pub fn build_climatology(field: &GriddedField, years: (i32, i32)) -> Result<Climatology> {
    if years.0 > years.1 {
        return Err(Error::Argument(format!("empty climatology window {years:?}")));
    }
    let g = field.grid_len();
    let mut sums: BTreeMap<u16, (Vec<f64>, usize)> = BTreeMap::new();
    for (t, &day) in field.times().iter().enumerate() {
        let y = calendar::year_of(day);
        if y < years.0 || y > years.1 {
            continue;
        }
        let e = sums.entry(calendar::doy_key(day)).or_insert_with(|| (vec![0.0; g], 0));
        e.0.iter_mut().zip(field.map(t)).for_each(|(a, &v)| *a += v as f64);
        e.1 += 1;
    }
    if sums.is_empty() {
        return Err(Error::Coverage(format!("no data in years {}-{}", years.0, years.1)));
    }
    let maps = sums
        .into_iter()
        .map(|(k, (s, n))| (k, s.into_iter().map(|x| x / n as f64).collect()))
        .collect();
    Ok(Climatology { years, maps })
}

/// How the reference climatology is chosen for each date.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClimatologyPolicy {
    /// Length of the trailing reference period in years.
    pub reference_years: i32,
    /// Fixed window used while fewer than `reference_years` earlier years exist.
    /// Defaults to the first `reference_years` years of the data.
    pub fallback: Option<(i32, i32)>,
}

impl Default for ClimatologyPolicy {
    fn default() -> Self {
        Self { reference_years: 30, fallback: None }
    }
}

impl ClimatologyPolicy {
    /// Reference years for a date in calendar year `year`, given the first data year.
    pub fn window_for(&self, year: i32, first_year: i32) -> (i32, i32) {
        if year - self.reference_years >= first_year {
            (year - self.reference_years, year - 1)
        } else {
            self.fallback.unwrap_or((first_year, first_year + self.reference_years - 1))
        }
    }
}

/// Subtract, from each day, the climatology chosen by `policy`.
pub fn anomalies(field: &GriddedField, policy: &ClimatologyPolicy) -> Result<GriddedField> {
    if policy.reference_years <= 0 {
        return Err(Error::Argument("reference_years must be positive".into()));
    }
    let first_year = calendar::year_of(field.times()[0]);
    let g = field.grid_len();
    let mut cache: HashMap<(i32, i32), Climatology> = HashMap::new();
    let mut out = Vec::with_capacity(field.values().len());
    for (t, &day) in field.times().iter().enumerate() {
        let win = policy.window_for(calendar::year_of(day), first_year);
        if !cache.contains_key(&win) {
            cache.insert(win, build_climatology(field, win)?);
        }
        let key = calendar::doy_key(day);
        let clim = cache[&win].maps.get(&key).ok_or_else(|| {
            Error::Coverage(format!(
                "no climatology for {} in years {}-{}",
                calendar::format_iso(day),
                win.0,
                win.1
            ))
        })?;
        out.extend(field.map(t).iter().zip(clim).map(|(&v, c)| (v as f64 - c) as f32));
        debug_assert_eq!(clim.len(), g);
    }
    field.with_data(field.times().to_vec(), out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StandardizeMode {
    /// One mean and standard deviation over all times and grid points.
    #[default]
    Pooled,
    /// Separate statistics per grid point.
    PerGridpoint,
}

/// Standardization statistics fitted on a reference field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mode: StandardizeMode,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(field: &GriddedField, mode: StandardizeMode) -> Result<Self> {
        let g = field.grid_len();
        let nt = field.ntime() as f64;
        let (mean, std) = match mode {
            StandardizeMode::Pooled => {
                let n = field.values().len() as f64;
                let m = field.values().iter().map(|&v| v as f64).sum::<f64>() / n;
                let var = field.values().iter().map(|&v| (v as f64 - m).powi(2)).sum::<f64>() / n;
                (vec![m], vec![var.sqrt()])
            }
            StandardizeMode::PerGridpoint => {
                let mut m = vec![0.0; g];
                for t in 0..field.ntime() {
                    m.iter_mut().zip(field.map(t)).for_each(|(a, &v)| *a += v as f64);
                }
                m.iter_mut().for_each(|a| *a /= nt);
                let mut var = vec![0.0; g];
                for t in 0..field.ntime() {
                    var.iter_mut()
                        .zip(field.map(t))
                        .zip(&m)
                        .for_each(|((a, &v), mu)| *a += (v as f64 - mu).powi(2));
                }
                (m, var.into_iter().map(|v| (v / nt).sqrt()).collect())
            }
        };
        if std.iter().any(|&s| s == 0.0) {
            return Err(Error::Degenerate("zero variance in standardization reference".into()));
        }
        Ok(Self { mode, mean, std })
    }

    pub fn apply(&self, field: &GriddedField) -> Result<GriddedField> {
        let g = field.grid_len();
        if self.mode == StandardizeMode::PerGridpoint && self.mean.len() != g {
            return Err(Error::Shape(format!("statistics for {} points, field has {g}", self.mean.len())));
        }
        let out = field
            .values()
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let k = if self.mode == StandardizeMode::Pooled { 0 } else { i % g };
                ((v as f64 - self.mean[k]) / self.std[k]) as f32
            })
            .collect();
        field.with_data(field.times().to_vec(), out)
    }
}

/// Population mean and standard deviation of a sample.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    (m, v.sqrt())
}

/// Standardize a series with externally supplied statistics.
pub fn standardize_series(series: &DatedSeries, mean: f64, std: f64) -> Result<DatedSeries> {
    if !(std > 0.0) {
        return Err(Error::Degenerate("non-positive standard deviation".into()));
    }
    DatedSeries::new(
        series.times().to_vec(),
        series.values().iter().map(|v| (v - mean) / std).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field(times: Vec<i64>, lats: Vec<f64>, lons: Vec<f64>, f: impl Fn(usize, usize, usize) -> f32) -> GriddedField {
        let mut v = Vec::new();
        for t in 0..times.len() {
            for i in 0..lats.len() {
                for j in 0..lons.len() {
                    v.push(f(t, i, j));
                }
            }
        }
        GriddedField::new("x", "u", times, lats, lons, v).unwrap()
    }

    #[test]
    fn regrid_identity_is_bitwise() {
        let f = field(vec![0, 1], vec![80.0, 70.0, 60.0], vec![-10.0, 0.0, 10.0, 20.0], |t, i, j| {
            (t * 100 + i * 10 + j) as f32 * 0.37
        });
        let g = regrid(&f, f.lats(), f.lons()).unwrap();
        assert_eq!(g.values(), f.values());
    }

    #[test]
    fn regrid_reproduces_linear_fields() {
        let f = field(vec![0], vec![0.0, 10.0, 20.0], vec![0.0, 5.0, 10.0], |_, i, j| {
            (2.0 * (i as f64 * 10.0) - 3.0 * (j as f64 * 5.0) + 1.0) as f32
        });
        let g = regrid(&f, &[3.0, 17.5], &[1.0, 9.0]).unwrap();
        for (k, (y, x)) in [(3.0, 1.0), (3.0, 9.0), (17.5, 1.0), (17.5, 9.0)].iter().enumerate() {
            let want = 2.0 * y - 3.0 * x + 1.0;
            assert!((g.values()[k] as f64 - want).abs() < 1e-4);
        }
        assert!(matches!(regrid(&f, &[25.0], &[0.0]), Err(Error::Domain(_))));
    }

    #[test]
    fn rolling_mean_respects_gaps() {
        let s = DatedSeries::new(vec![0, 1, 2, 3, 10, 11, 12], vec![1.0, 2.0, 3.0, 4.0, 10.0, 20.0, 30.0]).unwrap();
        let r = rolling_mean_series(&s, 3).unwrap();
        assert_eq!(r.times(), &[2, 3, 12]);
        assert_eq!(r.values(), &[2.0, 3.0, 20.0]);
        assert!(rolling_mean_series(&s, 8).is_err());
        assert!(rolling_mean_series(&s, 0).is_err());
    }

    #[test]
    fn policy_windows() {
        let p = ClimatologyPolicy::default();
        assert_eq!(p.window_for(2010, 1980), (1980, 2009));
        assert_eq!(p.window_for(2020, 1980), (1990, 2019));
        assert_eq!(p.window_for(1995, 1980), (1980, 2009));
    }

    #[test]
    fn standardize_pooled_and_degenerate() {
        let f = field(vec![0, 1], vec![0.0], vec![0.0, 1.0], |t, _, j| (t * 2 + j) as f32);
        let s = Standardizer::fit(&f, StandardizeMode::Pooled).unwrap();
        let z = s.apply(&f).unwrap();
        let v: Vec<f64> = z.values().iter().map(|&x| x as f64).collect();
        let (m, sd) = mean_std(&v);
        assert!(m.abs() < 1e-6 && (sd - 1.0).abs() < 1e-6);
        let c = field(vec![0, 1], vec![0.0], vec![0.0], |_, _, _| 3.0);
        assert!(matches!(Standardizer::fit(&c, StandardizeMode::Pooled), Err(Error::Degenerate(_))));
    }
}
