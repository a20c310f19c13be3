//! On-disk storage for gridded daily fields and dated scalar series.
//!
//! Fields use the little-endian `GRD1` layout:
//!
//! ```text
//! magic "GRD1" | version u32 | name_len u16 | name utf8 | units_len u16 | units utf8
//! ntime u64 | nlat u64 | nlon u64 | time i64[ntime] | lat f64[nlat] | lon f64[nlon]
//! payload f32[ntime * nlat * nlon]   (time-major, then lat, then lon)
//! ```
//!
//! Times are day numbers since 1900-01-01. Scalar series are `date,value`
//! CSV files with ISO dates.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::calendar;
use crate::error::{Error, Result};

pub const GRID_MAGIC: &[u8; 4] = b"GRD1";
pub const GRID_VERSION: u32 = 1;

/// A daily field on a regular latitude/longitude grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GriddedField {
    name: String,
    units: String,
    times: Vec<i64>,
    lats: Vec<f64>,
    lons: Vec<f64>,
    values: Vec<f32>,
}

fn strictly_monotone(xs: &[f64]) -> bool {
    if xs.len() < 2 {
        return true;
    }
    let inc = xs.windows(2).all(|w| w[1] > w[0]);
    let dec = xs.windows(2).all(|w| w[1] < w[0]);
    inc || dec
}

impl GriddedField {
    pub fn new(
        name: impl Into<String>,
        units: impl Into<String>,
        times: Vec<i64>,
        lats: Vec<f64>,
        lons: Vec<f64>,
        values: Vec<f32>,
    ) -> Result<Self> {
        let f = Self { name: name.into(), units: units.into(), times, lats, lons, values };
        f.validate()?;
        Ok(f)
    }

    fn validate(&self) -> Result<()> {
        if self.times.is_empty() {
            return Err(Error::Validation("field has no time steps".into()));
        }
        if self.lats.is_empty() || self.lons.is_empty() {
            return Err(Error::Validation("field has an empty spatial axis".into()));
        }
        if self.name.len() > u16::MAX as usize || self.units.len() > u16::MAX as usize {
            return Err(Error::Validation("name or units too long".into()));
        }
        if let Some(w) = self.times.windows(2).find(|w| w[1] <= w[0]) {
            let kind = if w[1] == w[0] { "duplicate" } else { "unsorted" };
            return Err(Error::Validation(format!(
                "{kind} time axis at {}",
                calendar::format_iso(w[1])
            )));
        }
        for (axis, xs) in [("latitude", &self.lats), ("longitude", &self.lons)] {
            if xs.iter().any(|x| !x.is_finite()) {
                return Err(Error::Validation(format!("non-finite {axis} coordinate")));
            }
            if !strictly_monotone(xs) {
                return Err(Error::Validation(format!("{axis} axis is not strictly monotone")));
            }
        }
        if self.lats.iter().any(|l| l.abs() > 90.0) {
            return Err(Error::Validation("latitude outside [-90, 90]".into()));
        }
        let expected = self.times.len() * self.lats.len() * self.lons.len();
        if self.values.len() != expected {
            return Err(Error::Validation(format!(
                "payload has {} values, axes imply {expected}",
                self.values.len()
            )));
        }
        if let Some(i) = self.values.iter().position(|v| !v.is_finite()) {
            let t = i / self.grid_len();
            return Err(Error::Validation(format!(
                "non-finite value at {}",
                calendar::format_iso(self.times[t])
            )));
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn units(&self) -> &str {
        &self.units
    }
    pub fn times(&self) -> &[i64] {
        &self.times
    }
    pub fn lats(&self) -> &[f64] {
        &self.lats
    }
    pub fn lons(&self) -> &[f64] {
        &self.lons
    }
    pub fn values(&self) -> &[f32] {
        &self.values
    }
    pub fn ntime(&self) -> usize {
        self.times.len()
    }
    pub fn grid_len(&self) -> usize {
        self.lats.len() * self.lons.len()
    }

    /// The map at time index `t`, row-major (lat, lon).
    pub fn map(&self, t: usize) -> &[f32] {
        let g = self.grid_len();
        &self.values[t * g..(t + 1) * g]
    }

    pub fn time_index(&self, day: i64) -> Option<usize> {
        self.times.binary_search(&day).ok()
    }

    pub fn into_parts(self) -> (String, String, Vec<i64>, Vec<f64>, Vec<f64>, Vec<f32>) {
        (self.name, self.units, self.times, self.lats, self.lons, self.values)
    }

    /// Same axes and metadata with new times and payload.
    pub fn with_data(&self, times: Vec<i64>, values: Vec<f32>) -> Result<Self> {
        Self::new(
            self.name.clone(),
            self.units.clone(),
            times,
            self.lats.clone(),
            self.lons.clone(),
            values,
        )
    }

    /// Keep only time steps for which `keep` returns true.
    pub fn select_times(&self, keep: impl Fn(i64) -> bool) -> Result<Self> {
        let g = self.grid_len();
        let mut times = Vec::new();
        let mut values = Vec::new();
        for (t, &day) in self.times.iter().enumerate() {
            if keep(day) {
                times.push(day);
                values.extend_from_slice(&self.values[t * g..(t + 1) * g]);
            }
        }
        if times.is_empty() {
            return Err(Error::Empty("time selection removed every step".into()));
        }
        self.with_data(times, values)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(
            64 + self.name.len()
                + self.units.len()
                + 8 * (self.times.len() + self.lats.len() + self.lons.len())
                + 4 * self.values.len(),
        );
        out.extend_from_slice(GRID_MAGIC);
        out.extend_from_slice(&GRID_VERSION.to_le_bytes());
        for s in [&self.name, &self.units] {
            out.extend_from_slice(&(s.len() as u16).to_le_bytes());
            out.extend_from_slice(s.as_bytes());
        }
        for n in [self.times.len(), self.lats.len(), self.lons.len()] {
            out.extend_from_slice(&(n as u64).to_le_bytes());
        }
        self.times.iter().for_each(|t| out.extend_from_slice(&t.to_le_bytes()));
        self.lats.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes()));
        self.lons.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes()));
        self.values.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(4).ok() != Some(&GRID_MAGIC[..]) {
            return Err(Error::Format("missing GRD1 magic".into()));
        }
        let version = r.u32()?;
        if version != GRID_VERSION {
            return Err(Error::Format(format!("unsupported GRD1 version {version}")));
        }
        let name = r.string()?;
        let units = r.string()?;
        let nt = r.u64()? as usize;
        let nlat = r.u64()? as usize;
        let nlon = r.u64()? as usize;
        let body = nt
            .checked_mul(8)
            .and_then(|a| a.checked_add(nlat.checked_mul(8)?))
            .and_then(|a| a.checked_add(nlon.checked_mul(8)?))
            .and_then(|a| a.checked_add(nt.checked_mul(nlat)?.checked_mul(nlon)?.checked_mul(4)?))
            .ok_or_else(|| Error::Corruption("axis lengths overflow".into()))?;
        if r.remaining() != body {
            return Err(Error::Corruption(format!(
                "expected {body} payload bytes, found {}",
                r.remaining()
            )));
        }
        let times = (0..nt).map(|_| r.i64()).collect::<Result<Vec<_>>>()?;
        let lats = (0..nlat).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let lons = (0..nlon).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let values = (0..nt * nlat * nlon).map(|_| r.f32()).collect::<Result<Vec<_>>>()?;
        Self::new(name, units, times, lats, lons, values)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::Corruption("file truncated".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn arr<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.arr()?))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.arr()?))
    }
    fn i64(&mut self) -> Result<i64> {
        Ok(i64::from_le_bytes(self.arr()?))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.arr()?))
    }
    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.arr()?))
    }
    fn string(&mut self) -> Result<String> {
        let n = u16::from_le_bytes(self.arr()?) as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::Corruption("metadata is not valid UTF-8".into()))
    }
}

pub fn write_grid(path: impl AsRef<Path>, field: &GriddedField) -> Result<()> {
    let path = path.as_ref();
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&field.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_grid(path: impl AsRef<Path>) -> Result<GriddedField> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    GriddedField::from_bytes(&bytes)
}

/// A scalar daily series, such as an index or one RMM component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatedSeries {
    times: Vec<i64>,
    values: Vec<f64>,
}

impl DatedSeries {
    pub fn new(times: Vec<i64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::Validation("times and values differ in length".into()));
        }
        if let Some(w) = times.windows(2).find(|w| w[1] <= w[0]) {
            let kind = if w[1] == w[0] { "duplicate" } else { "unsorted" };
            return Err(Error::Validation(format!("{kind} date {}", calendar::format_iso(w[1]))));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite value at {}",
                calendar::format_iso(times[i])
            )));
        }
        Ok(Self { times, values })
    }

    pub fn times(&self) -> &[i64] {
        &self.times
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn len(&self) -> usize {
        self.times.len()
    }
    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
    pub fn get(&self, day: i64) -> Option<f64> {
        self.times.binary_search(&day).ok().map(|i| self.values[i])
    }

    pub fn select_times(&self, keep: impl Fn(i64) -> bool) -> Self {
        let (times, values) = self
            .times
            .iter()
            .zip(&self.values)
            .filter(|(t, _)| keep(**t))
            .map(|(t, v)| (*t, *v))
            .unzip();
        Self { times, values }
    }
}

pub fn write_series_csv(path: impl AsRef<Path>, series: &DatedSeries) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    w.write_record(["date", "value"]).map_err(|e| csv_io(path, e))?;
    for (t, v) in series.times.iter().zip(&series.values) {
        w.write_record([calendar::format_iso(*t), format!("{v:?}")])
            .map_err(|e| csv_io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_series_csv(path: impl AsRef<Path>) -> Result<DatedSeries> {
    let path = path.as_ref();
    let rows = read_csv_columns(path, &["date", "value"])?;
    let mut times = Vec::with_capacity(rows.len());
    let mut values = Vec::with_capacity(rows.len());
    for (line, cols) in rows {
        times.push(parse_date(&cols[0], line)?);
        values.push(parse_f64(&cols[1], line)?);
    }
    DatedSeries::new(times, values)
}

pub(crate) fn csv_io(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse { line, msg: format!("{other:?}") },
    }
}

pub(crate) fn parse_date(s: &str, line: u64) -> Result<i64> {
    calendar::parse_iso(s).ok_or_else(|| Error::Parse { line, msg: format!("bad date {s:?}") })
}

pub(crate) fn parse_f64(s: &str, line: u64) -> Result<f64> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| Error::Parse { line, msg: format!("bad number {s:?}") })?;
    if !v.is_finite() {
        return Err(Error::Parse { line, msg: format!("non-finite number {s:?}") });
    }
    Ok(v)
}

/// Read a headed CSV file and return the requested columns of every row,
/// tagged with the 1-based line number.
pub(crate) fn read_csv_columns(path: &Path, wanted: &[&str]) -> Result<Vec<(u64, Vec<String>)>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_io(path, e))?;
    let headers = r.headers().map_err(|e| csv_io(path, e))?.clone();
    let idx = wanted
        .iter()
        .map(|w| {
            headers
                .iter()
                .position(|h| h.trim() == *w)
                .ok_or_else(|| Error::Parse { line: 1, msg: format!("missing column {w:?}") })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_io(path, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let cols = idx
            .iter()
            .map(|&i| {
                rec.get(i)
                    .map(str::to_string)
                    .ok_or_else(|| Error::Parse { line, msg: "short row".into() })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push((line, cols));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> GriddedField {
        let times = vec![10, 11, 12];
        let lats = vec![60.0, 50.0];
        let lons = vec![0.0, 10.0, 20.0];
        let values = (0..18).map(|i| i as f32 * 0.5).collect();
        GriddedField::new("z500", "m", times, lats, lons, values).unwrap()
    }

    #[test]
    fn header_size_matches_layout() {
        let f = sample();
        let header = 4 + 4 + 2 + 4 + 2 + 1 + 24 + 8 * (3 + 2 + 3);
        assert_eq!(f.to_bytes().len(), header + 18 * 4);
    }

    #[test]
    fn byte_round_trip_is_exact() {
        let f = sample();
        assert_eq!(GriddedField::from_bytes(&f.to_bytes()).unwrap(), f);
    }

    #[test]
    fn truncation_is_corruption() {
        let bytes = sample().to_bytes();
        let err = GriddedField::from_bytes(&bytes[..bytes.len() - 3]).unwrap_err();
        assert!(matches!(err, Error::Corruption(_)), "{err}");
    }

    #[test]
    fn bad_magic_is_format_error() {
        let mut bytes = sample().to_bytes();
        bytes[0] = b'X';
        assert!(matches!(GriddedField::from_bytes(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn invalid_fields_are_rejected() {
        let lats = vec![60.0, 50.0];
        let lons = vec![0.0];
        assert!(GriddedField::new("a", "b", vec![], lats.clone(), lons.clone(), vec![]).is_err());
        assert!(GriddedField::new("a", "b", vec![2, 1], lats.clone(), lons.clone(), vec![0.0; 4]).is_err());
        assert!(GriddedField::new("a", "b", vec![1, 1], lats.clone(), lons.clone(), vec![0.0; 4]).is_err());
        let nan = vec![0.0, f32::NAN];
        assert!(GriddedField::new("a", "b", vec![1], lats.clone(), lons.clone(), nan).is_err());
        assert!(GriddedField::new("a", "b", vec![1], vec![50.0, 50.0], lons, vec![0.0; 2]).is_err());
    }

    #[test]
    fn series_rejects_duplicates_and_nan() {
        assert!(DatedSeries::new(vec![1, 1], vec![0.0, 1.0]).is_err());
        assert!(DatedSeries::new(vec![1, 2], vec![0.0, f64::NAN]).is_err());
    }

    #[test]
    fn csv_round_trip_and_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        let s = DatedSeries::new(vec![100, 101, 105], vec![0.1, -1.0 / 3.0, 1e-300]).unwrap();
        write_series_csv(&p, &s).unwrap();
        assert_eq!(read_series_csv(&p).unwrap(), s);

        std::fs::write(&p, "date,value\n1980-01-01,1.0\n1980-01-02,abc\n").unwrap();
        match read_series_csv(&p) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
