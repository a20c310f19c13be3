//! Weather-regime detection: EOF reduction, k-means clustering, labeling
//! and per-day assignment.

mod eof;
mod kmeans;
mod model;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use eof::{fit_eof, project, reconstruct, EofBasis, EofWeighting};
pub use kmeans::{fit_kmeans, nearest_centroid, KMeansConfig, KMeansFit};
pub use model::{assign, composites, label_clusters, Composite, RegimeModel};

use crate::calendar;
use crate::error::{Error, Result};
use crate::gridstore::{parse_date, read_csv_columns};

pub const N_REGIMES: usize = 4;

/// The four canonical North Atlantic winter regimes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Regime {
    NaoPlus = 0,
    NaoMinus = 1,
    ScandinavianBlocking = 2,
    AtlanticRidge = 3,
}

impl Regime {
    pub const ALL: [Regime; 4] =
        [Regime::NaoPlus, Regime::NaoMinus, Regime::ScandinavianBlocking, Regime::AtlanticRidge];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn short_name(self) -> &'static str {
        match self {
            Regime::NaoPlus => "NAO+",
            Regime::NaoMinus => "NAO-",
            Regime::ScandinavianBlocking => "SB",
            Regime::AtlanticRidge => "AR",
        }
    }
}

/// Daily regime labels (canonical indices 0..4).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeSeries {
    times: Vec<i64>,
    labels: Vec<u8>,
}

impl RegimeSeries {
    pub fn new(times: Vec<i64>, labels: Vec<u8>) -> Result<Self> {
        if times.len() != labels.len() {
            return Err(Error::Validation("times and labels differ in length".into()));
        }
        if let Some(w) = times.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::Validation(format!("unsorted or duplicate date {}", calendar::format_iso(w[1]))));
        }
        if let Some(l) = labels.iter().find(|&&l| l as usize >= N_REGIMES) {
            return Err(Error::Validation(format!("regime label {l} out of range")));
        }
        Ok(Self { times, labels })
    }

    pub fn times(&self) -> &[i64] {
        &self.times
    }
    pub fn labels(&self) -> &[u8] {
        &self.labels
    }
    pub fn len(&self) -> usize {
        self.times.len()
    }
    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
    pub fn get(&self, day: i64) -> Option<u8> {
        self.times.binary_search(&day).ok().map(|i| self.labels[i])
    }

    /// Fraction of days in each regime.
    pub fn frequencies(&self) -> [f64; N_REGIMES] {
        let mut f = [0.0; N_REGIMES];
        self.labels.iter().for_each(|&l| f[l as usize] += 1.0);
        let n = self.labels.len().max(1) as f64;
        f.map(|c| c / n)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| crate::gridstore::csv_io(path, e))?;
        w.write_record(["date", "label"]).map_err(|e| crate::gridstore::csv_io(path, e))?;
        for (t, l) in self.times.iter().zip(&self.labels) {
            w.write_record([calendar::format_iso(*t), l.to_string()])
                .map_err(|e| crate::gridstore::csv_io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let rows = read_csv_columns(path.as_ref(), &["date", "label"])?;
        let mut times = Vec::with_capacity(rows.len());
        let mut labels = Vec::with_capacity(rows.len());
        for (line, cols) in rows {
            times.push(parse_date(&cols[0], line)?);
            let l: u8 = cols[1]
                .trim()
                .parse()
                .map_err(|_| Error::Parse { line, msg: format!("bad label {:?}", cols[1]) })?;
            labels.push(l);
        }
        Self::new(times, labels)
    }
}
