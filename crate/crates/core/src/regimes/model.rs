use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::eof::{fit_eof, project, project_map, EofBasis, EofWeighting};
use super::kmeans::{fit_kmeans, nearest_centroid, KMeansConfig};
use super::{Regime, RegimeSeries, N_REGIMES};
use crate::error::{Error, Result};
use crate::gridstore::GriddedField;

const MAGIC: &[u8; 4] = b"RGM1";
const VERSION: u32 = 1;

/// A fitted regime classifier: EOF basis, centroids in EOF space, and the
/// map from cluster index to canonical regime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeModel {
    pub basis: EofBasis,
    pub centroids: Vec<Vec<f64>>,
    pub label_map: Vec<u8>,
}

/// Mean anomaly map and frequency of one regime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Composite {
    pub regime: Regime,
    /// `None` when the regime never occurs.
    pub mean: Option<Vec<f64>>,
    pub count: usize,
    pub frequency: f64,
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

/// Assign each cluster composite a distinct canonical regime so that the
/// summed spatial correlation with the reference maps is maximal.
pub fn label_clusters(cluster_maps: &[Vec<f64>], references: &[Vec<f64>]) -> Result<Vec<u8>> {
    if cluster_maps.len() != N_REGIMES || references.len() != N_REGIMES {
        return Err(Error::Argument(format!("labeling needs {N_REGIMES} clusters and {N_REGIMES} references")));
    }
    let g = references[0].len();
    if cluster_maps.iter().chain(references).any(|m| m.len() != g) {
        return Err(Error::Shape("composite and reference maps differ in size".into()));
    }
    let corr: Vec<Vec<f64>> =
        cluster_maps.iter().map(|c| references.iter().map(|r| correlation(c, r)).collect()).collect();
    let mut best: Option<(f64, Vec<usize>)> = None;
    for p in permutations(N_REGIMES) {
        let s: f64 = p.iter().enumerate().map(|(c, &r)| corr[c][r]).sum();
        if best.as_ref().is_none_or(|(bs, _)| s > *bs) {
            best = Some((s, p));
        }
    }
    Ok(best.unwrap().1.into_iter().map(|r| r as u8).collect())
}

fn mean_maps(field: &GriddedField, labels: &[usize], k: usize) -> (Vec<Option<Vec<f64>>>, Vec<usize>) {
    let g = field.grid_len();
    let mut sums = vec![vec![0.0; g]; k];
    let mut counts = vec![0usize; k];
    for (t, &l) in labels.iter().enumerate() {
        counts[l] += 1;
        sums[l].iter_mut().zip(field.map(t)).for_each(|(s, &v)| *s += v as f64);
    }
    let maps = sums
        .into_iter()
        .zip(&counts)
        .map(|(s, &c)| (c > 0).then(|| s.into_iter().map(|v| v / c as f64).collect()))
        .collect();
    (maps, counts)
}

/// Regime composites of an anomaly field over the dates of a label series.
pub fn composites(field: &GriddedField, series: &RegimeSeries) -> Result<Vec<Composite>> {
    let mut idx = Vec::with_capacity(series.len());
    for &day in series.times() {
        idx.push(field.time_index(day).ok_or_else(|| {
            Error::Alignment(format!("label date {} missing from field", crate::calendar::format_iso(day)))
        })?);
    }
    let sub_times: Vec<i64> = series.times().to_vec();
    let g = field.grid_len();
    let mut vals = Vec::with_capacity(idx.len() * g);
    idx.iter().for_each(|&t| vals.extend_from_slice(field.map(t)));
    let sub = field.with_data(sub_times, vals)?;
    let labels: Vec<usize> = series.labels().iter().map(|&l| l as usize).collect();
    let (maps, counts) = mean_maps(&sub, &labels, N_REGIMES);
    let n = series.len().max(1) as f64;
    Ok(Regime::ALL
        .iter()
        .zip(maps)
        .zip(counts)
        .map(|((&regime, mean), count)| Composite { regime, mean, count, frequency: count as f64 / n })
        .collect())
}

impl RegimeModel {
    /// EOF reduction, k-means with four clusters, and labeling against references.
    pub fn fit(
        anomalies: &GriddedField,
        n_eof: usize,
        weighting: EofWeighting,
        kmeans: &KMeansConfig,
        references: &[Vec<f64>],
    ) -> Result<(Self, RegimeSeries)> {
        if kmeans.k != N_REGIMES {
            return Err(Error::Config(format!("regime clustering uses k = {N_REGIMES}")));
        }
        let basis = fit_eof(anomalies, n_eof, weighting)?;
        let coeffs = project(anomalies, &basis)?;
        let fit = fit_kmeans(&coeffs, kmeans)?;
        let (maps, _) = mean_maps(anomalies, &fit.labels, N_REGIMES);
        let maps: Vec<Vec<f64>> = maps
            .into_iter()
            .map(|m| m.ok_or_else(|| Error::Degenerate("empty cluster after fitting".into())))
            .collect::<Result<_>>()?;
        let label_map = label_clusters(&maps, references)?;
        let model = Self { basis, centroids: fit.centroids, label_map };
        let labels = fit.labels.iter().map(|&c| model.label_map[c]).collect();
        let series = RegimeSeries::new(anomalies.times().to_vec(), labels)?;
        Ok((model, series))
    }

    pub fn classify_map(&self, map: &[f32]) -> u8 {
        let c = project_map(map, &self.basis);
        self.label_map[nearest_centroid(&c, &self.centroids)]
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let body = serde_json::to_vec(self).map_err(|e| Error::Format(e.to_string()))?;
        let mut out = Vec::with_capacity(16 + body.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(body.len() as u64).to_le_bytes());
        out.extend_from_slice(&body);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..4] != MAGIC {
            return Err(Error::Format("missing RGM1 magic".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(Error::Format(format!("unsupported RGM1 version {version}")));
        }
        let n = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        if bytes.len() - 16 != n {
            return Err(Error::Corruption("RGM1 payload length mismatch".into()));
        }
        let m: Self = serde_json::from_slice(&bytes[16..]).map_err(|e| Error::Corruption(e.to_string()))?;
        if m.centroids.len() != m.label_map.len() || m.centroids.iter().any(|c| c.len() != m.basis.n_eof) {
            return Err(Error::Corruption("inconsistent regime model".into()));
        }
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

/// Classify every day of an anomaly field.
pub fn assign(field: &GriddedField, model: &RegimeModel) -> Result<RegimeSeries> {
    model.basis.check_grid(field.lats(), field.lons())?;
    let labels = (0..field.ntime()).map(|t| model.classify_map(field.map(t))).collect();
    RegimeSeries::new(field.times().to_vec(), labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labeling_is_a_bijection_following_correlation() {
        let refs: Vec<Vec<f64>> = (0..4).map(|k| (0..8).map(|i| ((i * (k + 1)) as f64).sin()).collect()).collect();
        let clusters = vec![refs[2].clone(), refs[0].clone(), refs[3].clone(), refs[1].clone()];
        assert_eq!(label_clusters(&clusters, &refs).unwrap(), vec![2, 0, 3, 1]);
    }

    #[test]
    fn permutation_count() {
        assert_eq!(permutations(4).len(), 24);
    }
}
