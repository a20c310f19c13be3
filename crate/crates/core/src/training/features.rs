use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::windows::{Split, WindowSample};
use crate::calendar;
use crate::drivers::MjoSeries;
use crate::error::{Error, Result};
use crate::gridstore::DatedSeries;
use crate::models::{index_step, regime_one_hot, validate_index_step, N_CLASSES, N_INPUT_WEEKS, N_LEADS};
use crate::tensorgrad::Tensor;

fn missing(what: &str, day: i64) -> Error {
    Error::Coverage(format!("no {what} for {}", calendar::format_iso(day)))
}

/// Regime one-hot inputs `[n, 6, 4]`.
pub fn regime_inputs(samples: &[&WindowSample]) -> Tensor {
    let mut data = Vec::with_capacity(samples.len() * N_INPUT_WEEKS * N_CLASSES);
    for s in samples {
        for &r in &s.inputs {
            data.extend_from_slice(&regime_one_hot(r));
        }
    }
    Tensor::new(vec![samples.len(), N_INPUT_WEEKS, N_CLASSES], data).expect("consistent sizes")
}

/// Index inputs `[n, 6, 13]`: regime one-hot, standardized SPV, MJO phase slots.
pub fn index_inputs(samples: &[&WindowSample], spv: &DatedSeries, mjo: &MjoSeries) -> Result<Tensor> {
    let mut data = Vec::with_capacity(samples.len() * N_INPUT_WEEKS * crate::models::INDEX_WIDTH);
    for s in samples {
        for (k, &day) in s.input_days.iter().enumerate() {
            let v = spv.get(day).ok_or_else(|| missing("SPV value", day))?;
            let m = mjo.get(day).ok_or_else(|| missing("MJO record", day))?;
            let step = index_step(s.inputs[k], v, m.phase);
            validate_index_step(&step)?;
            data.extend_from_slice(&step);
        }
    }
    Tensor::new(vec![samples.len(), N_INPUT_WEEKS, crate::models::INDEX_WIDTH], data)
}

/// Scale one vector to [0, 1] by its own minimum and maximum.
pub fn min_max(v: &[f64], eps: f64) -> Vec<f64> {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    v.iter().map(|x| (x - lo) / (hi - lo + eps)).collect()
}

pub const EMBEDDING_EPS: f64 = 1e-8;

/// Embedding inputs `[n, 6, 4 + sum of embedding sizes]`: regime one-hot
/// followed by each variable's min-max-scaled embedding. Not yet standardized.
pub fn embedding_inputs(samples: &[&WindowSample], embeddings: &[&HashMap<i64, Vec<f64>>]) -> Result<Tensor> {
    let width = N_CLASSES
        + embeddings
            .iter()
            .map(|e| e.values().next().map_or(0, Vec::len))
            .sum::<usize>();
    let mut data = Vec::with_capacity(samples.len() * N_INPUT_WEEKS * width);
    for s in samples {
        for (k, &day) in s.input_days.iter().enumerate() {
            data.extend_from_slice(&regime_one_hot(s.inputs[k]));
            for e in embeddings {
                let v = e.get(&day).ok_or_else(|| missing("embedding", day))?;
                data.extend(min_max(v, EMBEDDING_EPS));
            }
        }
    }
    Tensor::new(vec![samples.len(), N_INPUT_WEEKS, width], data)
}

/// Per-feature standardization fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureScaler {
    /// Statistics over every step of every row; constant features keep unit scale.
    pub fn fit(x: &Tensor) -> Result<Self> {
        let f = *x.shape().last().ok_or_else(|| Error::Shape("scaler needs features".into()))?;
        let rows = x.len() / f;
        if rows == 0 {
            return Err(Error::Empty("no rows to fit a scaler".into()));
        }
        let mut mean = vec![0.0; f];
        x.data().chunks(f).for_each(|r| mean.iter_mut().zip(r).for_each(|(m, v)| *m += v));
        mean.iter_mut().for_each(|m| *m /= rows as f64);
        let mut var = vec![0.0; f];
        x.data().chunks(f).for_each(|r| {
            var.iter_mut().zip(r).zip(&mean).for_each(|((a, v), m)| *a += (v - m).powi(2))
        });
        let std = var.into_iter().map(|v| (v / rows as f64).sqrt()).map(|s| if s > 1e-12 { s } else { 1.0 }).collect();
        Ok(Self { mean, std })
    }

    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        let f = self.mean.len();
        if x.shape().last() != Some(&f) {
            return Err(Error::Shape(format!("scaler for {f} features, input {:?}", x.shape())));
        }
        let data = x.data().iter().enumerate().map(|(i, v)| (v - self.mean[i % f]) / self.std[i % f]).collect();
        Tensor::new(x.shape().to_vec(), data)
    }
}

pub fn targets(samples: &[&WindowSample]) -> Vec<[u8; N_LEADS]> {
    samples.iter().map(|s| s.targets).collect()
}

pub fn by_split(samples: &[WindowSample], split: Split) -> Vec<&WindowSample> {
    samples.iter().filter(|s| s.split == split).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn min_max_bounds() {
        let v = min_max(&[2.0, 4.0, 3.0], 1e-8);
        assert_eq!(v[0], 0.0);
        assert!((v[1] - 1.0).abs() < 1e-7);
        assert!((v[2] - 0.5).abs() < 1e-7);
        assert!(min_max(&[1.0, 1.0], 1e-8).iter().all(|&x| x == 0.0));
    }
}
