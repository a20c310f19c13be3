use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{ForecastRecord, Probs, N_CLASSES, N_LEADS};

/// Per lead week, a 4x4 table of counts indexed `[true][predicted]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionTensor {
    pub counts: [[[u64; N_CLASSES]; N_CLASSES]; N_LEADS],
}

fn argmax(p: &[f64; N_CLASSES]) -> usize {
    let mut best = 0;
    for k in 1..N_CLASSES {
        if p[k] > p[best] {
            best = k;
        }
    }
    best
}

/// A class-averaged score with the classes that were left out of the mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub value: f64,
    /// `None` marks an undefined per-class value, excluded from the aggregate.
    pub per_class: [Option<f64>; N_CLASSES],
}

impl ClassScore {
    pub fn excluded(&self) -> Vec<usize> {
        (0..N_CLASSES).filter(|&c| self.per_class[c].is_none()).collect()
    }
}

impl ConfusionTensor {
    pub fn zeros() -> Self {
        Self { counts: [[[0; N_CLASSES]; N_CLASSES]; N_LEADS] }
    }

    pub fn from_predictions(probs: &[Probs], targets: &[[u8; N_LEADS]]) -> Result<Self> {
        if probs.len() != targets.len() {
            return Err(Error::Shape(format!("{} forecasts for {} targets", probs.len(), targets.len())));
        }
        let mut c = Self::zeros();
        for (p, t) in probs.iter().zip(targets) {
            for w in 0..N_LEADS {
                let truth = t[w] as usize;
                if truth >= N_CLASSES {
                    return Err(Error::Validation(format!("target class {truth} out of range")));
                }
                c.counts[w][truth][argmax(&p[w])] += 1;
            }
        }
        Ok(c)
    }

    pub fn from_records(records: &[ForecastRecord]) -> Self {
        let mut c = Self::zeros();
        for r in records {
            for w in 0..N_LEADS {
                c.counts[w][r.targets[w] as usize][r.predicted(w) as usize] += 1;
            }
        }
        c
    }

    pub fn total(&self, week: usize) -> u64 {
        self.counts[week].iter().flatten().sum()
    }

    fn week(&self, week: usize) -> Result<&[[u64; N_CLASSES]; N_CLASSES]> {
        let m = self.counts.get(week).ok_or_else(|| Error::Argument(format!("lead week index {week} out of range")))?;
        if m.iter().flatten().sum::<u64>() == 0 {
            return Err(Error::Empty(format!("no samples at lead week {}", week + 1)));
        }
        Ok(m)
    }

    /// (TP, FP, FN, TN) for `class` in one-vs-all framing.
    pub fn one_vs_all(&self, week: usize, class: usize) -> Result<(u64, u64, u64, u64)> {
        let m = self.week(week)?;
        let tp = m[class][class];
        let fn_ = m[class].iter().sum::<u64>() - tp;
        let fp = (0..N_CLASSES).map(|t| m[t][class]).sum::<u64>() - tp;
        let total: u64 = m.iter().flatten().sum();
        Ok((tp, fp, fn_, total - tp - fp - fn_))
    }

    /// Mean over classes of the recall TP / (TP + FN); classes without
    /// support are excluded.
    pub fn balanced_accuracy(&self, week: usize) -> Result<ClassScore> {
        let mut per_class = [None; N_CLASSES];
        for (c, slot) in per_class.iter_mut().enumerate() {
            let (tp, _, fn_, _) = self.one_vs_all(week, c)?;
            if tp + fn_ > 0 {
                *slot = Some(tp as f64 / (tp + fn_) as f64);
            }
        }
        let defined: Vec<f64> = per_class.iter().flatten().copied().collect();
        Ok(ClassScore { value: defined.iter().sum::<f64>() / defined.len() as f64, per_class })
    }

    /// Critical success index TP / (TP + FP + FN) per class, aggregated with
    /// true-class support weights over the classes where it is defined.
    pub fn csi(&self, week: usize) -> Result<ClassScore> {
        let mut per_class = [None; N_CLASSES];
        let (mut num, mut den) = (0.0, 0.0);
        for (c, slot) in per_class.iter_mut().enumerate() {
            let (tp, fp, fn_, _) = self.one_vs_all(week, c)?;
            if tp + fp + fn_ > 0 {
                let v = tp as f64 / (tp + fp + fn_) as f64;
                *slot = Some(v);
                let support = (tp + fn_) as f64;
                num += support * v;
                den += support;
            }
        }
        let value = if den > 0.0 { num / den } else { f64::NAN };
        Ok(ClassScore { value, per_class })
    }

    /// One-vs-all accuracy (TP + TN) / total for `class`.
    pub fn classwise_accuracy(&self, week: usize, class: usize) -> Result<f64> {
        if class >= N_CLASSES {
            return Err(Error::Argument(format!("class {class} out of range")));
        }
        let (tp, fp, fn_, tn) = self.one_vs_all(week, class)?;
        Ok((tp + tn) as f64 / (tp + fp + fn_ + tn) as f64)
    }

    pub fn accuracy(&self, week: usize) -> Result<f64> {
        let m = self.week(week)?;
        let correct: u64 = (0..N_CLASSES).map(|c| m[c][c]).sum();
        Ok(correct as f64 / self.total(week) as f64)
    }
}

/// Balanced accuracy at each lead week.
pub fn balanced_accuracy_by_lead(probs: &[Probs], targets: &[[u8; N_LEADS]]) -> Result<[f64; N_LEADS]> {
    let c = ConfusionTensor::from_predictions(probs, targets)?;
    let mut out = [0.0; N_LEADS];
    for (w, o) in out.iter_mut().enumerate() {
        *o = c.balanced_accuracy(w)?.value;
    }
    Ok(out)
}

/// Expected calibration error over all (sample, week) pairs with `bins`
/// equal-width confidence bins.
pub fn expected_calibration_error(probs: &[Probs], targets: &[[u8; N_LEADS]], bins: usize) -> Result<f64> {
    if probs.len() != targets.len() || probs.is_empty() || bins == 0 {
        return Err(Error::Shape("calibration needs matching, non-empty forecasts and bins > 0".into()));
    }
    let mut count = vec![0usize; bins];
    let mut conf = vec![0.0; bins];
    let mut hits = vec![0.0; bins];
    for (p, t) in probs.iter().zip(targets) {
        for w in 0..N_LEADS {
            let k = argmax(&p[w]);
            let c = p[w][k];
            let b = ((c * bins as f64) as usize).min(bins - 1);
            count[b] += 1;
            conf[b] += c;
            hits[b] += f64::from(u8::from(k == t[w] as usize));
        }
    }
    let n = (probs.len() * N_LEADS) as f64;
    Ok((0..bins)
        .filter(|&b| count[b] > 0)
        .map(|b| (count[b] as f64 / n) * ((hits[b] - conf[b]) / count[b] as f64).abs())
        .sum())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeekSkill {
    pub lead_week: usize,
    pub n: u64,
    pub accuracy: f64,
    pub balanced_accuracy: ClassScore,
    pub csi: ClassScore,
    pub classwise_accuracy: [f64; N_CLASSES],
}

/// Metrics report for one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillReport {
    pub model: String,
    pub weeks: Vec<WeekSkill>,
    pub ece: Option<f64>,
}

impl SkillReport {
    pub fn from_predictions(model: &str, probs: &[Probs], targets: &[[u8; N_LEADS]]) -> Result<Self> {
        let conf = ConfusionTensor::from_predictions(probs, targets)?;
        let mut weeks = Vec::with_capacity(N_LEADS);
        for w in 0..N_LEADS {
            let mut cw = [0.0; N_CLASSES];
            for (c, v) in cw.iter_mut().enumerate() {
                *v = conf.classwise_accuracy(w, c)?;
            }
            weeks.push(WeekSkill {
                lead_week: w + 1,
                n: conf.total(w),
                accuracy: conf.accuracy(w)?,
                balanced_accuracy: conf.balanced_accuracy(w)?,
                csi: conf.csi(w)?,
                classwise_accuracy: cw,
            });
        }
        let ece = Some(expected_calibration_error(probs, targets, 10)?);
        Ok(Self { model: model.to_string(), weeks, ece })
    }

    pub fn balanced_accuracy(&self) -> Vec<f64> {
        self.weeks.iter().map(|w| w.balanced_accuracy.value).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn week0(m: [[u64; 4]; 4]) -> ConfusionTensor {
        let mut c = ConfusionTensor::zeros();
        for w in 0..N_LEADS {
            c.counts[w] = m;
        }
        c
    }

    #[test]
    fn single_class_predictor() {
        let c = week0([[5, 0, 0, 0], [3, 0, 0, 0], [2, 0, 0, 0], [7, 0, 0, 0]]);
        assert_eq!(c.balanced_accuracy(0).unwrap().value, 0.25);
        // Class 1 is never predicted; its frequency is 3/17.
        assert!((c.classwise_accuracy(0, 1).unwrap() - (1.0 - 3.0 / 17.0)).abs() < 1e-15);
    }

    #[test]
    fn csi_arithmetic() {
        // Class 0: TP 2, FN 1 (true 0 predicted 1), FP 1 (true 2 predicted 0).
        let c = week0([[2, 1, 0, 0], [0, 3, 0, 0], [1, 0, 4, 0], [0, 0, 0, 5]]);
        assert_eq!(c.csi(0).unwrap().per_class[0], Some(0.5));
    }

    #[test]
    fn missing_class_is_flagged() {
        let c = week0([[2, 0, 0, 0], [0, 3, 0, 0], [0, 0, 4, 0], [0, 0, 0, 0]]);
        let b = c.balanced_accuracy(0).unwrap();
        assert_eq!(b.value, 1.0);
        assert_eq!(b.excluded(), vec![3]);
        assert!(ConfusionTensor::zeros().balanced_accuracy(0).is_err());
    }

    #[test]
    fn ece_of_perfectly_calibrated_bins() {
        let p = [[0.25; 4]; N_LEADS];
        let probs = vec![p; 4];
        let targets = vec![[0; 6], [1; 6], [2; 6], [3; 6]];
        assert!(expected_calibration_error(&probs, &targets, 10).unwrap().abs() < 1e-15);
    }
}
