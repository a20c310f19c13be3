use serde::{Deserialize, Serialize};

use super::{Probs, N_CLASSES, N_INPUT_WEEKS, N_LEADS};
use crate::error::{Error, Result};

/// One forecast: probabilities for six lead weeks plus the verifying
/// targets and the regime history that was fed in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRecord {
    /// Date of the most recent input week.
    pub anchor: i64,
    pub member: u64,
    pub probs: Probs,
    pub targets: [u8; N_LEADS],
    /// Input regimes, oldest first; the last entry is the anchor week.
    pub inputs: [u8; N_INPUT_WEEKS],
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

impl ForecastRecord {
    pub fn new(anchor: i64, member: u64, probs: Probs, targets: [u8; N_LEADS], inputs: [u8; N_INPUT_WEEKS]) -> Result<Self> {
        for row in &probs {
            let s: f64 = row.iter().sum();
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) || (s - 1.0).abs() > 1e-6 {
                return Err(Error::Validation(format!("probabilities {row:?} do not form a distribution")));
            }
        }
        if targets.iter().chain(&inputs).any(|&c| c as usize >= N_CLASSES) {
            return Err(Error::Validation("class label out of range".into()));
        }
        Ok(Self { anchor, member, probs, targets, inputs })
    }

    /// Predicted class at lead week `lead` (0-based); ties go to the lowest class.
    pub fn predicted(&self, lead: usize) -> u8 {
        argmax(&self.probs[lead]) as u8
    }

    pub fn confidence(&self, lead: usize) -> f64 {
        self.probs[lead][argmax(&self.probs[lead])]
    }

    pub fn correct(&self, lead: usize) -> bool {
        self.predicted(lead) == self.targets[lead]
    }

    /// Regime of input week `t - j` (j = 0 is the anchor week).
    pub fn input_lag(&self, j: usize) -> u8 {
        self.inputs[N_INPUT_WEEKS - 1 - j]
    }
}
