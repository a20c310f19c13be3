use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::models::{N_CLASSES, N_LEADS};
use crate::tensorgrad::{Graph, Tensor, Var};

/// Focusing parameter used while the true-class probability is below
/// [`ADAPTIVE_SWITCH`], and above it.
pub const ADAPTIVE_GAMMA_LOW_P: f64 = 5.0;
pub const ADAPTIVE_GAMMA_HIGH_P: f64 = 3.0;
pub const ADAPTIVE_SWITCH: f64 = 0.2;
/// Floor applied to probabilities before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    CrossEntropy,
    Focal { gamma: f64 },
    /// Focal loss whose gamma depends on the true-class probability.
    AdaptiveFocal,
}

impl LossKind {
    pub fn gamma_for(self, p_true: f64) -> f64 {
        match self {
            LossKind::CrossEntropy => 0.0,
            LossKind::Focal { gamma } => gamma,
            LossKind::AdaptiveFocal => {
                if p_true < ADAPTIVE_SWITCH {
                    ADAPTIVE_GAMMA_LOW_P
                } else {
                    ADAPTIVE_GAMMA_HIGH_P
                }
            }
        }
    }
}

/// Per-element focal loss -(1 - p)^gamma ln p. Returns the value and whether
/// `p` had to be floored.
pub fn focal_term(p_true: f64, kind: LossKind) -> (f64, bool) {
    let clamped = p_true < PROB_FLOOR;
    let p = p_true.max(PROB_FLOOR);
    let gamma = kind.gamma_for(p_true);
    ((1.0 - p).powf(gamma) * -p.ln(), clamped)
}

/// Mean focal loss of probability rows against integer targets, with the
/// number of floored probabilities.
pub fn focal_loss_value(probs: &[[f64; N_CLASSES]], targets: &[u8], kind: LossKind) -> (f64, usize) {
    let mut total = 0.0;
    let mut clamped = 0;
    for (row, &t) in probs.iter().zip(targets) {
        let (v, c) = focal_term(row[t as usize], kind);
        total += v;
        clamped += c as usize;
    }
    (total / probs.len().max(1) as f64, clamped)
}

/// Mean loss over all samples and lead weeks for logits `[batch, 6, 4]`.
/// Gamma is chosen from the current probability value; the weight
/// (1 - p)^gamma itself is differentiated.
pub fn sequence_loss(g: &mut Graph, logits: Var, targets: &[[u8; N_LEADS]], kind: LossKind) -> Result<Var> {
    let b = targets.len();
    let onehot = Tensor::from_fn(&[b, N_LEADS, N_CLASSES], |i| {
        let (r, rest) = (i / (N_LEADS * N_CLASSES), i % (N_LEADS * N_CLASSES));
        (targets[r][rest / N_CLASSES] as usize == rest % N_CLASSES) as u8 as f64
    });
    let lp = g.log_softmax(logits, 2)?;
    let oh = g.constant(onehot);
    let picked = g.mul(lp, oh)?;
    let logp = g.sum_axis(picked, 2)?;
    let weighted = if kind == LossKind::CrossEntropy {
        logp
    } else {
        let p = g.exp(logp);
        let q = g.scale(p, -1.0);
        let q = g.add_scalar(q, 1.0);
        let pv: Vec<f64> = g.value(p).data().to_vec();
        let gammas: Vec<f64> = pv.iter().map(|&x| kind.gamma_for(x)).collect();
        let w = pow_per_element(g, q, &gammas)?;
        g.mul(w, logp)?
    };
    let m = g.mean(weighted);
    Ok(g.scale(m, -1.0))
}

/// q^gamma elementwise; integer exponents use repeated products so q = 0 is safe.
fn pow_per_element(g: &mut Graph, q: Var, gammas: &[f64]) -> Result<Var> {
    let integral = gammas.iter().all(|x| x.fract() == 0.0 && *x >= 0.0 && *x <= 16.0);
    let shape = g.shape(q).to_vec();
    if integral {
        let max = gammas.iter().fold(0.0f64, |a, &b| a.max(b)) as usize;
        let mut power = g.constant(Tensor::full(&shape, 1.0));
        let mut result = g.constant(Tensor::zeros(&shape));
        for k in 0..=max {
            if k > 0 {
                power = g.mul(power, q)?;
            }
            let mask = Tensor::new(shape.clone(), gammas.iter().map(|&x| (x as usize == k) as u8 as f64).collect())?;
            if mask.data().iter().any(|&m| m > 0.0) {
                let mv = g.constant(mask);
                let term = g.mul(power, mv)?;
                result = g.add(result, term)?;
            }
        }
        Ok(result)
    } else {
        let qs = g.add_scalar(q, PROB_FLOOR);
        let lq = g.log(qs);
        let gm = g.constant(Tensor::new(shape, gammas.to_vec())?);
        let e = g.mul(lq, gm)?;
        Ok(g.exp(e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn documented_value() {
        let (v, c) = focal_term(0.5, LossKind::Focal { gamma: 3.0 });
        assert!((v - 0.125 * 2f64.ln()).abs() < 1e-15);
        assert!(!c);
        assert!((v - 0.08664).abs() < 1e-5);
    }

    #[test]
    fn adaptive_switches_gamma() {
        assert_eq!(LossKind::AdaptiveFocal.gamma_for(0.1), 5.0);
        assert_eq!(LossKind::AdaptiveFocal.gamma_for(0.2), 3.0);
        let (_, c) = focal_term(0.0, LossKind::AdaptiveFocal);
        assert!(c);
    }

    #[test]
    fn graph_loss_matches_value() {
        let logits = Tensor::from_fn(&[2, N_LEADS, N_CLASSES], |i| ((i * 7) % 5) as f64 * 0.3 - 0.4);
        let targets = [[0, 1, 2, 3, 0, 1], [3, 3, 2, 1, 0, 0]];
        for kind in [LossKind::CrossEntropy, LossKind::Focal { gamma: 2.5 }, LossKind::AdaptiveFocal] {
            let mut g = Graph::new();
            let z = g.constant(logits.clone());
            let l = sequence_loss(&mut g, z, &targets, kind).unwrap();
            let sm = g.softmax(z, 2).unwrap();
            let rows: Vec<[f64; 4]> = g.value(sm).data().chunks(4).map(|c| [c[0], c[1], c[2], c[3]]).collect();
            let flat: Vec<u8> = targets.iter().flatten().copied().collect();
            let (want, _) = focal_loss_value(&rows, &flat, kind);
            assert!((g.value(l).item() - want).abs() < 1e-9, "{kind:?}");
        }
    }
}
