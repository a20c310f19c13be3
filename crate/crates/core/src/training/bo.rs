//! Bayesian optimization with a Gaussian-process surrogate and expected improvement.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Diagonal jitter added to the kernel matrix.
pub const GP_JITTER: f64 = 1e-8;

/// Expected improvement of a Gaussian prediction over `best` (maximization):
/// (mu - best) Phi(z) + sigma phi(z), z = (mu - best) / sigma.
pub fn expected_improvement(mu: f64, sigma: f64, best: f64) -> f64 {
    if sigma <= 0.0 {
        return (mu - best).max(0.0);
    }
    let n = Normal::standard();
    let z = (mu - best) / sigma;
    (mu - best) * n.cdf(z) + sigma * n.pdf(z)
}

fn rbf(a: &[f64], b: &[f64], ls: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-0.5 * d2 / (ls * ls)).exp()
}

/// Zero-mean GP with unit-variance RBF kernel on standardized targets.
#[derive(Debug, Clone)]
pub struct GaussianProcess {
    x: Vec<Vec<f64>>,
    chol: Cholesky<f64, nalgebra::Dyn>,
    alpha: DVector<f64>,
    pub length_scale: f64,
    pub log_marginal_likelihood: f64,
    y_mean: f64,
    y_std: f64,
}

impl GaussianProcess {
    fn fit_with(x: &[Vec<f64>], z: &DVector<f64>, ls: f64) -> Option<(Cholesky<f64, nalgebra::Dyn>, DVector<f64>, f64)> {
        let n = x.len();
        let k = DMatrix::from_fn(n, n, |i, j| rbf(&x[i], &x[j], ls) + if i == j { GP_JITTER } else { 0.0 });
        let chol = Cholesky::new(k)?;
        let alpha = chol.solve(z);
        let logdet: f64 = chol.l().diagonal().iter().map(|d| d.ln()).sum();
        let lml = -0.5 * z.dot(&alpha) - logdet - 0.5 * n as f64 * std::f64::consts::TAU.ln();
        Some((chol, alpha, lml))
    }

    /// Fit, choosing the length scale from `grid` by marginal likelihood.
    pub fn fit(x: &[Vec<f64>], y: &[f64], grid: &[f64]) -> Result<Self> {
        if x.is_empty() || x.len() != y.len() {
            return Err(Error::Shape("GP needs matching, non-empty inputs and targets".into()));
        }
        let n = y.len() as f64;
        let y_mean = y.iter().sum::<f64>() / n;
        let y_std = (y.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / n).sqrt();
        if !(y_std > 0.0) {
            return Err(Error::Degenerate("all objective values are equal".into()));
        }
        let z = DVector::from_iterator(y.len(), y.iter().map(|v| (v - y_mean) / y_std));
        let mut best: Option<(f64, Cholesky<f64, nalgebra::Dyn>, DVector<f64>, f64)> = None;
        for &ls in grid {
            if let Some((c, a, lml)) = Self::fit_with(x, &z, ls) {
                if best.as_ref().is_none_or(|b| lml > b.3) {
                    best = Some((ls, c, a, lml));
                }
            }
        }
        let (length_scale, chol, alpha, lml) =
            best.ok_or_else(|| Error::Numeric("kernel matrix not positive definite for any length scale".into()))?;
        Ok(Self { x: x.to_vec(), chol, alpha, length_scale, log_marginal_likelihood: lml, y_mean, y_std })
    }

    /// Posterior mean and standard deviation in the original units.
    pub fn predict(&self, p: &[f64]) -> (f64, f64) {
        let k = DVector::from_iterator(self.x.len(), self.x.iter().map(|xi| rbf(xi, p, self.length_scale)));
        let mu = k.dot(&self.alpha);
        let v = self.chol.l().solve_lower_triangular(&k).expect("triangular solve");
        let var = (1.0 - v.dot(&v)).max(0.0);
        (self.y_mean + self.y_std * mu, self.y_std * var.sqrt())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoConfig {
    /// Random points evaluated before the surrogate is used.
    pub n_initial: usize,
    /// Total objective evaluations including the initial ones.
    pub n_steps: usize,
    pub seed: u64,
    pub n_candidates: usize,
    pub length_scales: Vec<f64>,
}

impl Default for BoConfig {
    fn default() -> Self {
        Self {
            n_initial: 5,
            n_steps: 20,
            seed: 0,
            n_candidates: 2000,
            length_scales: vec![0.05, 0.1, 0.2, 0.3, 0.5, 0.75, 1.0, 1.5, 2.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoResult {
    pub best_x: Vec<f64>,
    pub best_y: f64,
    /// Every evaluation in order, in the original parameter units.
    pub history: Vec<(Vec<f64>, f64)>,
}

fn from_unit(u: &[f64], bounds: &[(f64, f64)]) -> Vec<f64> {
    u.iter().zip(bounds).map(|(v, (lo, hi))| lo + v * (hi - lo)).collect()
}

/// Maximize `objective` over the box `bounds`.
pub fn bayes_opt<F>(bounds: &[(f64, f64)], cfg: &BoConfig, mut objective: F) -> Result<BoResult>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if bounds.is_empty() || bounds.iter().any(|(lo, hi)| !(hi > lo)) {
        return Err(Error::Config("every bound needs lo < hi".into()));
    }
    if cfg.n_steps == 0 || cfg.length_scales.is_empty() {
        return Err(Error::Config("BO needs at least one step and one length scale".into()));
    }
    let d = bounds.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut xs: Vec<Vec<f64>> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    let random_point = |rng: &mut ChaCha8Rng| (0..d).map(|_| rng.random::<f64>()).collect::<Vec<f64>>();
    let is_dup = |xs: &[Vec<f64>], u: &[f64]| {
        xs.iter().any(|x| x.iter().zip(u).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) < 1e-9)
    };
    for step in 0..cfg.n_steps {
        let u = if step < cfg.n_initial.max(1) {
            random_point(&mut rng)
        } else {
            match GaussianProcess::fit(&xs, &ys, &cfg.length_scales) {
                Ok(gp) => {
                    let best = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let mut cands: Vec<(f64, Vec<f64>)> = (0..cfg.n_candidates)
                        .map(|_| {
                            let c = random_point(&mut rng);
                            let (m, s) = gp.predict(&c);
                            (expected_improvement(m, s, best), c)
                        })
                        .collect();
                    cands.sort_by(|a, b| b.0.total_cmp(&a.0));
                    // Local refinement of the best few candidates.
                    for c in cands.iter_mut().take(5) {
                        let mut radius = 0.1;
                        for _ in 0..40 {
                            let trial: Vec<f64> =
                                c.1.iter().map(|v| (v + radius * (rng.random::<f64>() * 2.0 - 1.0)).clamp(0.0, 1.0)).collect();
                            let (m, s) = gp.predict(&trial);
                            let ei = expected_improvement(m, s, best);
                            if ei > c.0 {
                                *c = (ei, trial);
                            } else {
                                radius *= 0.85;
                            }
                        }
                    }
                    cands.sort_by(|a, b| b.0.total_cmp(&a.0));
                    cands
                        .into_iter()
                        .map(|(_, c)| c)
                        .find(|c| !is_dup(&xs, c))
                        .unwrap_or_else(|| random_point(&mut rng))
                }
                Err(Error::Degenerate(_)) => {
                    log::warn!("objective constant so far; falling back to a random point");
                    random_point(&mut rng)
                }
                Err(e) => return Err(e),
            }
        };
        let x = from_unit(&u, bounds);
        let y = objective(&x)?;
        if !y.is_finite() {
            return Err(Error::NonFinite(format!("objective returned {y} at {x:?}")));
        }
        xs.push(u);
        ys.push(y);
    }
    let (bi, &best_y) = ys.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0))).unwrap();
    Ok(BoResult {
        best_x: from_unit(&xs[bi], bounds),
        best_y,
        history: xs.iter().map(|u| from_unit(u, bounds)).zip(ys).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ei_reference_value() {
        assert!((expected_improvement(1.0, 1.0, 0.0) - 1.0833).abs() < 1e-4);
        assert_eq!(expected_improvement(0.5, 0.0, 0.0), 0.5);
    }

    #[test]
    fn gp_interpolates_training_points() {
        let x = vec![vec![0.1], vec![0.4], vec![0.9]];
        let y = vec![1.0, -2.0, 0.5];
        let gp = GaussianProcess::fit(&x, &y, &[0.2, 0.5]).unwrap();
        for (xi, yi) in x.iter().zip(&y) {
            let (m, s) = gp.predict(xi);
            assert!((m - yi).abs() < 1e-4, "{m} vs {yi}");
            assert!(s < 1e-3);
        }
    }

    #[test]
    fn finds_maximum_of_smooth_function() {
        let f = |x: &[f64]| Ok(-(x[0] - 0.3).powi(2) - (x[1] + 0.2).powi(2));
        let cfg = BoConfig { n_steps: 30, ..Default::default() };
        let r = bayes_opt(&[(-1.0, 1.0), (-1.0, 1.0)], &cfg, f).unwrap();
        assert!(r.best_y > -0.01, "{r:?}");
    }

    #[test]
    fn constant_objective_falls_back() {
        let cfg = BoConfig { n_steps: 8, ..Default::default() };
        let r = bayes_opt(&[(0.0, 1.0)], &cfg, |_| Ok(1.0)).unwrap();
        assert_eq!(r.history.len(), 8);
    }
}
