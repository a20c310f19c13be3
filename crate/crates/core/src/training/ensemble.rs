use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Result of one ensemble member; failures are kept rather than aborting the run.
#[derive(Debug, Clone)]
pub struct MemberOutcome<T> {
    pub member: usize,
    pub seed: u64,
    pub result: std::result::Result<T, String>,
}

/// Seed of member `m`.
pub fn member_seed(seed_base: u64, m: usize) -> u64 {
    seed_base.wrapping_add(m as u64)
}

/// Run `members` independent jobs on at most `jobs` threads. Member `m`
/// receives seed `seed_base + m`; results come back in member order.
pub fn run_ensemble<T, F>(members: usize, seed_base: u64, jobs: usize, f: F) -> Result<Vec<MemberOutcome<T>>>
where
    T: Send,
    F: Fn(usize, u64) -> Result<T> + Sync,
{
    if members == 0 || jobs == 0 {
        return Err(Error::Argument("members and jobs must be positive".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(|| {
        (0..members)
            .into_par_iter()
            .map(|m| {
                let seed = member_seed(seed_base, m);
                let result = f(m, seed).map_err(|e| {
                    log::warn!("ensemble member {m} (seed {seed}) failed: {e}");
                    e.to_string()
                });
                MemberOutcome { member: m, seed, result }
            })
            .collect()
    }))
}

/// Mean and population standard deviation across members, per component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub members_ok: usize,
    pub members_failed: usize,
}

pub fn summarize(values: &[Vec<f64>], failed: usize) -> Result<EnsembleSummary> {
    let first = values.first().ok_or_else(|| Error::Empty("no successful members".into()))?;
    let d = first.len();
    if values.iter().any(|v| v.len() != d) {
        return Err(Error::Shape("member metrics differ in length".into()));
    }
    let n = values.len() as f64;
    let mean: Vec<f64> = (0..d).map(|j| values.iter().map(|v| v[j]).sum::<f64>() / n).collect();
    let std = (0..d)
        .map(|j| (values.iter().map(|v| (v[j] - mean[j]).powi(2)).sum::<f64>() / n).sqrt())
        .collect();
    Ok(EnsembleSummary { mean, std, members_ok: values.len(), members_failed: failed })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn failures_are_recorded_and_order_kept() {
        let out = run_ensemble(5, 10, 2, |m, seed| {
            if m == 3 {
                Err(Error::Numeric("boom".into()))
            } else {
                Ok(seed * 2)
            }
        })
        .unwrap();
        assert_eq!(out.iter().map(|o| o.seed).collect::<Vec<_>>(), vec![10, 11, 12, 13, 14]);
        assert!(out[3].result.is_err());
        assert_eq!(out[4].result, Ok(28));
    }

    #[test]
    fn summary_statistics() {
        let s = summarize(&[vec![1.0, 2.0], vec![3.0, 2.0]], 1).unwrap();
        assert_eq!(s.mean, vec![2.0, 2.0]);
        assert_eq!(s.std, vec![1.0, 0.0]);
        assert_eq!(s.members_failed, 1);
    }
}
