use super::graph::{Graph, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Norm-wise relative error of the analytic gradient of a scalar function
/// against central differences, one value per input tensor.
///
/// `build` must construct the same computation each time it is called; it is
/// evaluated in training mode with a fixed dropout seed so stochastic masks
/// repeat exactly.
pub fn gradient_check<F>(inputs: &[Tensor], h: f64, build: F) -> Result<Vec<f64>>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let eval = |xs: &[Tensor]| -> Result<f64> {
        let mut g = Graph::training(17, 0);
        let vars: Vec<Var> = xs.iter().map(|t| g.constant(t.clone())).collect();
        let out = build(&mut g, &vars)?;
        Ok(g.value(out).item())
    };
    let mut g = Graph::training(17, 0);
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let out = build(&mut g, &vars)?;
    if g.value(out).len() != 1 {
        return Err(Error::Shape("gradient check needs a scalar output".into()));
    }
    g.backward(out)?;

    let mut errors = Vec::with_capacity(inputs.len());
    let mut xs = inputs.to_vec();
    for (ti, &v) in vars.iter().enumerate() {
        let analytic = g.grad(v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; inputs[ti].len()]);
        let mut numeric = vec![0.0; inputs[ti].len()];
        for k in 0..inputs[ti].len() {
            let orig = xs[ti].data()[k];
            xs[ti].data_mut()[k] = orig + h;
            let fp = eval(&xs)?;
            xs[ti].data_mut()[k] = orig - h;
            let fm = eval(&xs)?;
            xs[ti].data_mut()[k] = orig;
            numeric[k] = (fp - fm) / (2.0 * h);
        }
        let diff = analytic.iter().zip(&numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let na = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
        let nn = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
        let denom = na.max(nn);
        errors.push(if denom < 1e-12 { diff } else { diff / denom });
    }
    Ok(errors)
}
