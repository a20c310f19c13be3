use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridstore::GriddedField;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EofWeighting {
    #[default]
    None,
    /// Scale each grid point by sqrt(cos(latitude)) before decomposition.
    SqrtCosLat,
}

/// Leading empirical orthogonal functions of a field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EofBasis {
    pub n_eof: usize,
    pub lats: Vec<f64>,
    pub lons: Vec<f64>,
    /// Per grid point weight applied before projection.
    pub weights: Vec<f64>,
    /// Row-major `n_eof x grid` matrix of orthonormal components.
    pub components: Vec<f64>,
    pub explained_variance_ratio: Vec<f64>,
}

impl EofBasis {
    pub fn grid_len(&self) -> usize {
        self.lats.len() * self.lons.len()
    }

    pub fn component(&self, k: usize) -> &[f64] {
        let g = self.grid_len();
        &self.components[k * g..(k + 1) * g]
    }

    pub(crate) fn check_grid(&self, lats: &[f64], lons: &[f64]) -> Result<()> {
        let same = |a: &[f64], b: &[f64]| a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-9);
        if !same(&self.lats, lats) || !same(&self.lons, lons) {
            return Err(Error::Shape("field grid differs from the EOF grid".into()));
        }
        Ok(())
    }
}

fn grid_weights(lats: &[f64], nlon: usize, weighting: EofWeighting) -> Vec<f64> {
    lats.iter()
        .flat_map(|&lat| {
            let w = match weighting {
                EofWeighting::None => 1.0,
                EofWeighting::SqrtCosLat => lat.to_radians().cos().max(0.0).sqrt(),
            };
            std::iter::repeat_n(w, nlon)
        })
        .collect()
}

/// Fit `n_eof` components of a field after removing its temporal mean.
pub fn fit_eof(field: &GriddedField, n_eof: usize, weighting: EofWeighting) -> Result<EofBasis> {
    let t = field.ntime();
    let g = field.grid_len();
    if n_eof == 0 || n_eof > t.min(g) {
        return Err(Error::Argument(format!("cannot fit {n_eof} EOFs from {t} times x {g} points")));
    }
    let weights = grid_weights(field.lats(), field.lons().len(), weighting);
    let mut mean = vec![0.0; g];
    for i in 0..t {
        mean.iter_mut().zip(field.map(i)).for_each(|(m, &v)| *m += v as f64);
    }
    mean.iter_mut().for_each(|m| *m /= t as f64);
    let x = DMatrix::from_fn(t, g, |i, j| (field.map(i)[j] as f64 - mean[j]) * weights[j]);
    let total: f64 = x.iter().map(|v| v * v).sum();
    if total <= 0.0 {
        return Err(Error::Degenerate("field has no variance".into()));
    }

    let mut comps: Vec<Vec<f64>> = Vec::with_capacity(n_eof);
    let mut lambdas = Vec::with_capacity(n_eof);
    if g <= t {
        let eig = SymmetricEigen::new(x.transpose() * &x);
        let mut order: Vec<usize> = (0..g).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        for &k in order.iter().take(n_eof) {
            lambdas.push(eig.eigenvalues[k]);
            comps.push(eig.eigenvectors.column(k).iter().copied().collect());
        }
    } else {
        let eig = SymmetricEigen::new(&x * x.transpose());
        let mut order: Vec<usize> = (0..t).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        for &k in order.iter().take(n_eof) {
            let lam = eig.eigenvalues[k];
            lambdas.push(lam);
            let v = x.transpose() * eig.eigenvectors.column(k);
            comps.push(v.iter().map(|c| c / lam.max(f64::MIN_POSITIVE).sqrt()).collect());
        }
        // Two passes of Gram-Schmidt remove the rounding left by the Gram route.
        for _ in 0..2 {
            for i in 0..comps.len() {
                for j in 0..i {
                    let d: f64 = comps[i].iter().zip(&comps[j]).map(|(a, b)| a * b).sum();
                    let cj = comps[j].clone();
                    comps[i].iter_mut().zip(&cj).for_each(|(a, b)| *a -= d * b);
                }
                let n = comps[i].iter().map(|a| a * a).sum::<f64>().sqrt();
                comps[i].iter_mut().for_each(|a| *a /= n);
            }
        }
    }
    let lmax = lambdas[0];
    if lambdas.iter().any(|&l| l <= 1e-12 * lmax) {
        return Err(Error::Degenerate(format!("field rank is below the {n_eof} requested EOFs")));
    }
    for c in comps.iter_mut() {
        let big = c.iter().copied().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
        if big < 0.0 {
            c.iter_mut().for_each(|v| *v = -*v);
        }
    }
    Ok(EofBasis {
        n_eof,
        lats: field.lats().to_vec(),
        lons: field.lons().to_vec(),
        weights,
        components: comps.concat(),
        explained_variance_ratio: lambdas.iter().map(|l| l / total).collect(),
    })
}

/// Project every map of a field onto the basis: one coefficient row per time.
pub fn project(field: &GriddedField, basis: &EofBasis) -> Result<Vec<Vec<f64>>> {
    basis.check_grid(field.lats(), field.lons())?;
    Ok((0..field.ntime())
        .map(|t| project_map(field.map(t), basis))
        .collect())
}

pub(crate) fn project_map(map: &[f32], basis: &EofBasis) -> Vec<f64> {
    (0..basis.n_eof)
        .map(|k| {
            basis
                .component(k)
                .iter()
                .zip(map)
                .zip(&basis.weights)
                .map(|((c, &v), w)| c * v as f64 * w)
                .sum()
        })
        .collect()
}

/// Map a coefficient vector back to grid space.
pub fn reconstruct(coeffs: &[f64], basis: &EofBasis) -> Vec<f64> {
    let g = basis.grid_len();
    let mut out = vec![0.0; g];
    for (k, c) in coeffs.iter().enumerate().take(basis.n_eof) {
        out.iter_mut().zip(basis.component(k)).for_each(|(o, v)| *o += c * v);
    }
    out.iter_mut().zip(&basis.weights).for_each(|(o, w)| *o = if *w > 0.0 { *o / w } else { 0.0 });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(t: usize, nlat: usize, nlon: usize, seed: u64) -> GriddedField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lats = (0..nlat).map(|i| 30.0 + 5.0 * i as f64).collect();
        let lons = (0..nlon).map(|j| -40.0 + 5.0 * j as f64).collect();
        let v = (0..t * nlat * nlon).map(|_| rng.random_range(-1.0..1.0f32)).collect();
        GriddedField::new("z", "m", (0..t as i64).collect(), lats, lons, v).unwrap()
    }

    fn check_orthonormal(b: &EofBasis) {
        for i in 0..b.n_eof {
            for j in 0..b.n_eof {
                let d: f64 = b.component(i).iter().zip(b.component(j)).map(|(a, c)| a * c).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((d - want).abs() < 1e-8, "gram[{i},{j}] = {d}");
            }
        }
    }

    #[test]
    fn both_routes_give_orthonormal_bases() {
        let tall = fit_eof(&random_field(60, 3, 4, 1), 5, EofWeighting::None).unwrap();
        check_orthonormal(&tall);
        let wide = fit_eof(&random_field(10, 5, 6, 2), 6, EofWeighting::SqrtCosLat).unwrap();
        check_orthonormal(&wide);
        assert!(wide.explained_variance_ratio.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn component_projects_to_unit_vector() {
        let f = random_field(40, 3, 4, 3);
        let b = fit_eof(&f, 4, EofWeighting::None).unwrap();
        let map: Vec<f32> = b.component(2).iter().map(|&v| v as f32).collect();
        let c = project_map(&map, &b);
        for (k, v) in c.iter().enumerate() {
            assert!((v - if k == 2 { 1.0 } else { 0.0 }).abs() < 1e-6);
        }
    }

    #[test]
    fn rank_deficiency_is_degenerate() {
        let lats = vec![0.0, 1.0];
        let lons = vec![0.0, 1.0];
        let v: Vec<f32> = (0..20).map(|i| [1.0, 2.0, 3.0, 4.0][i % 4] * (i / 4) as f32).collect();
        let f = GriddedField::new("z", "m", (0..5).collect(), lats, lons, v).unwrap();
        assert!(matches!(fit_eof(&f, 3, EofWeighting::None), Err(Error::Degenerate(_))));
    }
}
