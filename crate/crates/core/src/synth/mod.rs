//! Synthetic winters with planted driver-to-regime teleconnections.
//!
//! Regimes, the SPV index and the MJO evolve in weekly blocks. Block `b` of a
//! winter covers days `7b - 6 ..= 7b` counted from the first day of the
//! extended winter, so block ends fall on the dates sampled by weekly windows.
//! The regime of block `b` is drawn from the base transition matrix with its
//! off-diagonal entries reweighted by the SPV at block `b - L_spv` and the MJO
//! at block `b - L_mjo`.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calendar;
use crate::drivers::{MjoRecord, MjoSeries, MJO_ACTIVE_THRESHOLD};
use crate::error::{Error, Result};
use crate::gridstore::{write_grid, write_series_csv, DatedSeries, GriddedField};
use crate::models::N_CLASSES;
use crate::regimes::RegimeSeries;

/// Days emitted before the first day of each extended winter.
pub const PAD_DAYS: i64 = 6;

/// Regular latitude/longitude grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lat0: f64,
    pub dlat: f64,
    pub nlat: usize,
    pub lon0: f64,
    pub dlon: f64,
    pub nlon: usize,
}

impl GridSpec {
    pub fn lats(&self) -> Vec<f64> {
        (0..self.nlat).map(|i| self.lat0 + self.dlat * i as f64).collect()
    }

    pub fn lons(&self) -> Vec<f64> {
        (0..self.nlon).map(|i| self.lon0 + self.dlon * i as f64).collect()
    }

    pub fn len(&self) -> usize {
        self.nlat * self.nlon
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Gaussian bump used to build regime patterns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Blob {
    pub lat: f64,
    pub lon: f64,
    /// Signed amplitude in field units.
    pub amplitude: f64,
    /// Width in degrees.
    pub width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    pub seed: u64,
    /// November year of the first winter.
    pub start_year: i32,
    /// Base regime transition matrix, rows sum to one.
    pub transition: [[f64; N_CLASSES]; N_CLASSES],
    /// AR(1) coefficient of the weekly SPV process (unit stationary variance).
    pub spv_phi: f64,
    /// Weekly persistence of the MJO amplitude process.
    pub mjo_rho: f64,
    /// Eastward propagation of the MJO in degrees per week.
    pub mjo_omega_deg: f64,
    /// Stationary RMS of each RMM component.
    pub mjo_amplitude: f64,
    /// Overall modulation strength; 0 switches the teleconnections off.
    pub strength: f64,
    /// Response of each regime to a weak vortex (negative SPV anomaly).
    pub spv_loadings: [f64; N_CLASSES],
    /// Response to an active MJO aligned with `mjo_angles_deg`.
    pub mjo_gain: f64,
    /// RMM phase angle favouring each regime.
    pub mjo_angles_deg: [f64; N_CLASSES],
    /// Weeks between the SPV and the regime it influences.
    pub lag_spv: usize,
    pub lag_mjo: usize,
    /// Regime patterns on the geopotential grid, one list of bumps per regime.
    pub patterns: [Vec<Blob>; N_CLASSES],
    /// Standard deviation of the spatially smoothed daily noise.
    pub field_noise: f64,
    pub z500_grid: GridSpec,
    pub u10_grid: GridSpec,
    pub olr_grid: GridSpec,
    /// Vortex-ring wind per unit SPV anomaly.
    pub spv_wind_scale: f64,
    pub u10_noise: f64,
    pub olr_scale: f64,
    pub olr_noise: f64,
    /// Amplitude of the seasonal cycle added to the geopotential field.
    pub seasonal_amplitude: f64,
}

fn symmetric_chain(p_self: f64) -> [[f64; N_CLASSES]; N_CLASSES] {
    let off = (1.0 - p_self) / (N_CLASSES - 1) as f64;
    std::array::from_fn(|i| std::array::from_fn(|j| if i == j { p_self } else { off }))
}

fn blob(lat: f64, lon: f64, amplitude: f64, width: f64) -> Blob {
    Blob { lat, lon, amplitude, width }
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            start_year: 1980,
            transition: symmetric_chain(0.55),
            spv_phi: 0.5,
            mjo_rho: 0.97,
            mjo_omega_deg: 45.0,
            mjo_amplitude: 1.5,
            strength: 0.5,
            spv_loadings: [-8.0, 8.0, 0.0, -4.0],
            mjo_gain: 8.0,
            mjo_angles_deg: [-45.0, 135.0, -135.0, 45.0],
            lag_spv: 3,
            lag_mjo: 2,
            patterns: [
                vec![blob(66.0, -30.0, -120.0, 12.0), blob(40.0, -25.0, 100.0, 12.0)],
                vec![blob(66.0, -35.0, 130.0, 12.0), blob(42.0, -30.0, -80.0, 12.0)],
                vec![blob(62.0, 15.0, 120.0, 12.0), blob(40.0, -45.0, -50.0, 12.0)],
                vec![blob(52.0, -25.0, 110.0, 11.0), blob(70.0, 20.0, -60.0, 12.0)],
            ],
            field_noise: 30.0,
            z500_grid: GridSpec { lat0: 24.0, dlat: 8.0, nlat: 8, lon0: -80.0, dlon: 4.5, nlon: 32 },
            u10_grid: GridSpec { lat0: 44.0, dlat: 4.0, nlat: 8, lon0: 0.0, dlon: 11.25, nlon: 32 },
            olr_grid: GridSpec { lat0: -17.5, dlat: 5.0, nlat: 8, lon0: 0.0, dlon: 11.25, nlon: 32 },
            spv_wind_scale: 10.0,
            u10_noise: 2.0,
            olr_scale: 15.0,
            olr_noise: 5.0,
            seasonal_amplitude: 50.0,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        for (i, row) in self.transition.iter().enumerate() {
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) || (row.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(Error::Config(format!("transition row {i} is not a probability distribution")));
            }
            if row[i] >= 1.0 && self.strength != 0.0 {
                return Err(Error::Config(format!("regime {i} is absorbing")));
            }
        }
        if !(self.spv_phi.abs() < 1.0) || !(0.0..1.0).contains(&self.mjo_rho) {
            return Err(Error::Config("driver persistence must lie in (-1, 1) and [0, 1)".into()));
        }
        let finite = [
            self.mjo_omega_deg,
            self.mjo_amplitude,
            self.strength,
            self.mjo_gain,
            self.field_noise,
            self.spv_wind_scale,
            self.u10_noise,
            self.olr_scale,
            self.olr_noise,
            self.seasonal_amplitude,
        ];
        if finite.iter().any(|v| !v.is_finite()) || self.field_noise < 0.0 || self.u10_noise < 0.0 || self.olr_noise < 0.0 {
            return Err(Error::Config("non-finite or negative scale".into()));
        }
        for g in [&self.z500_grid, &self.u10_grid, &self.olr_grid] {
            if g.nlat < 2 || g.nlon < 2 || !(g.dlat > 0.0) || !(g.dlon > 0.0) {
                return Err(Error::Config("grids need at least 2x2 points with positive spacing".into()));
            }
            if g.lats().iter().any(|l| l.abs() > 90.0) {
                return Err(Error::Config("grid latitude outside [-90, 90]".into()));
            }
        }
        let maps = self.pattern_maps();
        for a in 0..N_CLASSES {
            for b in a + 1..N_CLASSES {
                let c = cosine(&maps[a], &maps[b]);
                if !(c.abs() < 0.99) {
                    return Err(Error::Config(format!("patterns {a} and {b} are collinear (cosine {c:.3})")));
                }
            }
        }
        Ok(())
    }

    /// Regime patterns evaluated on the geopotential grid.
    pub fn pattern_maps(&self) -> Vec<Vec<f64>> {
        let (lats, lons) = (self.z500_grid.lats(), self.z500_grid.lons());
        self.patterns
            .iter()
            .map(|blobs| {
                lats.iter()
                    .flat_map(|&la| lons.iter().map(move |&lo| (la, lo)))
                    .map(|(la, lo)| {
                        blobs
                            .iter()
                            .map(|b| b.amplitude * (-((la - b.lat).powi(2) + (lo - b.lon).powi(2)) / (2.0 * b.width * b.width)).exp())
                            .sum()
                    })
                    .collect()
            })
            .collect()
    }

    /// Stationary distribution of the base chain.
    pub fn stationary(&self) -> [f64; N_CLASSES] {
        stationary(&self.transition)
    }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

pub fn stationary(p: &[[f64; N_CLASSES]; N_CLASSES]) -> [f64; N_CLASSES] {
    let mut pi = [1.0 / N_CLASSES as f64; N_CLASSES];
    for _ in 0..10_000 {
        let next: [f64; N_CLASSES] = std::array::from_fn(|j| (0..N_CLASSES).map(|i| pi[i] * p[i][j]).sum());
        let done = next.iter().zip(&pi).all(|(a, b)| (a - b).abs() < 1e-15);
        pi = next;
        if done {
            break;
        }
    }
    pi
}

/// `k`-step transition matrix of the base chain.
pub fn k_step(p: &[[f64; N_CLASSES]; N_CLASSES], k: usize) -> [[f64; N_CLASSES]; N_CLASSES] {
    let mut m: [[f64; N_CLASSES]; N_CLASSES] = std::array::from_fn(|i| std::array::from_fn(|j| f64::from(u8::from(i == j))));
    for _ in 0..k {
        m = std::array::from_fn(|i| std::array::from_fn(|j| (0..N_CLASSES).map(|l| m[i][l] * p[l][j]).sum()));
    }
    m
}

/// Accuracy of persistence at lead `k` on the stationary base chain.
pub fn persistence_accuracy(p: &[[f64; N_CLASSES]; N_CLASSES], k: usize) -> f64 {
    let pi = stationary(p);
    let m = k_step(p, k);
    (0..N_CLASSES).map(|i| pi[i] * m[i][i]).sum()
}

/// MJO modulation term for each regime.
fn mjo_term(cfg: &WorldConfig, rmm1: f64, rmm2: f64) -> [f64; N_CLASSES] {
    let amp = rmm1.hypot(rmm2);
    if amp < MJO_ACTIVE_THRESHOLD {
        return [0.0; N_CLASSES];
    }
    let ang = rmm2.atan2(rmm1);
    std::array::from_fn(|k| cfg.mjo_gain * amp.min(2.5) * (ang - cfg.mjo_angles_deg[k].to_radians()).cos())
}

/// Transition probabilities out of `prev` given the lagged drivers. The
/// self-transition keeps its base value; the remaining mass is shared among
/// the other regimes in proportion to their base probability times
/// `exp(strength * (loading * (-spv) + mjo term))`.
pub fn transition_row(cfg: &WorldConfig, prev: u8, spv: f64, rmm1: f64, rmm2: f64) -> [f64; N_CLASSES] {
    let base = cfg.transition[prev as usize];
    let m = mjo_term(cfg, rmm1, rmm2);
    let mut row: [f64; N_CLASSES] =
        std::array::from_fn(|k| base[k] * (cfg.strength * (cfg.spv_loadings[k] * -spv + m[k])).exp());
    let p = prev as usize;
    row[p] = 0.0;
    let off: f64 = row.iter().sum();
    if off > 0.0 {
        row.iter_mut().for_each(|v| *v *= (1.0 - base[p]) / off);
    }
    row[p] = base[p];
    row
}

/// One weekly block of a synthetic winter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockRecord {
    pub winter: i32,
    pub block: usize,
    /// Last day of the block.
    pub day: i64,
    pub regime: u8,
    pub spv: f64,
    pub rmm1: f64,
    pub rmm2: f64,
    /// Distribution the regime of this block was drawn from.
    pub row: [f64; N_CLASSES],
    /// Lagged drivers that shaped `row`.
    pub spv_lagged: f64,
    pub rmm_lagged: (f64, f64),
}

/// Generated world.
#[derive(Debug, Clone)]
pub struct World {
    pub z500: GriddedField,
    pub u10: GriddedField,
    pub olr: GriddedField,
    pub mjo: MjoSeries,
    /// Daily ground-truth regimes.
    pub regimes: RegimeSeries,
    /// Daily ground-truth SPV anomaly (unit variance).
    pub spv: DatedSeries,
    pub blocks: Vec<BlockRecord>,
    /// Regime patterns on the geopotential grid.
    pub patterns: Vec<Vec<f64>>,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn sample(row: &[f64; N_CLASSES], rng: &mut ChaCha8Rng) -> u8 {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return k as u8;
        }
    }
    (N_CLASSES - 1) as u8
}

/// Gaussian noise smoothed with a separable [1, 2, 1] kernel and rescaled to
/// unit variance in the interior.
fn smooth_noise(g: &GridSpec, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let raw: Vec<f64> = (0..g.len()).map(|_| normal(rng)).collect();
    let k = [1.0, 2.0, 1.0];
    let mut out = vec![0.0; g.len()];
    for i in 0..g.nlat {
        for j in 0..g.nlon {
            let (mut s, mut w) = (0.0, 0.0);
            for (di, ki) in k.iter().enumerate() {
                for (dj, kj) in k.iter().enumerate() {
                    let (ii, jj) = (i as i64 + di as i64 - 1, j as i64 + dj as i64 - 1);
                    if ii >= 0 && jj >= 0 && (ii as usize) < g.nlat && (jj as usize) < g.nlon {
                        s += ki * kj * raw[ii as usize * g.nlon + jj as usize];
                        w += ki * kj;
                    }
                }
            }
            out[i * g.nlon + j] = s / w;
        }
    }
    // Interior variance of the normalized kernel is (6/16)^2.
    out.iter_mut().for_each(|v| *v /= 6.0 / 16.0);
    out
}

struct WinterData {
    days: Vec<i64>,
    z500: Vec<f32>,
    u10: Vec<f32>,
    olr: Vec<f32>,
    labels: Vec<u8>,
    spv: Vec<f64>,
    rmm: Vec<(f64, f64)>,
    blocks: Vec<BlockRecord>,
}

fn winter(cfg: &WorldConfig, patterns: &[Vec<f64>], w: usize) -> WinterData {
    let year = cfg.start_year + w as i32;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(w as u64 + 1);
    let start = calendar::winter_start(year);
    let last = calendar::winter_end(year);
    let n_blocks = ((last - start) as usize).div_ceil(7) + 1;
    let spin = cfg.lag_spv.max(cfg.lag_mjo);
    let total = n_blocks + spin;

    // Drivers at blocks -spin .. n_blocks, stored at index b + spin.
    let mut spv = vec![0.0; total];
    spv[0] = normal(&mut rng);
    let innov = (1.0 - cfg.spv_phi * cfg.spv_phi).sqrt();
    for t in 1..total {
        spv[t] = cfg.spv_phi * spv[t - 1] + innov * normal(&mut rng);
    }
    let mut rmm = vec![(0.0, 0.0); total];
    rmm[0] = (cfg.mjo_amplitude * normal(&mut rng), cfg.mjo_amplitude * normal(&mut rng));
    let (c, s) = (cfg.mjo_omega_deg.to_radians().cos(), cfg.mjo_omega_deg.to_radians().sin());
    let sig = (1.0 - cfg.mjo_rho * cfg.mjo_rho).sqrt() * cfg.mjo_amplitude;
    for t in 1..total {
        let (x, y) = rmm[t - 1];
        rmm[t] = (
            cfg.mjo_rho * (c * x - s * y) + sig * normal(&mut rng),
            cfg.mjo_rho * (s * x + c * y) + sig * normal(&mut rng),
        );
    }

    let mut blocks: Vec<BlockRecord> = Vec::with_capacity(n_blocks);
    let pi = cfg.stationary();
    for b in 0..n_blocks {
        let sl = spv[b + spin - cfg.lag_spv];
        let ml = rmm[b + spin - cfg.lag_mjo];
        let row = match blocks.last() {
            None => pi,
            Some(prev) => transition_row(cfg, prev.regime, sl, ml.0, ml.1),
        };
        let regime = sample(&row, &mut rng);
        blocks.push(BlockRecord {
            winter: year,
            block: b,
            day: start + 7 * b as i64,
            regime,
            spv: spv[b + spin],
            rmm1: rmm[b + spin].0,
            rmm2: rmm[b + spin].1,
            row,
            spv_lagged: sl,
            rmm_lagged: ml,
        });
    }

    let days: Vec<i64> = (start - PAD_DAYS..=last).collect();
    let u_lats = cfg.u10_grid.lats();
    let o_lats = cfg.olr_grid.lats();
    let o_lons = cfg.olr_grid.lons();
    let z_lats = cfg.z500_grid.lats();
    let mut out = WinterData {
        days: days.clone(),
        z500: Vec::with_capacity(days.len() * cfg.z500_grid.len()),
        u10: Vec::with_capacity(days.len() * cfg.u10_grid.len()),
        olr: Vec::with_capacity(days.len() * cfg.olr_grid.len()),
        labels: Vec::with_capacity(days.len()),
        spv: Vec::with_capacity(days.len()),
        rmm: Vec::with_capacity(days.len()),
        blocks: Vec::new(),
    };
    for &d in &days {
        let b = ((d - start + PAD_DAYS) / 7) as usize;
        let blk = &blocks[b];
        let phase = 2.0 * PI * (d - start) as f64 / 365.0;
        let season = cfg.seasonal_amplitude * phase.cos();
        let zn = smooth_noise(&cfg.z500_grid, &mut rng);
        for (i, &la) in z_lats.iter().enumerate() {
            for j in 0..cfg.z500_grid.nlon {
                let g = i * cfg.z500_grid.nlon + j;
                let v = patterns[blk.regime as usize][g] + season * (la - 50.0) / 30.0 + cfg.field_noise * zn[g];
                out.z500.push(v as f32);
            }
        }
        for &la in &u_lats {
            let ring = (-((la - 60.0) / 12.0).powi(2)).exp();
            for _ in 0..cfg.u10_grid.nlon {
                let v = (25.0 + cfg.spv_wind_scale * blk.spv) * ring + cfg.u10_noise * normal(&mut rng);
                out.u10.push(v as f32);
            }
        }
        for &la in &o_lats {
            let env = (-(la / 12.0).powi(2)).exp();
            for &lo in &o_lons {
                let l = lo.to_radians();
                let v = -cfg.olr_scale * env * (blk.rmm1 * l.cos() + blk.rmm2 * l.sin()) + cfg.olr_noise * normal(&mut rng);
                out.olr.push(v as f32);
            }
        }
        out.labels.push(blk.regime);
        out.spv.push(blk.spv);
        out.rmm.push((blk.rmm1, blk.rmm2));
    }
    out.blocks = blocks;
    out
}

/// Generate `n_winters` consecutive winters.
pub fn generate(cfg: &WorldConfig, n_winters: usize) -> Result<World> {
    cfg.validate()?;
    if n_winters == 0 {
        return Err(Error::Argument("at least one winter is needed".into()));
    }
    let patterns = cfg.pattern_maps();
    let winters: Vec<WinterData> = (0..n_winters).into_par_iter().map(|w| winter(cfg, &patterns, w)).collect();
    let mut days = Vec::new();
    let (mut z, mut u, mut o) = (Vec::new(), Vec::new(), Vec::new());
    let (mut labels, mut spv, mut mjo, mut blocks) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for wd in winters {
        for (k, &d) in wd.days.iter().enumerate() {
            mjo.push(MjoRecord::new(d, wd.rmm[k].0, wd.rmm[k].1, MJO_ACTIVE_THRESHOLD));
        }
        days.extend(&wd.days);
        z.extend(wd.z500);
        u.extend(wd.u10);
        o.extend(wd.olr);
        labels.extend(wd.labels);
        spv.extend(wd.spv);
        blocks.extend(wd.blocks);
    }
    let field = |name: &str, units: &str, g: &GridSpec, v: Vec<f32>| {
        GriddedField::new(name, units, days.clone(), g.lats(), g.lons(), v)
    };
    Ok(World {
        z500: field("z500", "m", &cfg.z500_grid, z)?,
        u10: field("u10", "m s-1", &cfg.u10_grid, u)?,
        olr: field("olr", "W m-2", &cfg.olr_grid, o)?,
        mjo: MjoSeries::new(mjo)?,
        regimes: RegimeSeries::new(days.clone(), labels)?,
        spv: DatedSeries::new(days.clone(), spv)?,
        blocks,
        patterns,
    })
}

impl World {
    /// Write the fields, indices, ground truth and reference patterns to `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<Vec<std::path::PathBuf>> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let p = |n: &str| dir.join(n);
        write_grid(p("z500.grd"), &self.z500)?;
        write_grid(p("u10.grd"), &self.u10)?;
        write_grid(p("olr.grd"), &self.olr)?;
        self.mjo.write_csv(p("rmm.csv"))?;
        self.regimes.write_csv(p("regimes_truth.csv"))?;
        write_series_csv(p("spv_truth.csv"), &self.spv)?;
        write_grid(p("reference_patterns.grd"), &self.reference_patterns()?)?;
        Ok(["z500.grd", "u10.grd", "olr.grd", "rmm.csv", "regimes_truth.csv", "spv_truth.csv", "reference_patterns.grd"]
            .iter()
            .map(|n| p(n))
            .collect())
    }

    /// Regime patterns as a field whose time axis is the regime index.
    pub fn reference_patterns(&self) -> Result<GriddedField> {
        let values = self.patterns.iter().flatten().map(|&v| v as f32).collect();
        GriddedField::new(
            "reference_patterns",
            self.z500.units(),
            (0..N_CLASSES as i64).collect(),
            self.z500.lats().to_vec(),
            self.z500.lons().to_vec(),
            values,
        )
    }
}

/// Observed against configured transition frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionAudit {
    pub transitions: usize,
    /// Share of selected transitions that entered `target`.
    pub empirical: f64,
    /// Mean configured probability of entering `target`.
    pub expected: f64,
    /// Mean base-chain probability of entering `target`.
    pub base: f64,
}

/// Count transitions into `target` among the blocks picked by `select`.
pub fn audit_transitions(
    cfg: &WorldConfig,
    blocks: &[BlockRecord],
    target: u8,
    select: impl Fn(&BlockRecord, &BlockRecord) -> bool,
) -> Result<TransitionAudit> {
    let (mut n, mut hits, mut expected, mut base) = (0usize, 0usize, 0.0, 0.0);
    for pair in blocks.windows(2) {
        let (prev, cur) = (&pair[0], &pair[1]);
        if prev.winter != cur.winter || !select(prev, cur) {
            continue;
        }
        n += 1;
        hits += usize::from(cur.regime == target);
        expected += cur.row[target as usize];
        base += cfg.transition[prev.regime as usize][target as usize];
    }
    if n == 0 {
        return Err(Error::Empty("no transitions match the selection".into()));
    }
    let nf = n as f64;
    Ok(TransitionAudit { transitions: n, empirical: hits as f64 / nf, expected: expected / nf, base: base / nf })
}
