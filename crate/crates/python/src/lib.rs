//! Python bindings: synthetic worlds, gridded fields, regime analysis,
//! MJO phases, skill metrics and ensemble experiments.

use std::path::Path;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use regimecast::drivers;
use regimecast::eval::SkillReport;
use regimecast::experiment::{prepare, pretrain_embeddings, run_model_ensemble, summarize_model, DriverInputs};
use regimecast::gridstore::{read_grid, write_grid, GriddedField};
use regimecast::models::{ModelKind, Probs, Profile, ProfileConfig, N_CLASSES, N_LEADS};
use regimecast::regimes::{self, EofWeighting, KMeansConfig, RegimeSeries};
use regimecast::synth::{self, WorldConfig};

fn to_py(e: regimecast::Error) -> PyErr {
    if e.is_validation() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn json_err(e: serde_json::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Daily gridded field of one variable.
#[pyclass(name = "Field", module = "regimecast_py", skip_from_py_object)]
#[derive(Clone)]
pub struct PyField {
    pub inner: GriddedField,
}

#[pymethods]
impl PyField {
    #[new]
    pub fn new(name: &str, units: &str, times: Vec<i64>, lats: Vec<f64>, lons: Vec<f64>, values: Vec<f32>) -> PyResult<Self> {
        let inner = GriddedField::new(name, units, times, lats, lons, values).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    pub fn read(path: &str) -> PyResult<Self> {
        Ok(Self { inner: read_grid(path).map_err(to_py)? })
    }

    pub fn write(&self, path: &str) -> PyResult<()> {
        write_grid(path, &self.inner).map_err(to_py)
    }

    #[getter]
    pub fn name(&self) -> String {
        self.inner.name().to_string()
    }

    /// `(time, lat, lon)`.
    #[getter]
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.inner.ntime(), self.inner.lats().len(), self.inner.lons().len())
    }

    /// Days since 1970-01-01.
    #[getter]
    pub fn times(&self) -> Vec<i64> {
        self.inner.times().to_vec()
    }

    #[getter]
    pub fn lats(&self) -> Vec<f64> {
        self.inner.lats().to_vec()
    }

    #[getter]
    pub fn lons(&self) -> Vec<f64> {
        self.inner.lons().to_vec()
    }

    /// Flat row-major values.
    pub fn values(&self) -> Vec<f32> {
        self.inner.values().to_vec()
    }

    fn __repr__(&self) -> String {
        let (t, y, x) = self.shape();
        format!("Field({:?}, time={t}, lat={y}, lon={x})", self.inner.name())
    }
}

/// Synthetic climate with planted stratospheric and tropical teleconnections.
#[pyclass(name = "World", module = "regimecast_py")]
pub struct PyWorld {
    inner: synth::World,
}

#[pymethods]
impl PyWorld {
    /// `config_json` holds any subset of the world settings.
    #[new]
    #[pyo3(signature = (seed = 0, winters = 20, config_json = None))]
    pub fn new(seed: u64, winters: usize, config_json: Option<&str>) -> PyResult<Self> {
        let mut cfg: WorldConfig = match config_json {
            Some(s) => serde_json::from_str(s).map_err(json_err)?,
            None => WorldConfig::default(),
        };
        cfg.seed = seed;
        Ok(Self { inner: synth::generate(&cfg, winters).map_err(to_py)? })
    }

    /// Days of the ground-truth regime labels.
    #[getter]
    pub fn days(&self) -> Vec<i64> {
        self.inner.regimes.times().to_vec()
    }

    /// Ground-truth regime label per day.
    #[getter]
    pub fn regimes(&self) -> Vec<u8> {
        self.inner.regimes.labels().to_vec()
    }

    #[getter]
    pub fn spv(&self) -> Vec<f64> {
        self.inner.spv.values().to_vec()
    }

    pub fn z500(&self) -> PyField {
        PyField { inner: self.inner.z500.clone() }
    }

    pub fn u10(&self) -> PyField {
        PyField { inner: self.inner.u10.clone() }
    }

    pub fn olr(&self) -> PyField {
        PyField { inner: self.inner.olr.clone() }
    }

    /// Write all fields and series to `dir`; returns the file paths.
    pub fn write(&self, dir: &str) -> PyResult<Vec<String>> {
        let paths = self.inner.write(dir).map_err(to_py)?;
        Ok(paths.iter().map(|p| p.display().to_string()).collect())
    }
}

fn weighting(name: &str) -> PyResult<EofWeighting> {
    match name {
        "none" => Ok(EofWeighting::None),
        "sqrt_cos_lat" => Ok(EofWeighting::SqrtCosLat),
        other => Err(PyValueError::new_err(format!("unknown weighting {other:?}"))),
    }
}

/// Leading EOFs: `(components, explained_variance_ratio)`.
#[pyfunction]
#[pyo3(signature = (field, n_eof = 14, weighting_name = "none"))]
pub fn fit_eof(field: &PyField, n_eof: usize, weighting_name: &str) -> PyResult<(Vec<Vec<f64>>, Vec<f64>)> {
    let basis = regimes::fit_eof(&field.inner, n_eof, weighting(weighting_name)?).map_err(to_py)?;
    let comps = (0..basis.n_eof).map(|k| basis.component(k).to_vec()).collect();
    Ok((comps, basis.explained_variance_ratio))
}

/// k-means clustering: `(labels, centroids, inertia)`.
#[pyfunction]
#[pyo3(signature = (points, k = 4, n_restarts = 20, seed = 0))]
pub fn fit_kmeans(points: Vec<Vec<f64>>, k: usize, n_restarts: usize, seed: u64) -> PyResult<(Vec<usize>, Vec<Vec<f64>>, f64)> {
    let cfg = KMeansConfig { k, n_restarts, seed, ..KMeansConfig::default() };
    let fit = regimes::fit_kmeans(&points, &cfg).map_err(to_py)?;
    Ok((fit.labels, fit.centroids, fit.inertia))
}

/// MJO phase 1..=8, or 0 when the amplitude is below `threshold`.
#[pyfunction]
#[pyo3(signature = (rmm1, rmm2, threshold = 1.0))]
pub fn mjo_phase(rmm1: f64, rmm2: f64, threshold: f64) -> u8 {
    drivers::phase_class(rmm1, rmm2, threshold)
}

/// Expected accuracy of a persistence forecast `k` steps ahead for a Markov
/// chain with the given 4x4 transition matrix.
#[pyfunction]
pub fn persistence_accuracy(transition: Vec<Vec<f64>>, k: usize) -> PyResult<f64> {
    if transition.len() != N_CLASSES || transition.iter().any(|r| r.len() != N_CLASSES) {
        return Err(PyValueError::new_err("transition matrix must be 4x4"));
    }
    let p: [[f64; N_CLASSES]; N_CLASSES] = std::array::from_fn(|i| std::array::from_fn(|j| transition[i][j]));
    Ok(synth::persistence_accuracy(&p, k))
}

fn probs_array(probs: &[Vec<Vec<f64>>]) -> PyResult<Vec<Probs>> {
    probs
        .iter()
        .map(|p| {
            if p.len() != N_LEADS || p.iter().any(|w| w.len() != N_CLASSES) {
                return Err(PyValueError::new_err("each forecast must be 6 lead weeks x 4 probabilities"));
            }
            Ok(std::array::from_fn(|w| std::array::from_fn(|c| p[w][c])))
        })
        .collect()
}

fn targets_array(targets: &[Vec<u8>]) -> PyResult<Vec<[u8; N_LEADS]>> {
    targets
        .iter()
        .map(|t| {
            <[u8; N_LEADS]>::try_from(t.as_slice()).map_err(|_| PyValueError::new_err("each target row needs 6 labels"))
        })
        .collect()
}

/// Skill report (balanced accuracy, CSI, class-wise accuracy, ECE) as JSON.
#[pyfunction]
pub fn skill_report(model: &str, probs: Vec<Vec<Vec<f64>>>, targets: Vec<Vec<u8>>) -> PyResult<String> {
    let report =
        SkillReport::from_predictions(model, &probs_array(&probs)?, &targets_array(&targets)?).map_err(to_py)?;
    serde_json::to_string(&report).map_err(json_err)
}

fn model_kind(name: &str) -> PyResult<ModelKind> {
    serde_json::from_value(serde_json::Value::String(name.to_string()))
        .map_err(|_| PyValueError::new_err(format!("unknown model {name:?}")))
}

/// Prepare drivers, train an ensemble of `model` and return its summary as JSON.
///
/// `drivers_dir` must contain `u10.grd`, `olr.grd` and `rmm.csv`.
#[pyfunction]
#[pyo3(signature = (regimes_csv, drivers_dir, model = "lstm", members = 4, seed = 0, profile = "desk", max_epochs = None, mae_epochs = None))]
#[allow(clippy::too_many_arguments)]
pub fn run_ensemble(
    py: Python<'_>,
    regimes_csv: &str,
    drivers_dir: &str,
    model: &str,
    members: usize,
    seed: u64,
    profile: &str,
    max_epochs: Option<usize>,
    mae_epochs: Option<usize>,
) -> PyResult<String> {
    let kind = model_kind(model)?;
    let mut prof = ProfileConfig::new(profile.parse::<Profile>().map_err(to_py)?);
    if let Some(e) = max_epochs {
        prof.train.max_epochs = e;
    }
    if let Some(e) = mae_epochs {
        prof.mae_epochs = e;
    }
    let (regimes_csv, drivers_dir) = (regimes_csv.to_string(), drivers_dir.to_string());
    py.detach(move || ensemble_summary(&regimes_csv, Path::new(&drivers_dir), kind, &prof, members, seed))
        .map_err(to_py)
}

pub fn ensemble_summary(
    regimes_csv: &str,
    drivers_dir: &Path,
    kind: ModelKind,
    prof: &ProfileConfig,
    members: usize,
    seed: u64,
) -> regimecast::Result<String> {
    let series = RegimeSeries::read_csv(regimes_csv)?;
    let mjo = drivers::MjoSeries::read_csv(drivers_dir.join("rmm.csv"), drivers::MJO_ACTIVE_THRESHOLD)?;
    let (rmm1, rmm2) = mjo.components()?;
    let inputs = DriverInputs {
        u10: read_grid(drivers_dir.join("u10.grd"))?,
        olr: read_grid(drivers_dir.join("olr.grd"))?,
        rmm1,
        rmm2,
    };
    let p = prepare(&series, &inputs, &Default::default())?;
    let emb = if kind == ModelKind::VitLstm { Some(pretrain_embeddings(&p, prof, seed)?) } else { None };
    let out = run_model_ensemble(kind, &p, emb.as_ref(), prof, members, seed, 1)?;
    let summary = summarize_model(kind, &out)?;
    serde_json::to_string(&summary).map_err(|e| regimecast::Error::Format(e.to_string()))
}

#[pymodule]
fn regimecast_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyField>()?;
    m.add_class::<PyWorld>()?;
    m.add_function(wrap_pyfunction!(fit_eof, m)?)?;
    m.add_function(wrap_pyfunction!(fit_kmeans, m)?)?;
    m.add_function(wrap_pyfunction!(mjo_phase, m)?)?;
    m.add_function(wrap_pyfunction!(persistence_accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(skill_report, m)?)?;
    m.add_function(wrap_pyfunction!(run_ensemble, m)?)?;
    Ok(())
}
