//! Python bindings: profiles, cleaning, histogram summaries, model fitting,
//! posterior bands, scenarios and model comparison.
//!
//! Structured results (reports, tables, bands) are returned as plain dicts
//! and configuration is accepted as dicts with the same keys as the JSON run
//! configuration of the command-line tool.

use std::collections::BTreeMap;

use actihist::fit::{fit_model, FitOptions};
use actihist::inference::{coef_function_band, percent_change, sample_posterior, Scenario};
use actihist::model::{read_covariates_csv, Column, Dataset, ModelSpec, Variant};
use actihist::model_select::{compare_family, make_split, CompareOptions};
use actihist::profile::{self, CleaningConfig, ProfileFormat};
use actihist::summary::{self, read_grid_json, read_hist1d_csv, Transform};
use actihist::synth::{gen_cohort, TruthSpec};
use chrono::NaiveDateTime;
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::de::DeserializeOwned;
use serde::Serialize;

create_exception!(actihist, ActihistError, PyException);

fn err(e: actihist::Error) -> PyErr {
    ActihistError::new_err(e.to_string())
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| ActihistError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn from_py<T: DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map_err(|e| ActihistError::new_err(format!("invalid configuration: {e}")))
}

fn opt_from_py<T: DeserializeOwned + Default>(obj: Option<&Bound<'_, PyAny>>) -> PyResult<T> {
    obj.map_or_else(|| Ok(T::default()), from_py)
}

fn parse_format(s: &str) -> PyResult<ProfileFormat> {
    match s {
        "wide_csv" | "wide" => Ok(ProfileFormat::WideCsv),
        "long_csv" | "long" => Ok(ProfileFormat::LongCsv),
        _ => Err(ActihistError::new_err(format!("unknown profile format {s:?}"))),
    }
}

/// Histogram bin grid on the count scale.
#[pyclass(module = "actihist", frozen)]
#[derive(Clone)]
struct BinGrid {
    inner: summary::BinGrid,
}

#[pymethods]
impl BinGrid {
    #[new]
    #[pyo3(signature = (width=100.0, upper=8000.0, cap=15000.0))]
    fn new(width: f64, upper: f64, cap: f64) -> PyResult<Self> {
        let inner = summary::make_bins(width, upper, cap, Transform::Identity).map_err(err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_json(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: read_grid_json(path).map_err(err)?,
        })
    }

    #[getter]
    fn edges(&self) -> Vec<f64> {
        self.inner.edges.clone()
    }

    #[getter]
    fn midpoints(&self) -> Vec<f64> {
        self.inner.midpoints.clone()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        let e = &self.inner.edges;
        format!("BinGrid({} bins, {}..{})", self.inner.len(), e[0], e[e.len() - 1])
    }
}

/// Raw minute-epoch counts of one subject; `None` marks a missing minute.
#[pyclass(module = "actihist", frozen)]
#[derive(Clone)]
struct RawProfile {
    inner: profile::RawProfile,
}

#[pymethods]
impl RawProfile {
    #[new]
    fn new(subject_id: String, start: &str, counts: Vec<Option<u32>>) -> PyResult<Self> {
        let t = ["%Y-%m-%dT%H:%M", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M", "%Y-%m-%d %H:%M:%S"]
            .iter()
            .find_map(|f| NaiveDateTime::parse_from_str(start, f).ok())
            .ok_or_else(|| ActihistError::new_err(format!("bad timestamp {start:?}")))?;
        let inner = profile::RawProfile::new(subject_id, t, counts).map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn subject_id(&self) -> &str {
        &self.inner.subject_id
    }

    #[getter]
    fn start(&self) -> String {
        self.inner.start.format("%Y-%m-%dT%H:%M").to_string()
    }

    #[getter]
    fn counts(&self) -> Vec<Option<u32>> {
        self.inner.counts.clone()
    }

    fn __len__(&self) -> usize {
        self.inner.counts.len()
    }

    fn __repr__(&self) -> String {
        format!("RawProfile({:?}, {} minutes)", self.inner.subject_id, self.inner.counts.len())
    }
}

/// A profile after the wear and validity rules; invalid days are masked.
#[pyclass(module = "actihist", frozen)]
struct CleanProfile {
    inner: profile::CleanProfile,
}

#[pymethods]
impl CleanProfile {
    #[getter]
    fn subject_id(&self) -> &str {
        &self.inner.subject_id
    }

    #[getter]
    fn valid(&self) -> bool {
        self.inner.valid
    }

    #[getter]
    fn valid_days(&self) -> usize {
        self.inner.valid_days
    }

    #[getter]
    fn weartime_total(&self) -> usize {
        self.inner.weartime_total
    }

    /// The seven days from midnight of the first day, minute by minute.
    fn series(&self) -> Vec<Option<u32>> {
        self.inner.series()
    }

    /// Pooled histogram: fraction of worn time per bin.
    fn hist1d(&self, grid: &BinGrid) -> PyResult<Vec<f64>> {
        let h = summary::hist1d(&self.inner, &grid.inner).map_err(err)?;
        Ok(h.one_d().expect("pooled histogram").to_vec())
    }

    /// Bin-by-hour densities, bin-major.
    #[pyo3(signature = (grid, hour_width=1))]
    fn hist2d(&self, grid: &BinGrid, hour_width: u32) -> PyResult<Vec<f64>> {
        let h = summary::hist2d(&self.inner, &grid.inner, hour_width).map_err(err)?;
        Ok(h.two_d().expect("two-dimensional histogram").0.to_vec())
    }

    /// Weekday and weekend histograms, each normalized by its own weartime.
    fn hist_split(&self, grid: &BinGrid) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let h = summary::hist_split(&self.inner, &grid.inner).map_err(err)?;
        let (wd, we) = h.split().expect("split histogram");
        Ok((wd.z.clone(), we.z.clone()))
    }

    fn __repr__(&self) -> String {
        format!(
            "CleanProfile({:?}, valid={}, valid_days={})",
            self.inner.subject_id, self.inner.valid, self.inner.valid_days
        )
    }
}

#[pyfunction]
#[pyo3(signature = (path, format="wide_csv"))]
fn read_profiles(path: &str, format: &str) -> PyResult<Vec<RawProfile>> {
    let v = profile::read_profiles(path, parse_format(format)?).map_err(err)?;
    Ok(v.into_iter().map(|inner| RawProfile { inner }).collect())
}

#[pyfunction]
#[pyo3(signature = (path, profiles, format="wide_csv"))]
fn write_profiles(path: &str, profiles: Vec<RawProfile>, format: &str) -> PyResult<()> {
    let raw: Vec<profile::RawProfile> = profiles.into_iter().map(|p| p.inner).collect();
    let file = std::fs::File::create(path).map_err(|e| err(actihist::Error::Io {
        path: path.into(),
        source: e,
    }))?;
    profile::write_profiles(std::io::BufWriter::new(file), &raw, parse_format(format)?).map_err(err)
}

/// Cleans a cohort. Returns the cleaned profiles (valid or not) and the
/// cleaning report as a dict.
#[pyfunction]
#[pyo3(signature = (profiles, config=None))]
fn clean_cohort<'py>(
    py: Python<'py>,
    profiles: Vec<RawProfile>,
    config: Option<&Bound<'py, PyAny>>,
) -> PyResult<(Vec<CleanProfile>, Bound<'py, PyAny>)> {
    let cfg: CleaningConfig = opt_from_py(config)?;
    let raw: Vec<profile::RawProfile> = profiles.into_iter().map(|p| p.inner).collect();
    let (cleaned, report) = profile::clean_cohort(&raw, &cfg).map_err(err)?;
    let cleaned = cleaned.into_iter().map(|inner| CleanProfile { inner }).collect();
    Ok((cleaned, to_py(py, &report)?))
}

/// Subjects with covariates and histogram summaries.
#[pyclass(module = "actihist", frozen)]
struct Cohort {
    inner: Dataset,
}

#[pymethods]
impl Cohort {
    /// Synthetic cohort with known truth; `truth` overrides fields of the
    /// default generator settings.
    #[staticmethod]
    #[pyo3(signature = (n=500, seed=1, grid=None, truth=None))]
    fn simulate<'py>(
        py: Python<'py>,
        n: usize,
        seed: u64,
        grid: Option<&BinGrid>,
        truth: Option<&Bound<'py, PyAny>>,
    ) -> PyResult<(Self, Bound<'py, PyDict>)> {
        let mut t: TruthSpec = opt_from_py(truth)?;
        t.n = n;
        let g = match grid {
            Some(g) => g.inner.clone(),
            None => BinGrid::new(100.0, 8000.0, 15000.0)?.inner,
        };
        let (inner, out) = gen_cohort(&t, &g, seed).map_err(err)?;
        let info = PyDict::new(py);
        info.set_item("sigma", out.sigma)?;
        info.set_item("eta", out.eta)?;
        info.set_item("coefficient_function", t.f_true.on_grid(&g))?;
        Ok((Self { inner }, info))
    }

    /// Covariates joined with pooled histograms, as written by the
    /// command-line `simulate`/`summarize` steps.
    #[staticmethod]
    fn from_files(covariates: &str, hist1d: &str, grid: &str) -> PyResult<Self> {
        let g = read_grid_json(grid).map_err(err)?;
        let hs = read_hist1d_csv(hist1d, &g, &BTreeMap::new()).map_err(err)?;
        let inner = read_covariates_csv(covariates)
            .and_then(|d| d.with_hist1d(hs))
            .map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn ids(&self) -> Vec<String> {
        self.inner.ids.clone()
    }

    fn columns(&self) -> Vec<String> {
        self.inner.columns.keys().cloned().collect()
    }

    /// Values of one covariate column (numbers or strings, `None` if missing).
    fn column(&self, py: Python<'_>, name: &str) -> PyResult<PyObject> {
        match self.inner.columns.get(name) {
            Some(Column::Numeric(v)) => Ok(v.clone().into_pyobject(py)?.into_any().unbind()),
            Some(Column::Text(v)) => Ok(v.clone().into_pyobject(py)?.into_any().unbind()),
            None => Err(ActihistError::new_err(format!("no column {name:?}"))),
        }
    }

    fn hist1d(&self, subject_id: &str) -> Option<Vec<f64>> {
        self.inner.hist1d.get(subject_id)?.one_d().map(<[f64]>::to_vec)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Cohort({} subjects, {} columns)", self.inner.len(), self.inner.columns.len())
    }
}

fn spec_of(obj: &Bound<'_, PyAny>) -> PyResult<ModelSpec> {
    if let Ok(name) = obj.extract::<String>() {
        return Variant::FAMILY
            .iter()
            .find(|v| v.tag() == name)
            .map(|&v| ModelSpec::preset(v))
            .ok_or_else(|| ActihistError::new_err(format!("no preset model named {name:?}")));
    }
    let spec: ModelSpec = from_py(obj)?;
    spec.validate().map_err(err)?;
    Ok(spec)
}

/// Names of the preset models, base first.
#[pyfunction]
fn presets() -> Vec<&'static str> {
    Variant::FAMILY.iter().map(|v| v.tag()).collect()
}

/// Full specification of a preset model as a dict, for editing.
#[pyfunction]
fn model_spec<'py>(py: Python<'py>, name: &Bound<'py, PyAny>) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &spec_of(name)?)
}

#[pyfunction]
fn default_scenarios(py: Python<'_>) -> PyResult<Bound<'_, PyAny>> {
    to_py(py, &Scenario::defaults())
}

/// A model fitted by REML.
#[pyclass(module = "actihist", frozen)]
struct FittedModel {
    inner: actihist::fit::FittedModel,
}

impl FittedModel {
    fn functional_block(&self, block: usize) -> PyResult<usize> {
        self.inner
            .layout
            .functional_blocks()
            .get(block)
            .copied()
            .ok_or_else(|| ActihistError::new_err(format!("model has no functional block {block}")))
    }
}

#[pymethods]
impl FittedModel {
    #[getter]
    fn name(&self) -> &str {
        &self.inner.spec().name
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.fit.n
    }

    #[getter]
    fn edf(&self) -> f64 {
        self.inner.fit.edf
    }

    #[getter]
    fn sigma2(&self) -> f64 {
        self.inner.fit.sigma2
    }

    /// Natural logarithms of the smoothing parameters.
    #[getter]
    fn log_lambda(&self) -> Vec<f64> {
        self.inner.fit.log_lambda.clone()
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.fit.converged
    }

    #[getter]
    fn coefficients(&self) -> Vec<(String, f64)> {
        self.inner
            .fit
            .column_labels
            .iter()
            .cloned()
            .zip(self.inner.fit.beta.iter().copied())
            .collect()
    }

    #[getter]
    fn fitted(&self) -> Vec<f64> {
        self.inner.fit.fitted.iter().copied().collect()
    }

    #[getter]
    fn ids(&self) -> Vec<String> {
        self.inner.ids.clone()
    }

    /// log-likelihood, AIC, BIC, adjusted R², REML score, RSS and edf.
    fn criteria<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.fit.criteria)
    }

    /// Labels of the functional blocks, in the order used by `block`.
    fn functional_blocks(&self) -> Vec<String> {
        self.inner
            .layout
            .functional_blocks()
            .into_iter()
            .map(|b| self.inner.fit.blocks[b].label.clone())
            .collect()
    }

    /// Estimated coefficient function and pointwise standard error at the
    /// bin midpoints of a functional block.
    #[pyo3(signature = (block=0))]
    fn coefficient_function<'py>(&self, py: Python<'py>, block: usize) -> PyResult<Bound<'py, PyDict>> {
        let b = self.functional_block(block)?;
        let points = self.inner.layout.grid(b).map_err(err)?.midpoints.clone();
        let g = self.inner.layout.coef_function_basis(b, &points).map_err(err)?;
        let f = &g * self.inner.fit.block_beta(b);
        let var = (&g * self.inner.fit.block_cov(b)).component_mul(&g).column_sum();
        let d = PyDict::new(py);
        d.set_item("points", points)?;
        d.set_item("estimate", f.iter().copied().collect::<Vec<_>>())?;
        d.set_item("se", var.iter().map(|v| v.max(0.0).sqrt()).collect::<Vec<_>>())?;
        Ok(d)
    }

    /// Pointwise credible band of a coefficient function from posterior draws.
    #[pyo3(signature = (block=0, draws=2000, seed=1, level=0.95))]
    fn band<'py>(&self, py: Python<'py>, block: usize, draws: usize, seed: u64, level: f64) -> PyResult<Bound<'py, PyAny>> {
        let b = self.functional_block(block)?;
        let points = self.inner.layout.grid(b).map_err(err)?.midpoints.clone();
        let d = sample_posterior(&self.inner.fit, draws, seed).map_err(err)?;
        to_py(py, &coef_function_band(&self.inner, &d, b, &points, level).map_err(err)?)
    }

    /// Posterior interval for the cohort-mean percentage change in the
    /// response under a scenario dict (see `default_scenarios`).
    #[pyo3(signature = (cohort, scenario, draws=10000, seed=1, level=0.95))]
    fn percent_change<'py>(
        &self,
        py: Python<'py>,
        cohort: &Cohort,
        scenario: &Bound<'py, PyAny>,
        draws: usize,
        seed: u64,
        level: f64,
    ) -> PyResult<Bound<'py, PyAny>> {
        let s: Scenario = from_py(scenario)?;
        let d = sample_posterior(&self.inner.fit, draws, seed).map_err(err)?;
        let r = percent_change(&self.inner, &d, &cohort.inner, &self.inner.ids, &s, level).map_err(err)?;
        to_py(py, &r)
    }

    /// Linear predictor for the complete subjects of `cohort`.
    fn predict(&self, cohort: &Cohort) -> PyResult<(Vec<String>, Vec<f64>)> {
        let (ids, eta, _) = self
            .inner
            .predict(&cohort.inner, &cohort.inner.ids)
            .map_err(err)?;
        Ok((ids, eta.iter().copied().collect()))
    }

    fn __repr__(&self) -> String {
        format!(
            "FittedModel({:?}, n={}, edf={:.2})",
            self.inner.spec().name,
            self.inner.fit.n,
            self.inner.fit.edf
        )
    }
}

/// Fits a model given by preset name or specification dict.
#[pyfunction]
#[pyo3(signature = (model, cohort, ids=None, options=None))]
fn fit(
    model: &Bound<'_, PyAny>,
    cohort: &Cohort,
    ids: Option<Vec<String>>,
    options: Option<&Bound<'_, PyAny>>,
) -> PyResult<FittedModel> {
    let spec = spec_of(model)?;
    let opts: FitOptions = opt_from_py(options)?;
    let ids = ids.unwrap_or_else(|| cohort.inner.ids.clone());
    let inner = fit_model(&spec, &cohort.inner, &ids, &opts).map_err(err)?;
    Ok(FittedModel { inner })
}

/// Model-selection table on a random train/validation split. The first
/// model is the reference of the ΔAIC/ΔBIC columns.
#[pyfunction]
#[pyo3(signature = (cohort, models=None, fraction=0.75, seed=1, smearing=false))]
fn compare<'py>(
    py: Python<'py>,
    cohort: &Cohort,
    models: Option<Vec<Bound<'py, PyAny>>>,
    fraction: f64,
    seed: u64,
    smearing: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let specs = match models {
        Some(ms) => ms.iter().map(spec_of).collect::<PyResult<Vec<_>>>()?,
        None => ModelSpec::family(),
    };
    let split = make_split(&cohort.inner.ids, fraction, seed).map_err(err)?;
    let opts = CompareOptions {
        fit: FitOptions::default(),
        smearing,
    };
    to_py(py, &compare_family(&specs, &cohort.inner, &split, &opts).map_err(err)?)
}

#[pymodule]
#[pyo3(name = "actihist")]
fn actihist_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("ActihistError", m.py().get_type::<ActihistError>())?;
    m.add_class::<BinGrid>()?;
    m.add_class::<RawProfile>()?;
    m.add_class::<CleanProfile>()?;
    m.add_class::<Cohort>()?;
    m.add_class::<FittedModel>()?;
    m.add_function(wrap_pyfunction!(read_profiles, m)?)?;
    m.add_function(wrap_pyfunction!(write_profiles, m)?)?;
    m.add_function(wrap_pyfunction!(clean_cohort, m)?)?;
    m.add_function(wrap_pyfunction!(presets, m)?)?;
    m.add_function(wrap_pyfunction!(model_spec, m)?)?;
    m.add_function(wrap_pyfunction!(default_scenarios, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(compare, m)?)?;
    Ok(())
}
