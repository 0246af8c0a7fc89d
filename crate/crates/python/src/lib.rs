//! Python bindings: mixture fitting, validity indices, k selection, cluster
//! refinement and the descriptive analysis, on plain Python lists.

use std::path::PathBuf;

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde::Serialize;

use fuelclust::analysis::{self, GroupKey};
use fuelclust::config::PipelineConfig;
use fuelclust::error::Error;
use fuelclust::gmm::{self, EmConfig, InitStrategy};
use fuelclust::ingest::{self, ColumnMap, TripRecord, TripTable};
use fuelclust::refine;
use fuelclust::select::{self, RankTable};
use fuelclust::validity::{self, SilhouetteMode, ValidityScores};
use fuelclust::{pipeline, Assignment, Samples};

fn py_err(e: Error) -> PyErr {
    if e.is_io() {
        PyOSError::new_err(e.to_string())
    } else if e.exit_code() == 3 {
        PyRuntimeError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

trait OrPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> OrPy<T> for Result<T, Error> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

fn json_to_py<'py>(py: Python<'py>, v: &serde_json::Value) -> PyResult<Bound<'py, PyAny>> {
    use serde_json::Value;
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        Value::Number(n) => match (n.as_u64(), n.as_i64()) {
            (Some(u), _) => u.into_pyobject(py)?.into_any(),
            (None, Some(i)) => i.into_pyobject(py)?.into_any(),
            _ => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any(),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any(),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(json_to_py(py, item)?)?;
            }
            list.into_any()
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, item) in map {
                dict.set_item(k, json_to_py(py, item)?)?;
            }
            dict.into_any()
        }
    })
}

/// Any serializable value as nested Python dicts and lists.
fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let v = serde_json::to_value(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    json_to_py(py, &v)
}

fn samples(values: &[f64]) -> PyResult<Samples> {
    Samples::from_scalars(values).py()
}

fn assignment(labels: Vec<usize>) -> PyResult<Assignment> {
    let k = labels.iter().max().map_or(0, |m| m + 1);
    Assignment::new(labels, k).py()
}

fn si_mode(mode: &str) -> PyResult<SilhouetteMode> {
    mode.parse().py()
}

#[pyclass(name = "MixtureModel", module = "pyfuelclust", frozen, from_py_object)]
#[derive(Clone)]
struct PyMixtureModel {
    inner: gmm::MixtureModel,
}

#[pymethods]
impl PyMixtureModel {
    /// Build a one-dimensional model from (weight, mean, variance) triples.
    #[new]
    fn new(components: Vec<(f64, f64, f64)>) -> PyResult<Self> {
        Ok(Self {
            inner: gmm::MixtureModel::scalar(&components).py()?,
        })
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.k()
    }

    #[getter]
    fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.inner.weights()
    }

    #[getter]
    fn means(&self) -> Vec<Vec<f64>> {
        self.inner.components().iter().map(|c| c.mean.clone()).collect()
    }

    #[getter]
    fn variances(&self) -> PyResult<Vec<f64>> {
        self.inner
            .scalar_variances()
            .ok_or_else(|| PyValueError::new_err("variances are defined for 1-D models only"))
    }

    fn density(&self, x: f64) -> PyResult<f64> {
        gmm::mixture_density(&[x], &self.inner).py()
    }

    fn log_likelihood(&self, values: Vec<f64>) -> PyResult<f64> {
        gmm::log_likelihood(&samples(&values)?, &self.inner).py()
    }

    /// Hard assignment: index of the most responsible component per value.
    fn assign(&self, values: Vec<f64>) -> PyResult<Vec<usize>> {
        Ok(self.inner.assign(&samples(&values)?).py()?.labels().to_vec())
    }

    fn responsibilities(&self, values: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        let r = gmm::e_step(&samples(&values)?, &self.inner).py()?;
        Ok(r.rows().map(<[f64]>::to_vec).collect())
    }

    /// Weighted component densities over an even grid: (xs, one y list per component).
    fn curves(&self, lo: f64, hi: f64, points: usize) -> PyResult<(Vec<f64>, Vec<Vec<f64>>)> {
        let lines = fuelclust::charts::curve_samples(&self.inner, (lo, hi), points).py()?;
        let xs = lines.first().map(|l| l.xs.clone()).unwrap_or_default();
        Ok((xs, lines.into_iter().map(|l| l.ys).collect()))
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner)
    }

    fn __repr__(&self) -> String {
        format!("MixtureModel(k={}, weights={:?})", self.inner.k(), self.inner.weights())
    }
}

#[pyclass(name = "FitResult", module = "pyfuelclust", frozen)]
struct PyFitResult {
    inner: gmm::FitResult,
}

#[pymethods]
impl PyFitResult {
    #[getter]
    fn model(&self) -> PyMixtureModel {
        PyMixtureModel {
            inner: self.inner.model.clone(),
        }
    }

    #[getter]
    fn log_likelihood(&self) -> f64 {
        self.inner.log_likelihood()
    }

    #[getter]
    fn trace(&self) -> Vec<f64> {
        self.inner.log_likelihood_trace.clone()
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.inner.iterations
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }

    #[getter]
    fn restart(&self) -> usize {
        self.inner.restart
    }

    fn __repr__(&self) -> String {
        format!(
            "FitResult(k={}, log_likelihood={:.6}, iterations={}, converged={})",
            self.inner.model.k(),
            self.inner.log_likelihood(),
            self.inner.iterations,
            self.inner.converged
        )
    }
}

#[allow(clippy::too_many_arguments)]
fn em_config(
    seed: u64,
    max_iterations: usize,
    tolerance: f64,
    n_restarts: usize,
    covariance_floor: f64,
    init: &str,
) -> PyResult<EmConfig> {
    Ok(EmConfig {
        seed,
        max_iterations,
        tolerance,
        n_restarts,
        covariance_floor,
        init: init.parse::<InitStrategy>().py()?,
    })
}

/// Fit a k-component mixture to 1-D values with EM.
#[pyfunction]
#[pyo3(signature = (values, k, seed=0, max_iterations=200, tolerance=1e-6, n_restarts=4, covariance_floor=1e-6, init="quantile"))]
#[allow(clippy::too_many_arguments)]
fn fit(
    values: Vec<f64>,
    k: usize,
    seed: u64,
    max_iterations: usize,
    tolerance: f64,
    n_restarts: usize,
    covariance_floor: f64,
    init: &str,
) -> PyResult<PyFitResult> {
    let config = em_config(seed, max_iterations, tolerance, n_restarts, covariance_floor, init)?;
    Ok(PyFitResult {
        inner: gmm::fit_em(&samples(&values)?, k, &config).py()?,
    })
}

#[pyfunction]
#[pyo3(signature = (values, labels, mode="mean_samples"))]
fn silhouette_index(values: Vec<f64>, labels: Vec<usize>, mode: &str) -> PyResult<f64> {
    validity::silhouette_index(&samples(&values)?, &assignment(labels)?, si_mode(mode)?).py()
}

#[pyfunction]
fn calinski_harabasz(values: Vec<f64>, labels: Vec<usize>) -> PyResult<f64> {
    Ok(validity::calinski_harabasz(&samples(&values)?, &assignment(labels)?).py()?.value)
}

#[pyfunction]
fn davies_bouldin(values: Vec<f64>, labels: Vec<usize>) -> PyResult<f64> {
    Ok(validity::davies_bouldin(&samples(&values)?, &assignment(labels)?).py()?.value)
}

/// All three indices with degenerate flags; an empty cluster gives sentinels.
#[pyfunction]
#[pyo3(signature = (values, labels, mode="mean_samples"))]
fn validity_scores<'py>(
    py: Python<'py>,
    values: Vec<f64>,
    labels: Vec<usize>,
    mode: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let scores =
        ValidityScores::evaluate(&samples(&values)?, &assignment(labels)?, si_mode(mode)?).py()?;
    to_py(py, &scores)
}

/// Fit every k in [k_min, k_max], score, rank and pick k.
#[pyfunction]
#[pyo3(signature = (values, k_min=2, k_max=9, seed=0, mode="mean_samples"))]
fn select_k<'py>(
    py: Python<'py>,
    values: Vec<f64>,
    k_min: usize,
    k_max: usize,
    seed: u64,
    mode: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let config = PipelineConfig {
        k_min,
        k_max,
        seed,
        si_mode: si_mode(mode)?,
        ..Default::default()
    };
    let selection = pipeline::run_selection(&samples(&values)?, &config).py()?;
    let out = PyDict::new(py);
    out.set_item("selected_k", selection.selected_k)?;
    out.set_item("scores", to_py(py, &selection.scores)?)?;
    out.set_item("ranks", to_py(py, &selection.ranks)?)?;
    out.set_item("rank_table_csv", selection.ranks.to_csv())?;
    Ok(out.into_any())
}

/// Average precomputed per-index ranks; returns (averages, selected k).
#[pyfunction]
fn aggregate_ranks(
    ks: Vec<usize>,
    si: Vec<f64>,
    chi: Vec<f64>,
    dbi: Vec<f64>,
) -> PyResult<(Vec<f64>, usize)> {
    let table = RankTable::from_ranks(&ks, &si, &chi, &dbi).py()?;
    let averages = table.rows.iter().map(|r| r.average_rank).collect();
    Ok((averages, select::select_k(&table)))
}

#[pyfunction]
#[pyo3(signature = (values, labels, min_run_size=refine::DEFAULT_MIN_RUN_SIZE))]
fn split_candidates<'py>(
    py: Python<'py>,
    values: Vec<f64>,
    labels: Vec<usize>,
    min_run_size: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let c = refine::detect_split_candidates(&values, &assignment(labels)?, min_run_size).py()?;
    to_py(py, &c)
}

/// Split clusters that are interrupted by others in value order; returns
/// (new labels, split log).
#[pyfunction]
#[pyo3(signature = (values, labels, min_run_size=refine::DEFAULT_MIN_RUN_SIZE, max_rounds=refine::DEFAULT_MAX_ROUNDS))]
fn refine_clusters<'py>(
    py: Python<'py>,
    values: Vec<f64>,
    labels: Vec<usize>,
    min_run_size: usize,
    max_rounds: usize,
) -> PyResult<(Vec<usize>, Bound<'py, PyAny>)> {
    let r = refine::refine_until_stable(&values, &assignment(labels)?, min_run_size, max_rounds)
        .py()?;
    Ok((r.assignment.labels().to_vec(), to_py(py, &r.log)?))
}

/// Per-cluster statistics with efficiency labels.
#[pyfunction]
fn cluster_stats<'py>(
    py: Python<'py>,
    values: Vec<f64>,
    labels: Vec<usize>,
) -> PyResult<Bound<'py, PyAny>> {
    let stats = analysis::cluster_stats(&values, &assignment(labels)?).py()?;
    let labeling = analysis::label_clusters(&stats);
    let list = PyList::empty(py);
    for s in &stats {
        let row = to_py(py, s)?;
        let label = labeling.label_of(s.cluster_id).map(|l| l.to_string());
        row.set_item("label", label)?;
        list.append(row)?;
    }
    Ok(list.into_any())
}

#[pyfunction]
fn boxplot_outliers<'py>(py: Python<'py>, values: Vec<f64>) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &analysis::boxplot_outliers(&values).py()?)
}

/// Cluster proportions per group id, plus the overall row and dominance flags.
#[pyfunction]
#[pyo3(signature = (groups, labels, deviation_threshold=0.5, dominance_threshold=analysis::DEFAULT_DOMINANCE_THRESHOLD))]
fn group_proportions<'py>(
    py: Python<'py>,
    groups: Vec<String>,
    labels: Vec<usize>,
    deviation_threshold: f64,
    dominance_threshold: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let table = TripTable {
        records: groups
            .into_iter()
            .enumerate()
            .map(|(i, g)| TripRecord {
                trip_id: i.to_string(),
                driver_id: g,
                route_id: String::new(),
                fuel_efficiency: 1.0,
            })
            .collect(),
        source_path: String::new(),
    };
    let props = analysis::group_proportions(&table, &assignment(labels)?, GroupKey::Driver).py()?;
    let report =
        analysis::deviation_report(&props, deviation_threshold, dominance_threshold).py()?;
    let out = PyDict::new(py);
    out.set_item("proportions", to_py(py, &props)?)?;
    out.set_item("deviation", to_py(py, &report)?)?;
    Ok(out.into_any())
}

/// Load a trip CSV; returns (rows as dicts, validation report).
#[pyfunction]
#[pyo3(signature = (path, columns=None))]
fn load_trips<'py>(
    py: Python<'py>,
    path: PathBuf,
    columns: Option<&str>,
) -> PyResult<(Bound<'py, PyAny>, Bound<'py, PyAny>)> {
    let columns: ColumnMap = columns.map(str::parse).transpose().py()?.unwrap_or_default();
    let loaded = ingest::load_trips(&path, &columns).py()?;
    let report = ingest::validate_trips(&loaded.table);
    Ok((to_py(py, &loaded.table.records)?, to_py(py, &report)?))
}

/// Run the full analysis on a CSV and write the report bundle to `out_dir`.
#[pyfunction]
#[pyo3(signature = (input, out_dir, k=None, seed=0, refine=true, k_min=2, k_max=9))]
#[allow(clippy::too_many_arguments)]
fn analyze<'py>(
    py: Python<'py>,
    input: PathBuf,
    out_dir: PathBuf,
    k: Option<usize>,
    seed: u64,
    refine: bool,
    k_min: usize,
    k_max: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let config = PipelineConfig {
        input: Some(input),
        out_dir: out_dir.clone(),
        k,
        seed,
        refine,
        k_min,
        k_max,
        ..Default::default()
    };
    config.validate().py()?;
    let (table, report) = pipeline::load_input(&config).py()?;
    if !report.is_clean() {
        return Err(PyValueError::new_err(format!(
            "{} rows failed validation",
            report.violations.len()
        )));
    }
    let a = py.detach(|| pipeline::analyze(&table, &config)).py()?;
    a.write(&table, &config, &out_dir).py()?;
    to_py(py, &a.summary())
}

#[pymodule]
fn pyfuelclust(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMixtureModel>()?;
    m.add_class::<PyFitResult>()?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(silhouette_index, m)?)?;
    m.add_function(wrap_pyfunction!(calinski_harabasz, m)?)?;
    m.add_function(wrap_pyfunction!(davies_bouldin, m)?)?;
    m.add_function(wrap_pyfunction!(validity_scores, m)?)?;
    m.add_function(wrap_pyfunction!(select_k, m)?)?;
    m.add_function(wrap_pyfunction!(aggregate_ranks, m)?)?;
    m.add_function(wrap_pyfunction!(split_candidates, m)?)?;
    m.add_function(wrap_pyfunction!(refine_clusters, m)?)?;
    m.add_function(wrap_pyfunction!(cluster_stats, m)?)?;
    m.add_function(wrap_pyfunction!(boxplot_outliers, m)?)?;
    m.add_function(wrap_pyfunction!(group_proportions, m)?)?;
    m.add_function(wrap_pyfunction!(load_trips, m)?)?;
    m.add_function(wrap_pyfunction!(analyze, m)?)?;
    Ok(())
}
