//! Python bindings for the `mixclust` library.

use std::collections::BTreeMap;
use std::path::PathBuf;

use ::mixclust as core;
use core::io::{read_matrix, sd_filter, MatrixFormat, SdFilter};
use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(err: core::Error) -> PyErr {
    if err.is_numerical() {
        PyArithmeticError::new_err(err.to_string())
    } else {
        PyValueError::new_err(err.to_string())
    }
}

trait IntoPy<T> {
    fn py_err(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for core::Result<T> {
    fn py_err(self) -> PyResult<T> {
        self.map_err(to_py)
    }
}

fn config(restarts: usize, max_iter: usize, tol: f64, seed: u64) -> PyResult<core::FitConfig> {
    let c = core::FitConfig {
        restarts,
        max_iter,
        rel_tol: tol,
        seed,
        ..Default::default()
    };
    c.validate().py_err()?;
    Ok(c)
}

fn params_tuple(p: &core::ComponentParams) -> (f64, f64, f64, f64) {
    (p.mu1, p.var1, p.mu2, p.var2)
}

/// Multi-platform data set; every platform holds the same subjects.
#[pyclass(name = "DataSet", module = "mixclust", frozen)]
pub struct PyDataSet {
    inner: core::DataSet,
}

#[pymethods]
impl PyDataSet {
    /// Builds a data set from `{platform_id: rows}` where each row is one
    /// probe across all subjects.
    #[staticmethod]
    #[pyo3(signature = (platforms, subject_ids=None))]
    fn from_rows(platforms: BTreeMap<String, Vec<Vec<f64>>>, subject_ids: Option<Vec<String>>) -> PyResult<Self> {
        let mut matrices = Vec::new();
        for (pid, rows) in &platforms {
            let n = rows.first().map_or(0, Vec::len);
            let ids = subject_ids
                .clone()
                .unwrap_or_else(|| (0..n).map(|i| format!("s{i}")).collect());
            let probes = (0..rows.len()).map(|j| format!("{pid}_{j}")).collect();
            matrices.push(core::PlatformMatrix::from_rows(pid, probes, ids, rows).py_err()?);
        }
        Ok(Self {
            inner: core::DataSet::new(matrices).py_err()?,
        })
    }

    /// Reads `{platform_id: path}` delimited matrices.
    #[staticmethod]
    fn read(platforms: BTreeMap<String, PathBuf>) -> PyResult<Self> {
        let matrices = platforms
            .iter()
            .map(|(pid, path)| read_matrix(path, pid, MatrixFormat::from_path(path)))
            .collect::<core::Result<Vec<_>>>()
            .py_err()?;
        Ok(Self {
            inner: core::DataSet::new(matrices).py_err()?,
        })
    }

    #[getter]
    fn subject_ids(&self) -> Vec<String> {
        self.inner.subject_ids().to_vec()
    }

    #[getter]
    fn platform_ids(&self) -> Vec<String> {
        self.inner
            .platforms()
            .iter()
            .map(|p| p.platform_id().to_string())
            .collect()
    }

    #[getter]
    fn n_subjects(&self) -> usize {
        self.inner.n_subjects()
    }

    fn n_probes(&self, platform: usize) -> PyResult<usize> {
        self.inner
            .platforms()
            .get(platform)
            .map(|p| p.n_probes())
            .ok_or_else(|| PyValueError::new_err("platform index out of range"))
    }

    /// Subject `i` as one list per platform.
    fn profile(&self, i: usize) -> PyResult<Vec<Vec<f64>>> {
        if i >= self.inner.n_subjects() {
            return Err(PyValueError::new_err("subject index out of range"));
        }
        Ok(self.inner.profile(i).into_iter().map(<[f64]>::to_vec).collect())
    }

    fn select_subjects(&self, keep: Vec<usize>) -> PyResult<Self> {
        Ok(Self {
            inner: self.inner.select_subjects(&keep).py_err()?,
        })
    }

    /// Probe filtering on one platform by standard deviation threshold or top-m.
    #[pyo3(signature = (platform_id, threshold=None, top=None))]
    fn sd_filter(&self, platform_id: &str, threshold: Option<f64>, top: Option<usize>) -> PyResult<Self> {
        let rule = match (threshold, top) {
            (Some(t), None) => SdFilter::Threshold(t),
            (None, Some(m)) => SdFilter::Top(m),
            _ => return Err(PyValueError::new_err("give exactly one of threshold or top")),
        };
        let mut found = false;
        let platforms = self
            .inner
            .platforms()
            .iter()
            .map(|p| {
                if p.platform_id() == platform_id {
                    found = true;
                    sd_filter(p, rule)
                } else {
                    Ok(p.clone())
                }
            })
            .collect::<core::Result<Vec<_>>>()
            .py_err()?;
        if !found {
            return Err(PyValueError::new_err(format!("unknown platform {platform_id:?}")));
        }
        Ok(Self {
            inner: core::DataSet::new(platforms).py_err()?,
        })
    }

    fn __repr__(&self) -> String {
        format!(
            "DataSet(n_subjects={}, platforms={:?})",
            self.inner.n_subjects(),
            self.platform_ids()
        )
    }
}

/// Result of agglomerative clustering.
#[pyclass(name = "Dendrogram", module = "mixclust", frozen)]
pub struct PyDendrogram {
    inner: core::Dendrogram,
}

#[pymethods]
impl PyDendrogram {
    /// `(cluster_a, cluster_b, loglik)` per merge; subjects are `0..n`, the
    /// cluster made at step `t` is `n + t`.
    #[getter]
    fn merges(&self) -> Vec<(usize, usize, f64)> {
        self.inner
            .merges
            .iter()
            .map(|m| (m.cluster_a, m.cluster_b, m.loglik))
            .collect()
    }

    /// Partition log-likelihood after 0, 1, …, n−1 merges.
    #[getter]
    fn loglik_trace(&self) -> Vec<f64> {
        self.inner.loglik_trace.clone()
    }

    fn to_newick(&self) -> String {
        self.inner.to_newick()
    }

    /// Cluster label per subject at the likelihood-selected level.
    #[pyo3(signature = (min_cluster_size=None, k=None))]
    fn select(&self, min_cluster_size: Option<usize>, k: Option<usize>) -> PyResult<Vec<usize>> {
        Ok(core::select_partition(&self.inner, min_cluster_size, k)
            .py_err()?
            .assignment()
            .to_vec())
    }
}

/// Trained discriminant classifier.
#[pyclass(name = "Classifier", module = "mixclust", frozen)]
pub struct PyClassifier {
    inner: core::Classifier,
}

#[pymethods]
impl PyClassifier {
    #[getter]
    fn labels(&self) -> Vec<String> {
        self.inner.clusters.iter().map(|c| c.label.clone()).collect()
    }

    /// `(cluster, scores)` per subject; a degenerate score is `None`.
    fn classify(&self, data: &PyDataSet) -> PyResult<Vec<(usize, Vec<Option<f64>>)>> {
        let aligned = self.inner.align(&data.inner).py_err()?;
        let res = self.inner.classify_all(&aligned).py_err()?;
        Ok(res.into_iter().map(|c| (c.cluster, c.scores)).collect())
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().py_err()
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: core::Classifier::from_json(text).py_err()?,
        })
    }
}

#[pyfunction]
fn log_normal_density(y: f64, mu: f64, var: f64) -> PyResult<f64> {
    core::log_normal_density(y, mu, var).py_err()
}

#[pyfunction]
fn log_mix_term(logp1: f64, logp0: f64, logf1: f64, logf0: f64) -> f64 {
    core::log_mix_term(logp1, logp0, logf1, logf0)
}

/// Two-component fit of one subject profile (one list per platform).
#[pyfunction]
#[pyo3(signature = (profile, restarts=10, max_iter=500, tol=1e-8, seed=0))]
fn fit_subject<'py>(
    py: Python<'py>,
    profile: Vec<Vec<f64>>,
    restarts: usize,
    max_iter: usize,
    tol: f64,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = config(restarts, max_iter, tol, seed)?;
    let views: Vec<&[f64]> = profile.iter().map(Vec::as_slice).collect();
    let fit = py.detach(|| core::fit_subject(&views, &cfg)).py_err()?;
    let d = PyDict::new(py);
    d.set_item(
        "theta",
        fit.theta.platforms.iter().map(params_tuple).collect::<Vec<_>>(),
    )?;
    d.set_item("pi1", fit.pi1)?;
    d.set_item("loglik", fit.loglik)?;
    d.set_item("posteriors", fit.posteriors)?;
    Ok(d)
}

/// Joint fit of one cluster of subjects.
#[pyfunction]
#[pyo3(signature = (data, members, restarts=10, max_iter=500, tol=1e-8, seed=0))]
fn fit_cluster<'py>(
    py: Python<'py>,
    data: &PyDataSet,
    members: Vec<usize>,
    restarts: usize,
    max_iter: usize,
    tol: f64,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = config(restarts, max_iter, tol, seed)?;
    let fit = py
        .detach(|| core::fit_cluster(&data.inner, &members, None, &cfg))
        .py_err()?;
    let d = PyDict::new(py);
    d.set_item("members", fit.members)?;
    d.set_item("pi1", fit.pi1)?;
    d.set_item("gamma", fit.gamma)?;
    d.set_item(
        "theta",
        fit.theta
            .iter()
            .map(|t| t.platforms.iter().map(params_tuple).collect::<Vec<_>>())
            .collect::<Vec<_>>(),
    )?;
    d.set_item("loglik", fit.loglik)?;
    Ok(d)
}

#[pyfunction]
#[pyo3(signature = (data, restarts=10, max_iter=500, tol=1e-8, seed=0))]
fn hierarchical_cluster(
    py: Python<'_>,
    data: &PyDataSet,
    restarts: usize,
    max_iter: usize,
    tol: f64,
    seed: u64,
) -> PyResult<PyDendrogram> {
    let cfg = config(restarts, max_iter, tol, seed)?;
    let inner = py.detach(|| core::hierarchical_cluster(&data.inner, &cfg)).py_err()?;
    Ok(PyDendrogram { inner })
}

/// Mixture-of-clusters refinement starting from `assignment`.
#[pyfunction]
#[pyo3(signature = (data, assignment, restarts=10, max_iter=500, tol=1e-8, seed=0, freeze_indicators=false))]
#[allow(clippy::too_many_arguments)]
fn refine<'py>(
    py: Python<'py>,
    data: &PyDataSet,
    assignment: Vec<usize>,
    restarts: usize,
    max_iter: usize,
    tol: f64,
    seed: u64,
    freeze_indicators: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let mut cfg = config(restarts, max_iter, tol, seed)?;
    cfg.freeze_indicators = freeze_indicators;
    let init = core::Partition::from_labels(&assignment).py_err()?;
    let r = py
        .detach(|| core::refine_partition(&data.inner, &init, &cfg))
        .py_err()?;
    let d = PyDict::new(py);
    d.set_item("assignment", r.partition.assignment().to_vec())?;
    d.set_item("tau", r.tau)?;
    d.set_item("p", r.p)?;
    d.set_item("mixture_loglik", r.mixture_loglik)?;
    d.set_item("objective_loglik", r.objective_loglik)?;
    d.set_item("trace", r.trace)?;
    Ok(d)
}

#[pyfunction]
#[pyo3(signature = (data, assignment, restarts=10, max_iter=500, tol=1e-8, seed=0))]
fn train_classifier(
    py: Python<'_>,
    data: &PyDataSet,
    assignment: Vec<usize>,
    restarts: usize,
    max_iter: usize,
    tol: f64,
    seed: u64,
) -> PyResult<PyClassifier> {
    let cfg = config(restarts, max_iter, tol, seed)?;
    let p = core::Partition::from_labels(&assignment).py_err()?;
    let inner = py.detach(|| core::train_classifier(&data.inner, &p, &cfg)).py_err()?;
    Ok(PyClassifier { inner })
}

/// Exhaustive best partition for at most eight subjects: `(assignment, loglik)`.
#[pyfunction]
#[pyo3(signature = (data, restarts=10, max_iter=500, tol=1e-8, seed=0))]
fn brute_force_best_partition(
    py: Python<'_>,
    data: &PyDataSet,
    restarts: usize,
    max_iter: usize,
    tol: f64,
    seed: u64,
) -> PyResult<(Vec<usize>, f64)> {
    let cfg = config(restarts, max_iter, tol, seed)?;
    let r = py
        .detach(|| core::brute_force_best_partition(&data.inner, &cfg, core::simulate::ORACLE_N_MAX))
        .py_err()?;
    Ok((r.partition.assignment().to_vec(), r.loglik))
}

/// Simulated data set and its planted assignment. `spec` is a JSON document;
/// the built-in default spec is used when omitted.
#[pyfunction]
#[pyo3(signature = (spec=None, seed=None))]
fn simulate(spec: Option<&str>, seed: Option<u64>) -> PyResult<(PyDataSet, Vec<usize>)> {
    let mut spec: core::SimSpec = match spec {
        Some(s) => serde_json::from_str(s).map_err(|e| PyValueError::new_err(e.to_string()))?,
        None => core::SimSpec::default(),
    };
    if let Some(s) = seed {
        spec.seed = s;
    }
    let (inner, truth) = core::generate_dataset(&spec).py_err()?;
    Ok((PyDataSet { inner }, truth.partition.assignment().to_vec()))
}

#[pyfunction]
fn adjusted_rand_index(a: Vec<usize>, b: Vec<usize>) -> PyResult<f64> {
    let pa = core::Partition::from_labels(&a).py_err()?;
    let pb = core::Partition::from_labels(&b).py_err()?;
    core::adjusted_rand_index(&pa, &pb).py_err()
}

#[pymodule]
fn mixclust(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataSet>()?;
    m.add_class::<PyDendrogram>()?;
    m.add_class::<PyClassifier>()?;
    m.add_function(wrap_pyfunction!(log_normal_density, m)?)?;
    m.add_function(wrap_pyfunction!(log_mix_term, m)?)?;
    m.add_function(wrap_pyfunction!(fit_subject, m)?)?;
    m.add_function(wrap_pyfunction!(fit_cluster, m)?)?;
    m.add_function(wrap_pyfunction!(hierarchical_cluster, m)?)?;
    m.add_function(wrap_pyfunction!(refine, m)?)?;
    m.add_function(wrap_pyfunction!(train_classifier, m)?)?;
    m.add_function(wrap_pyfunction!(brute_force_best_partition, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(adjusted_rand_index, m)?)?;
    Ok(())
}
