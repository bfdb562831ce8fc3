//! Python module `fedcon`: scenario runs plus the core statistical pieces.

use std::path::PathBuf;

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;

use fedcon_core::drift::{self, BetaParams};
use fedcon_core::metrics::Subject;
use fedcon_core::sim::{self, ScenarioConfig};
use fedcon_core::{local_node, server, Error, Posterior};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(e) => PyOSError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

fn posteriors(rows: Vec<Vec<f64>>) -> PyResult<Vec<Posterior>> {
    rows.into_iter().map(|r| Posterior::new(r).map_err(py_err)).collect()
}

/// Scenario configuration. Unknown keys are rejected.
#[pyclass(name = "ScenarioConfig")]
pub struct PyScenarioConfig {
    inner: ScenarioConfig,
}

#[pymethods]
impl PyScenarioConfig {
    #[new]
    #[pyo3(signature = (text = ""))]
    fn new(text: &str) -> PyResult<Self> {
        Ok(Self { inner: ScenarioConfig::from_toml(text).map_err(py_err)? })
    }

    #[staticmethod]
    fn from_file(path: PathBuf) -> PyResult<Self> {
        let text =
            std::fs::read_to_string(&path).map_err(|e| PyOSError::new_err(format!("{}: {e}", path.display())))?;
        Self::new(&text)
    }

    /// Copy with every default filled in.
    fn resolved(&self) -> PyResult<Self> {
        Ok(Self { inner: self.inner.clone().resolved().map_err(py_err)? })
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(py_err)
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[setter]
    fn set_seed(&mut self, seed: u64) {
        self.inner.seed = seed;
    }

    #[getter]
    fn iterations(&self) -> u64 {
        self.inner.iterations
    }

    #[setter]
    fn set_iterations(&mut self, n: u64) {
        self.inner.iterations = n;
    }

    #[getter]
    fn eval_interval(&self) -> u64 {
        self.inner.eval_interval
    }

    #[setter]
    fn set_eval_interval(&mut self, n: u64) {
        self.inner.eval_interval = n;
    }

    #[getter]
    fn devices(&self) -> usize {
        self.inner.device_total()
    }

    /// Best achievable balanced accuracy of the default task, else None.
    fn bayes_balanced_accuracy(&self) -> Option<f64> {
        sim::bayes_balanced_accuracy(&self.inner.data)
    }

    fn __repr__(&self) -> String {
        format!(
            "ScenarioConfig(seed={}, devices={}, iterations={})",
            self.inner.seed,
            self.inner.device_total(),
            self.inner.iterations
        )
    }
}

/// Outcome of `run_scenario`.
#[pyclass(name = "RunResult", frozen)]
pub struct PyRunResult {
    /// `(iteration, subject, balanced_accuracy, sensitivity, specificity)`;
    /// subject is "global" or a device index as a string.
    #[pyo3(get)]
    metrics: Vec<(u64, String, f64, f64, f64)>,
    /// `(iteration, device or None, kind, detail)`.
    #[pyo3(get)]
    events: Vec<(u64, Option<u32>, String, String)>,
    #[pyo3(get)]
    global_members: Vec<u32>,
}

#[pymethods]
impl PyRunResult {
    fn global_at(&self, iteration: u64) -> Option<f64> {
        self.global_series().into_iter().find(|r| r.0 == iteration).map(|r| r.1)
    }

    fn global_series(&self) -> Vec<(u64, f64)> {
        self.metrics.iter().filter(|m| m.1 == "global").map(|m| (m.0, m.2)).collect()
    }

    fn count(&self, kind: &str) -> usize {
        self.events.iter().filter(|e| e.2 == kind).count()
    }
}

#[pyfunction]
fn run_scenario(py: Python<'_>, config: PyRef<'_, PyScenarioConfig>) -> PyResult<PyRunResult> {
    let c = config.inner.clone();
    let out = py.detach(move || sim::run_scenario(&c)).map_err(py_err)?;
    Ok(PyRunResult {
        metrics: out
            .metrics
            .iter()
            .map(|r| {
                let subject = match r.subject {
                    Subject::Global => "global".to_string(),
                    Subject::Device(d) => d.to_string(),
                };
                (r.iteration, subject, r.metrics.balanced_accuracy, r.metrics.sensitivity, r.metrics.specificity)
            })
            .collect(),
        events: out
            .events
            .iter()
            .map(|e| (e.iteration, e.device.map(|d| d.0), e.kind.to_string(), e.detail.clone()))
            .collect(),
        global_members: out.global_members().iter().map(|d| d.0).collect(),
    })
}

/// Writes streams.csv and test.csv for the scenario into `out_dir`.
#[pyfunction]
fn generate(config: PyRef<'_, PyScenarioConfig>, out_dir: PathBuf) -> PyResult<()> {
    let c = config.inner.clone().resolved().map_err(py_err)?;
    let data = sim::scenario_dataset(&c).map_err(py_err)?;
    sim::write_dataset(&out_dir, &data).map_err(py_err)
}

/// Per-class median of the rows, renormalized.
#[pyfunction]
fn median_rule(rows: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
    Ok(local_node::median_rule(&posteriors(rows)?).map_err(py_err)?.probs().to_vec())
}

/// Per-class product of the rows (floored), renormalized.
#[pyfunction]
fn product_rule(rows: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
    Ok(server::product_rule(&posteriors(rows)?).map_err(py_err)?.probs().to_vec())
}

/// `(t, p_value)` of a paired two-sided t-test on `a - b`.
#[pyfunction]
fn paired_t(a: Vec<f64>, b: Vec<f64>) -> PyResult<(f64, f64)> {
    let r = server::paired_t(&a, &b).map_err(py_err)?;
    Ok((r.t, r.p_value))
}

/// +1 if `a` is significantly better than `b`, -1 if worse, else 0.
#[pyfunction]
#[pyo3(signature = (a, b, level = 0.05))]
fn paired_t_test(a: Vec<f64>, b: Vec<f64>, level: f64) -> PyResult<i64> {
    Ok(server::paired_t_test(&a, &b, level).map_err(py_err)?.value())
}

/// Method-of-moments Beta fit: `(a, b)`.
#[pyfunction]
fn estimate_beta(values: Vec<f64>) -> PyResult<(f64, f64)> {
    let p = drift::estimate_beta(&values).map_err(py_err)?;
    Ok((p.a, p.b))
}

#[pyfunction]
fn beta_log_pdf(x: f64, a: f64, b: f64) -> PyResult<f64> {
    Ok(drift::beta_log_pdf(x, BetaParams::new(a, b).map_err(py_err)?))
}

/// `(score, change_point or None)` of one scan over the confidences.
#[pyfunction]
#[pyo3(signature = (confidences, delta = 100, alpha = 0.05))]
fn cusum_scan(confidences: Vec<f64>, delta: usize, alpha: f64) -> (f64, Option<usize>) {
    let r = drift::cusum_scan(&confidences, delta, alpha);
    (r.score, r.change_point)
}

#[pyfunction]
fn derive_seed(master: u64, tag: &str, index: u64) -> u64 {
    sim::derive_seed(master, tag, index)
}

#[pymodule]
mod fedcon {
    #[pymodule_export]
    use super::{
        beta_log_pdf, cusum_scan, derive_seed, estimate_beta, generate, median_rule, paired_t, paired_t_test,
        product_rule, run_scenario, PyRunResult, PyScenarioConfig,
    };
}
