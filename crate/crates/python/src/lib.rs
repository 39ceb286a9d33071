use std::collections::BTreeMap;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use faircomp::cohort::{self, ProbabilityMethod};
use faircomp::competitive;
use faircomp::construct::{self, AllocationTarget};
use faircomp::error::Error;
use faircomp::experiments::{self, demos, Scenario};
use faircomp::functional;
use faircomp::model::{self, GroupStructure, Subject, DEFAULT_EPSILON};
use faircomp::subset;

create_exception!(faircomp, FaircompError, PyException);

fn err(e: Error) -> PyErr {
    FaircompError::new_err(e.to_string())
}

/// Pairwise task metric with distances in [0, 1].
#[pyclass(name = "TaskMetric", frozen)]
struct PyTaskMetric(model::TaskMetric);

#[pymethods]
impl PyTaskMetric {
    #[new]
    fn new(rows: Vec<Vec<f64>>) -> PyResult<Self> {
        model::TaskMetric::new(rows).map(Self).map_err(err)
    }

    #[staticmethod]
    fn abs_diff(values: Vec<f64>) -> PyResult<Self> {
        model::TaskMetric::abs_diff(&values).map(Self).map_err(err)
    }

    #[staticmethod]
    fn uniform(n: usize, d: f64) -> PyResult<Self> {
        model::TaskMetric::uniform(n, d).map(Self).map_err(err)
    }

    #[getter]
    fn size(&self) -> usize {
        self.0.size()
    }

    fn get(&self, u: usize, v: usize) -> PyResult<f64> {
        if u >= self.0.size() || v >= self.0.size() {
            return Err(FaircompError::new_err("element out of range"));
        }
        Ok(self.0.get(u, v))
    }

    fn is_trivial(&self) -> bool {
        self.0.is_trivial()
    }

    fn to_rows(&self) -> Vec<Vec<f64>> {
        self.0.to_rows()
    }

    fn __len__(&self) -> usize {
        self.0.size()
    }

    fn __repr__(&self) -> String {
        format!("TaskMetric(size={})", self.0.size())
    }
}

/// Per-element probability of a positive outcome.
#[pyclass(name = "SoftClassifier", frozen)]
struct PySoftClassifier(model::SoftClassifier);

#[pymethods]
impl PySoftClassifier {
    #[new]
    fn new(p: Vec<f64>) -> PyResult<Self> {
        model::SoftClassifier::new(p).map(Self).map_err(err)
    }

    #[getter]
    fn probabilities(&self) -> Vec<f64> {
        self.0.probabilities().to_vec()
    }

    fn allocation(&self) -> f64 {
        self.0.allocation()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __getitem__(&self, u: usize) -> PyResult<f64> {
        self.0
            .probabilities()
            .get(u)
            .copied()
            .ok_or_else(|| FaircompError::new_err("element out of range"))
    }

    fn __repr__(&self) -> String {
        format!("SoftClassifier({:?})", self.0.probabilities())
    }
}

#[pyclass(name = "FairnessReport", frozen)]
struct PyFairnessReport(model::FairnessReport);

#[pymethods]
impl PyFairnessReport {
    fn passes(&self) -> bool {
        self.0.passes()
    }

    #[getter]
    fn comparisons(&self) -> usize {
        self.0.comparisons
    }

    #[getter]
    fn warnings(&self) -> Vec<String> {
        self.0.warnings.clone()
    }

    /// `(kind, first, second, observed, allowed, excess)` per violation;
    /// kind is `"pair"` or `"stratum:<z>"`.
    #[getter]
    fn violations(&self) -> Vec<(String, u64, u64, f64, f64, f64)> {
        self.0
            .violations
            .iter()
            .map(|v| {
                let (kind, a, b) = match v.subject {
                    Subject::Pair { u, v } => ("pair".to_string(), u as u64, v as u64),
                    Subject::Stratum { stratum, a1, a2 } => (format!("stratum:{stratum}"), u64::from(a1), u64::from(a2)),
                };
                (kind, a, b, v.observed, v.allowed, v.excess)
            })
            .collect()
    }

    fn fraction_violating(&self) -> f64 {
        self.0.fraction_violating()
    }

    fn mean_excess(&self) -> f64 {
        self.0.mean_excess()
    }

    fn max_excess(&self) -> f64 {
        self.0.max_excess()
    }

    fn __repr__(&self) -> String {
        format!(
            "FairnessReport(violations={}, comparisons={}, max_excess={})",
            self.0.violations.len(),
            self.0.comparisons,
            self.0.max_excess()
        )
    }
}

/// How an element chooses between tasks that all accepted it.
#[pyclass(name = "TieBreaker", frozen)]
struct PyTieBreaker(competitive::TieBreaker);

#[pymethods]
impl PyTieBreaker {
    #[staticmethod]
    fn prefer(task: usize, k: usize) -> PyResult<Self> {
        competitive::TieBreaker::prefer(task, k).map(Self).map_err(err)
    }

    #[staticmethod]
    fn strict_order(order: Vec<usize>) -> PyResult<Self> {
        competitive::TieBreaker::strict_order(order).map(Self).map_err(err)
    }

    #[staticmethod]
    fn uniform(k: usize) -> PyResult<Self> {
        competitive::TieBreaker::uniform(k).map(Self).map_err(err)
    }

    /// Per-element probability of taking task 0 when both accept.
    #[staticmethod]
    fn two_task(rho: Vec<f64>) -> PyResult<Self> {
        competitive::TieBreaker::two_task_value(rho).map(Self).map_err(err)
    }
}

fn classifiers(cs: &[PyRef<'_, PySoftClassifier>]) -> Vec<model::SoftClassifier> {
    cs.iter().map(|c| c.0.clone()).collect()
}

#[pyfunction]
#[pyo3(signature = (metric, probabilities, epsilon = DEFAULT_EPSILON))]
fn audit_individual_fairness(metric: PyRef<'_, PyTaskMetric>, probabilities: Vec<f64>, epsilon: f64) -> PyResult<PyFairnessReport> {
    model::audit_individual_fairness(&metric.0, &probabilities, epsilon)
        .map(PyFairnessReport)
        .map_err(err)
}

#[pyfunction]
#[pyo3(signature = (attribute, stratum, probabilities, epsilon = DEFAULT_EPSILON))]
fn audit_conditional_parity(attribute: Vec<u32>, stratum: Vec<u32>, probabilities: Vec<f64>, epsilon: f64) -> PyResult<PyFairnessReport> {
    let g = GroupStructure::new(attribute, stratum).map_err(err)?;
    model::audit_conditional_parity(&g, &probabilities, epsilon)
        .map(PyFairnessReport)
        .map_err(err)
}

/// Metric violations as readable strings; empty when the metric is valid.
#[pyfunction]
fn validate_metric(rows: Vec<Vec<f64>>) -> PyResult<Vec<String>> {
    let m = model::TaskMetric::from_rows_unchecked(rows).map_err(err)?;
    Ok(model::validate_metric(&m).iter().map(ToString::to_string).collect())
}

#[pyfunction]
#[pyo3(signature = (metric, targets, order = None))]
fn build_fair_classifier(metric: PyRef<'_, PyTaskMetric>, targets: Vec<f64>, order: Option<Vec<usize>>) -> PyResult<PySoftClassifier> {
    let order = order.unwrap_or_else(|| (0..targets.len()).collect());
    construct::build_fair_classifier(&metric.0, &targets, &order)
        .map(PySoftClassifier)
        .map_err(err)
}

#[pyfunction]
fn optimize_fair_classifier(metric: PyRef<'_, PyTaskMetric>, utilities: Vec<f64>, cap: f64) -> PyResult<PySoftClassifier> {
    let target = AllocationTarget::new(utilities, cap).map_err(err)?;
    construct::optimize_fair_classifier(&metric.0, &target)
        .map(PySoftClassifier)
        .map_err(err)
}

#[pyfunction]
fn compose_or(cs: Vec<PyRef<'_, PySoftClassifier>>) -> PyResult<Vec<f64>> {
    functional::compose_or(&classifiers(&cs)).map_err(err)
}

#[pyfunction]
fn compose_and(cs: Vec<PyRef<'_, PySoftClassifier>>) -> PyResult<Vec<f64>> {
    functional::compose_and(&classifiers(&cs)).map_err(err)
}

#[pyfunction]
fn compose_threshold(cs: Vec<PyRef<'_, PySoftClassifier>>, k: usize) -> PyResult<Vec<f64>> {
    functional::compose_threshold(&classifiers(&cs), k).map_err(err)
}

/// Per-element, per-task positive probabilities.
#[pyfunction]
fn compose_competitive(cs: Vec<PyRef<'_, PySoftClassifier>>, tie_breaker: PyRef<'_, PyTieBreaker>) -> PyResult<Vec<Vec<f64>>> {
    let so = competitive::compose_competitive(&classifiers(&cs), &tie_breaker.0).map_err(err)?;
    Ok((0..so.num_elements()).map(|u| so.row(u).to_vec()).collect())
}

#[pyfunction]
fn randomize_then_classify(cs: Vec<PyRef<'_, PySoftClassifier>>, x: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
    let so = competitive::randomize_then_classify(&classifiers(&cs), &x).map_err(err)?;
    Ok((0..so.num_elements()).map(|u| so.row(u).to_vec()).collect())
}

/// Selection probabilities of PermuteThenClassify: exact for small
/// universes, otherwise `(mean, std_err)` from `trials` runs.
#[pyfunction]
#[pyo3(signature = (classifier, n, trials = None, seed = 0))]
fn ptc_selection_probabilities(
    classifier: PyRef<'_, PySoftClassifier>,
    n: usize,
    trials: Option<u64>,
    seed: u64,
) -> PyResult<Vec<(f64, f64)>> {
    let method = match trials {
        None => ProbabilityMethod::Exact,
        Some(trials) => ProbabilityMethod::MonteCarlo { trials, seed },
    };
    Ok(cohort::ptc_selection_probabilities(&classifier.0, n, method)
        .map_err(err)?
        .into_iter()
        .map(|e| (e.mean, e.std_err))
        .collect())
}

#[pyfunction]
fn ws_selection_probabilities(classifier: PyRef<'_, PySoftClassifier>, n: usize) -> PyResult<Vec<f64>> {
    cohort::ws_selection_probabilities(&classifier.0, n).map_err(err)
}

#[pyfunction]
fn check_constrained_feasibility<'py>(
    py: Python<'py>,
    a_size: usize,
    b_size: usize,
    n: usize,
    p: f64,
    parts: Vec<(f64, f64)>,
) -> PyResult<Bound<'py, PyDict>> {
    let r = subset::check_constrained_feasibility(a_size, b_size, n, p, &parts).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("mean_a_lower", r.mean_a_lower)?;
    d.set_item("mean_b_upper", r.mean_b_upper)?;
    d.set_item("slack", r.slack)?;
    d.set_item("gap", r.gap)?;
    d.set_item("feasible", r.feasible)?;
    d.set_item("p_max", r.p_max)?;
    Ok(d)
}

/// Group means per `(stratum, attribute)`.
#[pyfunction]
fn group_means(attribute: Vec<u32>, stratum: Vec<u32>, probabilities: Vec<f64>) -> PyResult<BTreeMap<(u32, u32), f64>> {
    let g = GroupStructure::new(attribute, stratum).map_err(err)?;
    model::group_means(&g, &probabilities).map_err(err)
}

#[pyfunction]
fn run_demo(name: &str) -> PyResult<String> {
    demos::run_demo(name).map_err(err)
}

/// Runs a scenario given as TOML text and returns the report rows as
/// `(composition_type, task, pct_pairs_violating, avg_violation, max_violation)`.
#[pyfunction]
fn run_scenario(py: Python<'_>, toml_text: &str) -> PyResult<Vec<(String, String, f64, Option<f64>, Option<f64>)>> {
    let scenario = Scenario::from_toml_str(toml_text).map_err(err)?;
    let out = py.detach(|| experiments::run_scenario(&scenario)).map_err(err)?;
    Ok(out
        .rows
        .into_iter()
        .map(|r| (r.composition_type, r.task, r.pct_pairs_violating, r.avg_violation, r.max_violation))
        .collect())
}

#[pymodule(name = "faircomp")]
fn faircomp_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("FaircompError", m.py().get_type::<FaircompError>())?;
    m.add("DEFAULT_EPSILON", DEFAULT_EPSILON)?;
    m.add_class::<PyTaskMetric>()?;
    m.add_class::<PySoftClassifier>()?;
    m.add_class::<PyFairnessReport>()?;
    m.add_class::<PyTieBreaker>()?;
    m.add_function(wrap_pyfunction!(audit_individual_fairness, m)?)?;
    m.add_function(wrap_pyfunction!(audit_conditional_parity, m)?)?;
    m.add_function(wrap_pyfunction!(validate_metric, m)?)?;
    m.add_function(wrap_pyfunction!(build_fair_classifier, m)?)?;
    m.add_function(wrap_pyfunction!(optimize_fair_classifier, m)?)?;
    m.add_function(wrap_pyfunction!(compose_or, m)?)?;
    m.add_function(wrap_pyfunction!(compose_and, m)?)?;
    m.add_function(wrap_pyfunction!(compose_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(compose_competitive, m)?)?;
    m.add_function(wrap_pyfunction!(randomize_then_classify, m)?)?;
    m.add_function(wrap_pyfunction!(ptc_selection_probabilities, m)?)?;
    m.add_function(wrap_pyfunction!(ws_selection_probabilities, m)?)?;
    m.add_function(wrap_pyfunction!(check_constrained_feasibility, m)?)?;
    m.add_function(wrap_pyfunction!(group_means, m)?)?;
    m.add_function(wrap_pyfunction!(run_demo, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    Ok(())
}
