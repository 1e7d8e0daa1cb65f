//! Python module `nbstein`: mixtures, moment matching, bounds, waiting-time
//! patterns and the exact-distance oracle.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use nbstein_core::bounds::{
    corollary_one, corollary_three, corollary_two, theorem_one, theorem_three, theorem_two, BoundReport, Params,
    DEFAULT_TRUNCATION,
};
use nbstein_core::dist::ComponentSpec;
use nbstein_core::k1k2::{self, Form, K1K2Config, TABLE_GRID, TABLE_NS, TABLE_P_BARS};
use nbstein_core::matching::{match_one_param, match_three_param, match_two_param, OneParamMode};
use nbstein_core::moments::{aggregate, AggregateMoments};
use nbstein_core::oracle;

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn form(stated: bool) -> Form {
    if stated {
        Form::Stated
    } else {
        Form::Tabulated
    }
}

/// One summand type of the mixture, repeated `count` times.
#[pyclass(frozen, from_py_object, name = "Component")]
#[derive(Clone)]
struct PyComponent(ComponentSpec);

#[pymethods]
impl PyComponent {
    #[staticmethod]
    #[pyo3(signature = (p, count = 1))]
    fn geometric(p: f64, count: u32) -> PyResult<Self> {
        ComponentSpec::geometric(p, count).map(Self).map_err(err)
    }

    #[staticmethod]
    #[pyo3(signature = (lam, count = 1))]
    fn poisson(lam: f64, count: u32) -> PyResult<Self> {
        ComponentSpec::poisson(lam, count).map(Self).map_err(err)
    }

    #[staticmethod]
    #[pyo3(signature = (n, p, count = 1))]
    fn binomial(n: u32, p: f64, count: u32) -> PyResult<Self> {
        ComponentSpec::binomial(n, p, count).map(Self).map_err(err)
    }

    #[getter]
    fn count(&self) -> u32 {
        self.0.count()
    }

    #[getter]
    fn flags(&self) -> Vec<&'static str> {
        self.0.flags().iter().map(|f| f.as_str()).collect()
    }

    /// Probabilities on `0..len`.
    fn pmf(&self, len: usize) -> PyResult<Vec<f64>> {
        self.0.pmf(len).map(|p| p.probs().to_vec()).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("Component({})", self.0.label())
    }
}

#[pyclass(frozen, get_all, name = "Moments")]
struct PyMoments {
    mu: f64,
    mu2: f64,
    mu3: f64,
    sigma2: f64,
}

impl From<AggregateMoments> for PyMoments {
    fn from(m: AggregateMoments) -> Self {
        Self { mu: m.mu, mu2: m.mu2, mu3: m.mu3, sigma2: m.sigma2 }
    }
}

#[pymethods]
impl PyMoments {
    fn __repr__(&self) -> String {
        format!("Moments(mu={}, mu2={}, mu3={}, sigma2={})", self.mu, self.mu2, self.mu3, self.sigma2)
    }
}

/// A total-variation bound with its parameters and diagnostics.
#[pyclass(frozen, name = "Report")]
struct PyReport(BoundReport);

#[pymethods]
impl PyReport {
    #[getter]
    fn scheme(&self) -> &'static str {
        self.0.scheme.as_str()
    }

    #[getter]
    fn bound(&self) -> f64 {
        self.0.bound
    }

    #[getter]
    fn tail_estimate(&self) -> f64 {
        self.0.tail_estimate
    }

    #[getter]
    fn truncation(&self) -> usize {
        self.0.truncation
    }

    #[getter]
    fn terms(&self) -> Vec<(String, f64)> {
        self.0.terms.iter().map(|t| (t.label.clone(), t.value)).collect()
    }

    #[getter]
    fn flags(&self) -> Vec<&'static str> {
        self.0.flag_names()
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.0.params.nb().alpha
    }

    #[getter]
    fn p(&self) -> f64 {
        self.0.params.nb().p
    }

    /// Success probability of the extra geometric summand, if any.
    #[getter]
    fn p_hat(&self) -> Option<f64> {
        match self.0.params {
            Params::Three(f) => Some(f.p_hat),
            Params::Nb(_) => None,
        }
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.0).expect("report serializes")
    }

    fn __repr__(&self) -> String {
        format!("Report(scheme={}, bound={:e})", self.scheme(), self.0.bound)
    }
}

fn specs(mixture: &[PyComponent]) -> PyResult<Vec<ComponentSpec>> {
    if mixture.is_empty() {
        return Err(PyValueError::new_err("mixture is empty"));
    }
    Ok(mixture.iter().map(|c| c.0.clone()).collect())
}

#[pyfunction]
fn moments(mixture: Vec<PyComponent>) -> PyResult<PyMoments> {
    aggregate(&specs(&mixture)?).map(Into::into).map_err(err)
}

/// Bound on d_TV between the mixture sum and its approximant.
///
/// `scheme` is "one-param", "two-param" or "three-param". One-parameter
/// matching needs `alpha` or `p`.
#[pyfunction]
#[pyo3(signature = (mixture, scheme, alpha = None, p = None, truncation = DEFAULT_TRUNCATION, closed_form = false))]
fn bound(
    mixture: Vec<PyComponent>,
    scheme: &str,
    alpha: Option<f64>,
    p: Option<f64>,
    truncation: usize,
    closed_form: bool,
) -> PyResult<PyReport> {
    let mix = specs(&mixture)?;
    let m = aggregate(&mix).map_err(err)?;
    let report = match scheme {
        "one-param" => {
            let mode = match (alpha, p) {
                (Some(a), None) => OneParamMode::FixedAlpha(a),
                (None, Some(p)) => OneParamMode::FixedP(p),
                _ => return Err(PyValueError::new_err("give exactly one of alpha or p")),
            };
            let params = match_one_param(&m, mode).map_err(err)?;
            if closed_form {
                corollary_one(&mix, &params)
            } else {
                theorem_one(&mix, &params, truncation)
            }
        }
        "two-param" => {
            let params = match_two_param(&m).map_err(err)?;
            if closed_form {
                corollary_two(&mix, &params)
            } else {
                theorem_two(&mix, &params, truncation)
            }
        }
        "three-param" => {
            let fit = match_three_param(&m).map_err(err)?;
            if closed_form {
                corollary_three(&mix, &fit)
            } else {
                theorem_three(&mix, &fit, truncation)
            }
        }
        other => return Err(PyValueError::new_err(format!("unknown scheme {other:?}"))),
    };
    report.map(PyReport).map_err(err)
}

/// Exact distance check: returns (exact_tv, tv_error, margin). Raises if the
/// bound is violated.
#[pyfunction]
fn verify(mixture: Vec<PyComponent>, report: &PyReport) -> PyResult<(f64, f64, f64)> {
    let mix = specs(&mixture)?;
    let len = oracle::mixture_support(&mix).map_err(err)?;
    let d = oracle::verify_domination(&mix, &report.0, len).map_err(err)?;
    Ok((d.exact_tv, d.tv_error, d.margin))
}

/// Probabilities of the mixture sum on `0..len`.
#[pyfunction]
fn mixture_pmf(mixture: Vec<PyComponent>, len: usize) -> PyResult<Vec<f64>> {
    oracle::mixture_pmf(&specs(&mixture)?, len).map(|p| p.probs().to_vec()).map_err(err)
}

/// Waiting time for the n-th occurrence of k1 failures followed by k2
/// successes, counted in trials outside events.
#[pyclass(frozen, name = "Pattern")]
struct PyPattern(K1K2Config);

#[pymethods]
impl PyPattern {
    #[new]
    #[pyo3(signature = (k1, k2, p_bar, n = 1))]
    fn new(k1: u32, k2: u32, p_bar: f64, n: u32) -> PyResult<Self> {
        K1K2Config::new(k1, k2, p_bar, n).map(Self).map_err(err)
    }

    /// Probability that a block of k1 + k2 trials is an event.
    #[getter]
    fn a(&self) -> f64 {
        self.0.a()
    }

    fn b_coeffs(&self, truncation: usize) -> PyResult<Vec<f64>> {
        k1k2::b_coeffs(&self.0, truncation).map(|b| b.to_vec()).map_err(err)
    }

    fn waiting_pmf(&self, len: usize) -> PyResult<Vec<f64>> {
        k1k2::waiting_pmf_recursive(&self.0, len).map(|p| p.probs().to_vec()).map_err(err)
    }

    #[pyo3(signature = (truncation = DEFAULT_TRUNCATION, stated = false))]
    fn one_param_bound(&self, truncation: usize, stated: bool) -> PyResult<PyReport> {
        k1k2::one_param_bound_k1k2(&self.0, truncation, form(stated)).map(PyReport).map_err(err)
    }

    #[pyo3(signature = (truncation = DEFAULT_TRUNCATION, stated = false))]
    fn two_param_bound(&self, truncation: usize, stated: bool) -> PyResult<PyReport> {
        k1k2::two_param_bound_k1k2(&self.0, truncation, form(stated)).map(PyReport).map_err(err)
    }

    /// Histogram of simulated waiting times.
    #[pyo3(signature = (trials, seed = 0))]
    fn simulate(&self, py: Python<'_>, trials: u64, seed: u64) -> PyResult<Vec<u64>> {
        let cfg = self.0;
        py.detach(|| oracle::simulate_k1k2(&cfg, trials, seed)).map(|r| r.counts).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("Pattern(k1={}, k2={}, p_bar={}, n={})", self.0.k1, self.0.k2, self.0.p_bar, self.0.n)
    }
}

type Row = (u32, u32, f64, u32, Option<f64>);

fn rows(cells: Vec<k1k2::TableCell>) -> Vec<Row> {
    cells.into_iter().map(|c| (c.k1, c.k2, c.p_bar, c.n, c.bound())).collect()
}

/// One-parameter bounds over the standard grid as (k1, k2, p_bar, n, bound).
#[pyfunction]
#[pyo3(signature = (truncation = DEFAULT_TRUNCATION, stated = false))]
fn table1(py: Python<'_>, truncation: usize, stated: bool) -> Vec<Row> {
    rows(py.detach(|| k1k2::table1(&TABLE_GRID, &TABLE_P_BARS, truncation, form(stated))))
}

/// Two-parameter bounds over the standard grid for n = 50 and 100.
#[pyfunction]
#[pyo3(signature = (truncation = DEFAULT_TRUNCATION, stated = false))]
fn table2(py: Python<'_>, truncation: usize, stated: bool) -> Vec<Row> {
    rows(py.detach(|| k1k2::table2(&TABLE_GRID, &TABLE_P_BARS, &TABLE_NS, truncation, form(stated))))
}

#[pymodule]
fn nbstein(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyComponent>()?;
    m.add_class::<PyMoments>()?;
    m.add_class::<PyReport>()?;
    m.add_class::<PyPattern>()?;
    m.add_function(wrap_pyfunction!(moments, m)?)?;
    m.add_function(wrap_pyfunction!(bound, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(mixture_pmf, m)?)?;
    m.add_function(wrap_pyfunction!(table1, m)?)?;
    m.add_function(wrap_pyfunction!(table2, m)?)?;
    m.add("DEFAULT_TRUNCATION", DEFAULT_TRUNCATION)?;
    Ok(())
}
