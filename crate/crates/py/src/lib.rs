//! Python bindings: the Negative Binomial core, panel ingestion, the
//! estimation pipeline, bootstrap intervals, the goodness-of-fit test and
//! the cluster-tracing simulator.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use reprodist_core::bootstrap::{bootstrap_ci, BootstrapConfig, BootstrapMode};
use reprodist_core::config::PipelineConfig;
use reprodist_core::estimate::{derived_probabilities, run_pipeline, ParamFit};
use reprodist_core::gof;
use reprodist_core::negbin::{nb_sample, NegBinParams, ThinningRate};
use reprodist_core::panel::{select_gof_districts, CasePanel, GofSelection};
use reprodist_core::rng::RngSeed;
use reprodist_core::sim;
use reprodist_core::Error;

fn to_py_err(err: Error) -> PyErr {
    match err {
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn parse_date(s: &str) -> PyResult<NaiveDate> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .map_err(|e| PyValueError::new_err(format!("invalid date `{s}`: {e}")))
}

fn thin_rate(p0: f64) -> PyResult<ThinningRate> {
    ThinningRate::new(p0).map_err(to_py_err)
}

/// Generalized Negative Binomial law `(p, r)`.
#[pyclass(name = "NegBin", from_py_object)]
#[derive(Clone)]
struct PyNegBin {
    inner: NegBinParams,
}

#[pymethods]
impl PyNegBin {
    #[new]
    fn new(p: f64, r: f64) -> PyResult<Self> {
        Ok(Self {
            inner: NegBinParams::new(p, r).map_err(to_py_err)?,
        })
    }

    #[getter]
    fn p(&self) -> f64 {
        self.inner.p()
    }

    #[getter]
    fn r(&self) -> f64 {
        self.inner.r()
    }

    #[getter]
    fn mean(&self) -> f64 {
        self.inner.mean()
    }

    #[getter]
    fn variance(&self) -> f64 {
        self.inner.variance()
    }

    /// Dispersion parameter in `Var = mean (1 + mean/kappa)`; equals `r`.
    #[getter]
    fn kappa(&self) -> f64 {
        self.inner.kappa()
    }

    /// Variance-to-mean ratio `1/p`.
    #[getter]
    fn cv(&self) -> f64 {
        self.inner.cv()
    }

    fn pmf(&self, k: u64) -> f64 {
        self.inner.pmf(k)
    }

    fn cdf(&self, k: u64) -> f64 {
        self.inner.cdf(k)
    }

    /// Law after binomial thinning with reporting rate `p0`.
    fn thinned(&self, p0: f64) -> PyResult<Self> {
        Ok(Self {
            inner: self.inner.thinned(thin_rate(p0)?),
        })
    }

    /// Law of the sum of `m` independent copies (`m` may be fractional).
    fn aggregated(&self, m: f64) -> PyResult<Self> {
        Ok(Self {
            inner: self.inner.aggregated(m).map_err(to_py_err)?,
        })
    }

    /// `n` i.i.d. draws, deterministic in the seed.
    #[pyo3(signature = (n, seed = 0))]
    fn sample(&self, n: usize, seed: u64) -> Vec<u64> {
        nb_sample(&self.inner, n, RngSeed(seed))
    }

    /// `(P(R = 0), P(1 <= R <= 5), P(R >= 20))`.
    fn derived_probabilities(&self) -> (f64, f64, f64) {
        let probs = derived_probabilities(&self.inner);
        (probs.p_zero, probs.p_one_to_five, probs.p_twenty_plus)
    }

    fn __repr__(&self) -> String {
        format!("NegBin(p={}, r={})", self.inner.p(), self.inner.r())
    }
}

/// Daily case counts per date and district plus the national aggregate.
#[pyclass(name = "Panel")]
struct PyPanel {
    inner: CasePanel,
}

#[pymethods]
impl PyPanel {
    /// Load a `date,district_id,cases` file.
    #[staticmethod]
    #[pyo3(signature = (path, fill_missing = false))]
    fn load(path: &str, fill_missing: bool) -> PyResult<Self> {
        let mut cfg = PipelineConfig::default();
        cfg.fill_missing = fill_missing;
        Ok(Self {
            inner: CasePanel::load_csv(path, &cfg).map_err(to_py_err)?,
        })
    }

    #[getter]
    fn dates(&self) -> Vec<String> {
        self.inner.dates().iter().map(|d| d.to_string()).collect()
    }

    #[getter]
    fn districts(&self) -> Vec<String> {
        self.inner.districts().to_vec()
    }

    #[getter]
    fn national(&self) -> Vec<u64> {
        self.inner.national().to_vec()
    }

    /// Rolling sum over the `window` days ending at `date`.
    #[pyo3(signature = (date, district = None, window = 7))]
    fn weekly_sum(&self, date: &str, district: Option<&str>, window: u32) -> PyResult<u64> {
        self.inner
            .weekly_sum(parse_date(date)?, district, window)
            .map_err(to_py_err)
    }

    fn __len__(&self) -> usize {
        self.inner.n_dates()
    }
}

fn pipeline_config(
    p0_grid: Vec<f64>,
    tau: u32,
    gen_time: u32,
    window: u32,
) -> PyResult<PipelineConfig> {
    let mut cfg = PipelineConfig::default();
    cfg.tau = tau;
    cfg.gen_time = gen_time;
    cfg.window = window;
    cfg.p0_grid = p0_grid
        .into_iter()
        .map(ThinningRate::new)
        .collect::<Result<_, _>>()
        .map_err(to_py_err)?;
    cfg.validate().map_err(to_py_err)?;
    Ok(cfg)
}

/// Run the estimation pipeline; one dict per date with the raw and
/// smoothed moments and a `fits` dict keyed by reporting rate.
#[pyfunction]
#[pyo3(signature = (panel, p0_grid = vec![0.2, 0.35, 0.5], tau = 7, gen_time = 4, window = 7))]
fn estimate_pipeline<'py>(
    py: Python<'py>,
    panel: &PyPanel,
    p0_grid: Vec<f64>,
    tau: u32,
    gen_time: u32,
    window: u32,
) -> PyResult<Bound<'py, PyList>> {
    let cfg = pipeline_config(p0_grid, tau, gen_time, window)?;
    let series = run_pipeline(&panel.inner, &cfg).map_err(to_py_err)?;
    let out = PyList::empty(py);
    for rec in &series.records {
        let d = PyDict::new(py);
        d.set_item("date", rec.t.to_string())?;
        d.set_item("effective_date", rec.effective_date.to_string())?;
        d.set_item("r0_hat", rec.r0_hat)?;
        d.set_item("var_s_scaled", rec.var_s_scaled)?;
        d.set_item("r0_smooth", rec.r0_smooth)?;
        d.set_item("var_s_smooth", rec.var_s_smooth)?;
        let fits = PyDict::new(py);
        for (p0, fit) in &rec.per_p0 {
            match fit {
                ParamFit::Solved {
                    p_hat,
                    r_hat,
                    var_r_hat,
                } => {
                    let entry = PyDict::new(py);
                    entry.set_item("p_hat", p_hat)?;
                    entry.set_item("r_hat", r_hat)?;
                    entry.set_item("var_r_hat", var_r_hat)?;
                    fits.set_item(p0.value(), entry)?;
                }
                ParamFit::Unsolvable { .. } => fits.set_item(p0.value(), py.None())?,
            }
        }
        d.set_item("fits", fits)?;
        out.append(d)?;
    }
    Ok(out)
}

/// Pointwise bootstrap confidence intervals for the mean reproduction
/// number; `mode` is "recursive" or "fixed".
#[pyfunction]
#[pyo3(signature = (panel, p0, replicates = 1000, alpha = 0.05, mode = "recursive", seed = 0,
                    tau = 7, gen_time = 4, window = 7))]
#[allow(clippy::too_many_arguments)]
fn bootstrap_intervals<'py>(
    py: Python<'py>,
    panel: &PyPanel,
    p0: f64,
    replicates: usize,
    alpha: f64,
    mode: &str,
    seed: u64,
    tau: u32,
    gen_time: u32,
    window: u32,
) -> PyResult<Bound<'py, PyList>> {
    let cfg = pipeline_config(vec![p0], tau, gen_time, window)?;
    let mode = match mode {
        "recursive" => BootstrapMode::Recursive,
        "fixed" | "fixed-denominator" => BootstrapMode::FixedDenominator,
        other => {
            return Err(PyValueError::new_err(format!(
                "mode must be `recursive` or `fixed`, got `{other}`"
            )))
        }
    };
    let bcfg = BootstrapConfig {
        replicates,
        alpha,
        p0: thin_rate(p0)?,
        mode,
        seed: RngSeed(seed),
    };
    let series = run_pipeline(&panel.inner, &cfg).map_err(to_py_err)?;
    let band = bootstrap_ci(&panel.inner, &series, &bcfg, &cfg).map_err(to_py_err)?;
    let out = PyList::empty(py);
    for e in &band.entries {
        let d = PyDict::new(py);
        d.set_item("date", e.t.to_string())?;
        d.set_item("point", e.point)?;
        d.set_item("lower", e.lower)?;
        d.set_item("upper", e.upper)?;
        out.append(d)?;
    }
    Ok(out)
}

/// Probability-generating-function goodness-of-fit statistic.
#[pyfunction]
#[pyo3(signature = (values, a = 5.0))]
fn meintanis_statistic(values: Vec<u64>, a: f64) -> PyResult<f64> {
    gof::meintanis_statistic(&values, a).map_err(to_py_err)
}

/// Moment fit of a Negative Binomial to a sample; returns a `NegBin`.
#[pyfunction]
fn nb_moment_fit(values: Vec<u64>) -> PyResult<PyNegBin> {
    Ok(PyNegBin {
        inner: gof::nb_moment_fit(&values).map_err(to_py_err)?,
    })
}

/// Scan every admissible date of a panel with the bootstrap
/// goodness-of-fit test.
#[pyfunction]
#[pyo3(signature = (panel, a = 5.0, replicates = 499, seed = 0, band = (15.0, 25.0),
                    min_districts = 75, tau = 7, gen_time = 4, window = 7))]
#[allow(clippy::too_many_arguments)]
fn gof_scan<'py>(
    py: Python<'py>,
    panel: &PyPanel,
    a: f64,
    replicates: usize,
    seed: u64,
    band: (f64, f64),
    min_districts: usize,
    tau: u32,
    gen_time: u32,
    window: u32,
) -> PyResult<Bound<'py, PyList>> {
    let mut cfg = pipeline_config(vec![0.2], tau, gen_time, window)?;
    cfg.gof_band = band;
    cfg.gof_min_districts = min_districts;
    cfg.validate().map_err(to_py_err)?;

    let out = PyList::empty(py);
    let first = (cfg.gen_time + cfg.window - 1) as usize;
    for (i, t) in panel.inner.dates().iter().enumerate().skip(first) {
        let selection = select_gof_districts(&panel.inner, *t, &cfg).map_err(to_py_err)?;
        let GofSelection::Selected(sample) = selection else {
            continue;
        };
        match gof::gof_test(&sample, a, replicates, RngSeed(seed ^ i as u64)) {
            Ok(res) => {
                let d = PyDict::new(py);
                d.set_item("date", res.t.to_string())?;
                d.set_item("n", res.sample_size)?;
                d.set_item("statistic", res.statistic)?;
                d.set_item("p_value", res.p_value)?;
                d.set_item("q_hat", res.fitted.p())?;
                d.set_item("r_hat", res.fitted.r())?;
                d.set_item("reject_at_5pct", res.reject_at_5pct)?;
                out.append(d)?;
            }
            Err(Error::Underdispersed { .. }) => continue,
            Err(e) => return Err(to_py_err(e)),
        }
    }
    Ok(out)
}

/// Simulate cluster tracing: observed clusters larger than `cluster_size`
/// have a fraction `effectiveness` of their cases isolated.
///
/// `params` maps infection dates (ISO strings) to `NegBin` laws, e.g.
/// built from `estimate_pipeline` fits. Returns the per-date mean and
/// 5%/95% quantile fan plus per-trial cumulative totals.
#[pyfunction]
#[pyo3(signature = (params, start, end, p0, cluster_size, effectiveness, seed_cases,
                    trials = 10_000, seed = 0, gen_time = 4))]
#[allow(clippy::too_many_arguments)]
fn simulate_cluster_tracing<'py>(
    py: Python<'py>,
    params: BTreeMap<String, PyNegBin>,
    start: &str,
    end: &str,
    p0: f64,
    cluster_size: u64,
    effectiveness: f64,
    seed_cases: u64,
    trials: usize,
    seed: u64,
    gen_time: u32,
) -> PyResult<Bound<'py, PyDict>> {
    let mut laws = BTreeMap::new();
    for (date, law) in params {
        laws.insert(parse_date(&date)?, law.inner);
    }
    let scenario = sim::Scenario {
        start: parse_date(start)?,
        end: parse_date(end)?,
        params: laws,
        p0: thin_rate(p0)?,
        cluster_size,
        effectiveness,
        trials,
        seed: RngSeed(seed),
        seed_cases,
        gen_time,
    };
    let fan = sim::run_scenario(&scenario).map_err(to_py_err)?;
    let d = PyDict::new(py);
    d.set_item(
        "dates",
        fan.dates.iter().map(|t| t.to_string()).collect::<Vec<_>>(),
    )?;
    d.set_item("mean", fan.mean)?;
    d.set_item("q05", fan.q05)?;
    d.set_item("q95", fan.q95)?;
    d.set_item("cumulative", fan.cumulative)?;
    Ok(d)
}

#[pymodule]
fn reprodist_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyNegBin>()?;
    m.add_class::<PyPanel>()?;
    m.add_function(wrap_pyfunction!(estimate_pipeline, m)?)?;
    m.add_function(wrap_pyfunction!(bootstrap_intervals, m)?)?;
    m.add_function(wrap_pyfunction!(meintanis_statistic, m)?)?;
    m.add_function(wrap_pyfunction!(nb_moment_fit, m)?)?;
    m.add_function(wrap_pyfunction!(gof_scan, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_cluster_tracing, m)?)?;
    Ok(())
}
