//! Python bindings for the stancesim simulator.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use stancesim::engine::{self, Baseline, RunConfig, SummaryRow, SweepOptions};
use stancesim::error::SimError;
use stancesim::metrics::{self, stats, MetricReport, OpinionScale};
use stancesim::model::{ClickHistory, ExposureMatrix, PreferenceMatrix, Slate, SlateSet};
use stancesim::moderate::{self, ModeratorKind, QuotaMode};
use stancesim::recommend::RecommenderKind;
use stancesim::rng::SeedTree;

fn to_py(e: SimError) -> PyErr {
    match e {
        SimError::Config(_) | SimError::Input(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn report_dict(m: &MetricReport) -> BTreeMap<&'static str, f64> {
    BTreeMap::from([
        ("ctr", m.ctr),
        ("jsd_o", m.jsd_o_shown),
        ("jsd_g", m.jsd_g_shown),
        ("jsd_o_read", m.jsd_o_read),
        ("jsd_g_read", m.jsd_g_read),
        ("ums", m.ums),
        ("umoe", m.umoe),
    ])
}

fn parse_kind<T: Copy>(value: &str, all: &[T], name: fn(T) -> &'static str) -> PyResult<T> {
    all.iter()
        .copied()
        .find(|&k| name(k).eq_ignore_ascii_case(value))
        .ok_or_else(|| PyValueError::new_err(format!("unknown kind '{value}'")))
}

const RECOMMENDERS: [RecommenderKind; 5] = [
    RecommenderKind::Oracle,
    RecommenderKind::Inaccurate,
    RecommenderKind::Random,
    RecommenderKind::Mf,
    RecommenderKind::Pp,
];

const MODERATORS: [ModeratorKind; 5] =
    [ModeratorKind::None, ModeratorKind::Rr, ModeratorKind::Kc, ModeratorKind::Rd, ModeratorKind::Sd];

/// Run configuration. Keyword arguments override the defaults (or `toml`).
#[pyclass(name = "RunConfig", from_py_object)]
#[derive(Clone)]
struct PyRunConfig {
    inner: RunConfig,
}

#[pymethods]
impl PyRunConfig {
    #[new]
    #[pyo3(signature = (toml=None, *, scenario=None, recommender=None, moderator=None, gamma=None, lambda_=None, alpha=None, beta=None, seed=None, steps=None, k=None, users=None, items=None))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        toml: Option<&str>,
        scenario: Option<u8>,
        recommender: Option<&str>,
        moderator: Option<&str>,
        gamma: Option<f64>,
        lambda_: Option<f64>,
        alpha: Option<usize>,
        beta: Option<f64>,
        seed: Option<u64>,
        steps: Option<usize>,
        k: Option<usize>,
        users: Option<usize>,
        items: Option<usize>,
    ) -> PyResult<Self> {
        let mut cfg = match toml {
            Some(text) => RunConfig::from_toml_str(text).map_err(to_py)?,
            None => RunConfig::default(),
        };
        if let Some(s) = scenario {
            cfg.set_scenario(s).map_err(to_py)?;
        }
        if let Some(r) = recommender {
            cfg.recommender.kind = parse_kind(r, &RECOMMENDERS, RecommenderKind::name)?;
        }
        if let Some(m) = moderator {
            cfg.moderator.kind = parse_kind(m, &MODERATORS, ModeratorKind::name)?;
        }
        if let Some(v) = gamma {
            cfg.users.gamma = v;
        }
        if let Some(v) = lambda_ {
            cfg.moderator.lambda = v;
        }
        if let Some(v) = alpha {
            cfg.moderator.alpha = v;
        }
        if let Some(v) = beta {
            cfg.moderator.beta = v;
        }
        if let Some(v) = seed {
            cfg.seed = v;
        }
        if let Some(v) = steps {
            cfg.steps = v;
        }
        if let Some(v) = k {
            cfg.k = v;
        }
        if let Some(v) = users {
            cfg.scenario.users = v;
        }
        if let Some(v) = items {
            cfg.scenario.items = v;
        }
        cfg.validate().map_err(to_py)?;
        Ok(Self { inner: cfg })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: RunConfig::load(&path).map_err(to_py)? })
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml()
    }

    #[getter]
    fn run_id(&self) -> String {
        self.inner.run_id()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[getter]
    fn steps(&self) -> usize {
        self.inner.steps
    }

    #[getter]
    fn scenario(&self) -> u8 {
        self.inner.scenario.id
    }

    #[getter]
    fn recommender(&self) -> &'static str {
        self.inner.recommender.kind.name()
    }

    #[getter]
    fn moderator(&self) -> &'static str {
        self.inner.moderator.kind.name()
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.inner.users.gamma
    }

    fn __repr__(&self) -> String {
        format!("RunConfig({})", self.inner.run_id())
    }
}

/// Outcome of one closed-loop run.
#[pyclass(name = "RunResult")]
struct PyRunResult {
    inner: engine::RunResult,
}

#[pymethods]
impl PyRunResult {
    #[getter]
    fn run_id(&self) -> String {
        self.inner.config.run_id()
    }

    /// Metrics over the whole loop.
    #[getter]
    fn metrics(&self) -> BTreeMap<&'static str, f64> {
        report_dict(&self.inner.final_metrics)
    }

    #[getter]
    fn bootstrap_metrics(&self) -> BTreeMap<&'static str, f64> {
        report_dict(&self.inner.bootstrap_metrics)
    }

    /// Per-step metrics; `cumulative=True` gives the running window.
    #[pyo3(signature = (cumulative=false))]
    fn step_metrics(&self, cumulative: bool) -> Vec<BTreeMap<&'static str, f64>> {
        self.inner.steps.iter().map(|s| report_dict(if cumulative { &s.cumulative } else { &s.window })).collect()
    }

    /// Loop interactions as `(step, user, item, rank, clicked)` tuples.
    fn log(&self) -> Vec<(usize, usize, usize, usize, bool)> {
        self.inner.log.records().iter().map(|r| (r.step, r.user, r.item, r.rank, r.clicked)).collect()
    }

    fn initial_preferences(&self) -> Vec<Vec<f64>> {
        self.inner.initial_preferences.rows().map(<[f64]>::to_vec).collect()
    }

    fn final_preferences(&self) -> Vec<Vec<f64>> {
        self.inner.final_preferences.rows().map(<[f64]>::to_vec).collect()
    }

    #[getter]
    fn warnings(&self) -> Vec<String> {
        self.inner.warnings.clone()
    }

    #[getter]
    fn mod_seconds_per_step(&self) -> f64 {
        self.inner.timings.mod_seconds_per_step()
    }

    /// Writes the run directory under `root` and returns its path.
    fn write(&self, root: PathBuf) -> PyResult<PathBuf> {
        engine::write_run(&root, &self.inner).map_err(to_py)
    }
}

#[pyfunction]
fn run(py: Python<'_>, config: &PyRunConfig) -> PyResult<PyRunResult> {
    let cfg = config.inner.clone();
    let inner = py.detach(move || engine::run(&cfg)).map_err(to_py)?;
    Ok(PyRunResult { inner })
}

fn summary_dict(row: &SummaryRow) -> BTreeMap<&'static str, String> {
    let opt = |v: Option<String>| v.unwrap_or_default();
    let mut d = BTreeMap::from([
        ("scenario", row.scenario.to_string()),
        ("recommender", row.recommender.clone()),
        ("moderator", row.moderator.clone()),
        ("gamma", row.gamma.to_string()),
        ("lambda", opt(row.lambda.map(|v| v.to_string()))),
        ("alpha", opt(row.alpha.map(|v| v.to_string()))),
        ("seed", row.seed.to_string()),
    ]);
    for name in engine::METRIC_NAMES {
        d.insert(name, row.metric(name).to_string());
    }
    d
}

/// Runs every configuration and returns the summary rows as string dicts.
/// With `out`, also writes `summary.csv`, `aggregate.csv` and `timing.csv`.
#[pyfunction]
#[pyo3(signature = (configs, workers=0, out=None, baseline="moderator=none"))]
fn sweep(
    py: Python<'_>,
    configs: Vec<PyRunConfig>,
    workers: usize,
    out: Option<PathBuf>,
    baseline: &str,
) -> PyResult<Vec<BTreeMap<&'static str, String>>> {
    let baseline: Baseline = baseline.parse().map_err(to_py)?;
    let configs: Vec<RunConfig> = configs.into_iter().map(|c| c.inner).collect();
    let opts = SweepOptions { workers, out, write_runs: false, baseline };
    let outcome = py.detach(move || engine::sweep(&configs, &opts)).map_err(to_py)?;
    if let Some((id, err)) = outcome.failures.first() {
        return Err(PyRuntimeError::new_err(format!("run {id} failed: {err}")));
    }
    Ok(outcome.digests.iter().map(|d| summary_dict(&d.row)).collect())
}

/// Aggregates a `summary.csv`, writes `out` and returns the table cells.
#[pyfunction]
#[pyo3(signature = (summary, out, baseline="moderator=none"))]
fn analyze(summary: PathBuf, out: PathBuf, baseline: &str) -> PyResult<Vec<BTreeMap<String, String>>> {
    let baseline: Baseline = baseline.parse().map_err(to_py)?;
    let rows = engine::read_summary(&summary).map_err(to_py)?;
    let agg = engine::aggregate(&rows, &baseline);
    engine::write_aggregate(&out, &agg).map_err(to_py)?;
    let header = engine::AggregateRow::header();
    Ok(agg.iter().map(|r| header.iter().cloned().zip(r.record()).collect()).collect())
}

#[pyfunction]
fn jsd_overall(p: Vec<f64>) -> PyResult<f64> {
    metrics::jsd_overall(&p).map_err(to_py)
}

#[pyfunction]
fn jsd_group(per_group: Vec<Vec<f64>>) -> PyResult<f64> {
    metrics::jsd_group(&per_group).map_err(to_py)
}

fn scale(raw: bool) -> OpinionScale {
    if raw {
        OpinionScale::Raw
    } else {
        OpinionScale::Normalized
    }
}

#[pyfunction]
#[pyo3(signature = (preferences, raw=false))]
fn ums(preferences: Vec<Vec<f64>>, raw: bool) -> PyResult<f64> {
    let prefs = PreferenceMatrix::from_rows(preferences).map_err(to_py)?;
    Ok(metrics::ums(&prefs, scale(raw)).map_err(to_py)?.value)
}

#[pyfunction]
#[pyo3(signature = (preferences, raw=false))]
fn umoe(preferences: Vec<Vec<f64>>, raw: bool) -> PyResult<f64> {
    let prefs = PreferenceMatrix::from_rows(preferences).map_err(to_py)?;
    Ok(metrics::umoe(&prefs, scale(raw)).map_err(to_py)?.value)
}

/// Two-sided Welch test; returns `(t, df, p, stars)`.
#[pyfunction]
fn welch_t(a: Vec<f64>, b: Vec<f64>) -> PyResult<(f64, f64, f64, &'static str)> {
    let w = stats::welch_t(&a, &b).map_err(to_py)?;
    Ok((w.t, w.df, w.p, w.stars))
}

/// Exact two-sided sign test; returns `(positive, negative, p)`.
#[pyfunction]
fn sign_test(diffs: Vec<f64>) -> PyResult<(u64, u64, f64)> {
    let s = stats::sign_test(&diffs).map_err(to_py)?;
    Ok((s.positive, s.negative, s.p))
}

fn slate_set(slates: Vec<Vec<usize>>, n_items: usize) -> PyResult<SlateSet> {
    let k = slates.first().map_or(0, Vec::len);
    let set = SlateSet::new(k, slates.into_iter().enumerate().map(|(u, items)| Slate::new(u, items)).collect());
    set.validate(n_items, None).map_err(to_py)?;
    Ok(set)
}

fn items_of(set: &SlateSet) -> Vec<Vec<usize>> {
    set.slates.iter().map(|s| s.items.clone()).collect()
}

/// Knapsack moderation of one step; returns `(slates, hamming_distance)`.
#[pyfunction]
#[pyo3(signature = (slates, n_items, lambda_, seed=0, step=1))]
fn kc_moderate(
    slates: Vec<Vec<usize>>,
    n_items: usize,
    lambda_: f64,
    seed: u64,
    step: usize,
) -> PyResult<(Vec<Vec<usize>>, usize)> {
    let set = slate_set(slates, n_items)?;
    let consumed = ClickHistory::new(set.n_users(), n_items);
    let out = moderate::kc_moderate(&set, &consumed, lambda_, &SeedTree::new(seed), step).map_err(to_py)?;
    Ok((items_of(&out.slates), out.hamming()))
}

/// Round-robin moderation of one step with no prior exposure; returns `(slates, quota)`.
#[pyfunction]
#[pyo3(signature = (slates, n_items, step=1))]
fn rr_moderate(slates: Vec<Vec<usize>>, n_items: usize, step: usize) -> PyResult<(Vec<Vec<usize>>, u32)> {
    let set = slate_set(slates, n_items)?;
    let m = set.n_users();
    let agg = ExposureMatrix::zeros(m, n_items);
    let consumed = ClickHistory::new(m, n_items);
    let out =
        moderate::rr_moderate(&set, &agg, &vec![0; n_items], &consumed, step, QuotaMode::PerStep).map_err(to_py)?;
    Ok((items_of(&out.slates), out.quota))
}

/// Spectral co-clustering of a dense count matrix; returns
/// `(user_labels, item_labels, cluster_silhouettes)` with `None` for unlabelled rows.
#[pyfunction]
#[pyo3(signature = (matrix, n_clusters=3, seed=0))]
#[allow(clippy::type_complexity)]
fn cocluster(
    matrix: Vec<Vec<u32>>,
    n_clusters: usize,
    seed: u64,
) -> PyResult<(Vec<Option<usize>>, Vec<Option<usize>>, Vec<Option<f64>>)> {
    let m = matrix.len();
    let n = matrix.first().map_or(0, Vec::len);
    if matrix.iter().any(|r| r.len() != n) {
        return Err(PyValueError::new_err("matrix rows differ in length"));
    }
    let counts: Vec<u32> = matrix.into_iter().flatten().collect();
    let e = ExposureMatrix::from_counts(m, n, counts).map_err(to_py)?;
    let model = moderate::cocluster(&e, n_clusters, &SeedTree::new(seed), 0)
        .ok_or_else(|| PyValueError::new_err("too few nonzero rows or columns to cluster"))?;
    Ok((model.user_labels, model.item_labels, model.cluster_user_silhouette))
}

#[pymodule]
fn stancesim_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyRunConfig>()?;
    m.add_class::<PyRunResult>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(analyze, m)?)?;
    m.add_function(wrap_pyfunction!(jsd_overall, m)?)?;
    m.add_function(wrap_pyfunction!(jsd_group, m)?)?;
    m.add_function(wrap_pyfunction!(ums, m)?)?;
    m.add_function(wrap_pyfunction!(umoe, m)?)?;
    m.add_function(wrap_pyfunction!(welch_t, m)?)?;
    m.add_function(wrap_pyfunction!(sign_test, m)?)?;
    m.add_function(wrap_pyfunction!(kc_moderate, m)?)?;
    m.add_function(wrap_pyfunction!(rr_moderate, m)?)?;
    m.add_function(wrap_pyfunction!(cocluster, m)?)?;
    Ok(())
}
