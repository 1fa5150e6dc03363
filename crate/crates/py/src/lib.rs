//! Python bindings: trace synthesis and aggregation, fat-tree topologies,
//! greedy and pooled planning, deployment metrics and the exact oracle.
//!
//! Nodes are addressed by name on the Python side. Categories, score kinds,
//! modes and levels are plain strings (`"video"`, `"load"`, `"raw"`, `"agg"`).

use std::collections::{BTreeMap, BTreeSet};

use mec::planner::{write_run_log, Termination};
use mec::trace::{aggregate, generate_bs_positions, generate_synthetic_trace, SyntheticConfig, TaggingRules};
use pyo3::exceptions::{PyKeyError, PyValueError};
use pyo3::prelude::*;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_category(s: &str) -> PyResult<mec::Category> {
    s.parse().map_err(value_err)
}

fn parse_score(s: &str) -> PyResult<mec::ScoreKind> {
    s.parse().map_err(value_err)
}

fn parse_mode(s: &str) -> PyResult<mec::TraceMode> {
    s.parse().map_err(value_err)
}

fn parse_level(s: &str) -> PyResult<mec::Level> {
    mec::Level::ALL
        .into_iter()
        .find(|l| l.as_str() == s)
        .ok_or_else(|| PyValueError::new_err(format!("unknown level `{s}` (expected bs, ring, agg or core)")))
}

fn synthetic_config(base_stations: usize, days: u32) -> SyntheticConfig {
    SyntheticConfig {
        base_stations,
        days,
        ..Default::default()
    }
}

/// Per-category linear models mapping megabytes to CPU ticks.
#[pyclass(name = "CostModels", module = "mecplan", frozen, skip_from_py_object)]
#[derive(Clone, Default)]
struct PyCostModels(mec::CostModels);

#[pymethods]
impl PyCostModels {
    /// Built-in models for video, gaming and maps.
    #[new]
    fn new() -> Self {
        Self::default()
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        mec::CostModels::from_json_str(text).map(Self).map_err(value_err)
    }

    fn to_json(&self) -> PyResult<String> {
        self.0.to_json_string().map_err(value_err)
    }

    /// Ticks per megabyte, or None when the category has no model.
    #[pyo3(signature = (category, mode = "enriched"))]
    fn tau(&self, category: &str, mode: &str) -> PyResult<Option<f64>> {
        Ok(self.0.tau(parse_category(category)?, parse_mode(mode)?))
    }

    /// `(slope, intercept, nrmse)` per modelled category.
    fn models(&self) -> BTreeMap<String, (f64, f64, f64)> {
        self.0
            .iter()
            .map(|m| (m.category.to_string(), (m.slope, m.intercept, m.nrmse)))
            .collect()
    }

    fn predict(&self, category: &str, megabytes: f64) -> PyResult<f64> {
        let c = parse_category(category)?;
        let model = self
            .0
            .get(c)
            .ok_or_else(|| PyKeyError::new_err(format!("no cost model for {c}")))?;
        Ok(model.predict(megabytes))
    }
}

/// Megabytes per (base station, category) and time step.
#[pyclass(name = "Demand", module = "mecplan", frozen)]
struct PyDemand {
    inner: mec::DemandSet,
    #[pyo3(get)]
    rejected: usize,
}

#[pymethods]
impl PyDemand {
    /// Tags and bins `(timestamp, bs_id, app_name, bytes_down)` records.
    #[staticmethod]
    #[pyo3(signature = (records, step_seconds = 3600))]
    fn from_records(records: Vec<(i64, String, String, u64)>, step_seconds: u64) -> PyResult<Self> {
        let records: Vec<mec::DemandRecord> = records
            .into_iter()
            .map(|(timestamp, bs_id, app_name, bytes_down)| mec::DemandRecord {
                timestamp,
                bs_id,
                app_name,
                bytes_down,
            })
            .collect();
        let agg = aggregate(&records, &TaggingRules::default(), step_seconds).map_err(value_err)?;
        Ok(Self {
            inner: agg.demand,
            rejected: agg.rejected,
        })
    }

    #[getter]
    fn steps(&self) -> usize {
        self.inner.steps
    }

    #[getter]
    fn step_seconds(&self) -> u64 {
        self.inner.step_seconds
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn categories(&self) -> Vec<String> {
        self.inner.categories().iter().map(|c| c.to_string()).collect()
    }

    fn base_stations(&self) -> Vec<String> {
        let ids: BTreeSet<&str> = self.inner.iter().map(|s| s.bs_id.as_str()).collect();
        ids.into_iter().map(str::to_owned).collect()
    }

    fn series(&self, bs_id: &str, category: &str) -> PyResult<Option<Vec<f64>>> {
        Ok(self
            .inner
            .get(bs_id, parse_category(category)?)
            .map(|s| s.values.clone()))
    }

    #[pyo3(signature = (category = None))]
    fn megabytes(&self, category: Option<&str>) -> PyResult<f64> {
        Ok(match category {
            Some(c) => self.inner.category_megabytes(parse_category(c)?),
            None => self.inner.total_megabytes(),
        })
    }

    /// Total ticks per category; unmodelled categories are skipped in
    /// enriched mode.
    #[pyo3(signature = (models = None, mode = "enriched"))]
    fn ticks(&self, models: Option<&PyCostModels>, mode: &str) -> PyResult<BTreeMap<String, f64>> {
        let models = models.cloned().unwrap_or_default().0;
        Ok(mec::trace::ticks_by_category(&self.inner, &models, parse_mode(mode)?)
            .into_iter()
            .map(|(c, t)| (c.to_string(), t))
            .collect())
    }

    fn scaled(&self, factor: f64) -> Self {
        Self {
            inner: self.inner.scaled(factor),
            rejected: self.rejected,
        }
    }
}

/// Fat-tree backhaul: base stations, rings, aggregation pods and cores.
#[pyclass(name = "Topology", module = "mecplan", frozen)]
struct PyTopology(mec::Topology);

impl PyTopology {
    fn id(&self, name: &str) -> PyResult<mec::NodeId> {
        self.0.id(name).map_err(|e| PyKeyError::new_err(e.to_string()))
    }

    fn names(&self, ids: impl IntoIterator<Item = mec::NodeId>) -> Vec<String> {
        ids.into_iter().map(|id| self.0.name(id).to_owned()).collect()
    }
}

#[pymethods]
impl PyTopology {
    /// Builds the tree from `(bs_id, x, y)` positions in meters.
    #[staticmethod]
    fn fat_tree(positions: Vec<(String, f64, f64)>) -> PyResult<Self> {
        mec::Topology::build_fat_tree(&positions).map(Self).map_err(value_err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        mec::Topology::from_json_reader(text.as_bytes())
            .map(Self)
            .map_err(value_err)
    }

    fn to_json(&self) -> PyResult<String> {
        let mut buf = Vec::new();
        self.0.to_json_writer(&mut buf).map_err(value_err)?;
        String::from_utf8(buf).map_err(value_err)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    /// Node names, optionally restricted to one level.
    #[pyo3(signature = (level = None))]
    fn nodes(&self, level: Option<&str>) -> PyResult<Vec<String>> {
        Ok(match level {
            Some(l) => self.names(self.0.nodes_at(parse_level(l)?)),
            None => self.0.nodes().iter().map(|n| n.name.clone()).collect(),
        })
    }

    fn count_at(&self, level: &str) -> PyResult<usize> {
        Ok(self.0.count_at(parse_level(level)?))
    }

    fn level(&self, name: &str) -> PyResult<&'static str> {
        Ok(self.0.level(self.id(name)?).as_str())
    }

    fn parents(&self, name: &str) -> PyResult<Vec<String>> {
        Ok(self.names(self.0.parents(self.id(name)?).iter().copied()))
    }

    fn children(&self, name: &str) -> PyResult<Vec<String>> {
        Ok(self.names(self.0.children(self.id(name)?).iter().copied()))
    }

    fn ancestors(&self, name: &str) -> PyResult<Vec<String>> {
        Ok(self.names(self.0.ancestors(self.id(name)?).iter().copied()))
    }

    fn hop_count(&self, bs: &str, node: &str) -> PyResult<u32> {
        self.0.hop_count(self.id(bs)?, self.id(node)?).map_err(value_err)
    }

    /// Euclidean distance in meters.
    fn distance(&self, a: &str, b: &str) -> PyResult<f64> {
        self.0.distance_between(a, b).map_err(value_err)
    }
}

/// One row of a planner log.
#[pyclass(name = "Iteration", module = "mecplan", frozen, get_all, skip_from_py_object)]
#[derive(Clone)]
struct PyIteration {
    iter: usize,
    /// Servers at bs, ring, agg and core level.
    servers: [usize; 4],
    traffic: [f64; 4],
    latency_max_ms: f64,
    latency_mean_ms: f64,
    efficiency: f64,
}

#[pymethods]
impl PyIteration {
    fn __repr__(&self) -> String {
        format!(
            "Iteration(iter={}, servers={:?}, latency_max_ms={}, efficiency={:.4})",
            self.iter, self.servers, self.latency_max_ms, self.efficiency
        )
    }
}

impl From<&mec::IterationLog> for PyIteration {
    fn from(log: &mec::IterationLog) -> Self {
        Self {
            iter: log.iter,
            servers: log.servers,
            traffic: log.traffic,
            latency_max_ms: log.latency_max_ms,
            latency_mean_ms: log.latency_mean_ms,
            efficiency: log.efficiency,
        }
    }
}

/// Result of a greedy run for one category.
#[pyclass(name = "PlannerRun", module = "mecplan", frozen)]
struct PyPlannerRun {
    run: mec::PlannerRun,
    names: Vec<String>,
}

impl PyPlannerRun {
    fn new(topology: &mec::Topology, run: mec::PlannerRun) -> Self {
        let names = topology.nodes().iter().map(|n| n.name.clone()).collect();
        Self { run, names }
    }

    fn name(&self, id: mec::NodeId) -> String {
        self.names[id.index()].clone()
    }
}

#[pymethods]
impl PyPlannerRun {
    #[getter]
    fn category(&self) -> String {
        self.run.category.to_string()
    }

    #[getter]
    fn l_max_ms(&self) -> f64 {
        self.run.l_max_ms
    }

    #[getter]
    fn score(&self) -> String {
        self.run.score.to_string()
    }

    #[getter]
    fn mode(&self) -> String {
        self.run.mode.to_string()
    }

    #[getter]
    fn tau(&self) -> f64 {
        self.run.tau
    }

    /// `"no_candidates"` or `"latency_limit"`.
    #[getter]
    fn termination(&self) -> &'static str {
        match self.run.termination {
            Termination::NoCandidates => "no_candidates",
            Termination::LatencyLimit => "latency_limit",
        }
    }

    #[getter]
    fn iterations(&self) -> Vec<PyIteration> {
        self.run.iterations.iter().map(PyIteration::from).collect()
    }

    /// Merged pairs as `(kind, a, b)`; kind is `parent_child` (parent,
    /// child), `siblings` or `stranded` (ancestor, descendant).
    #[getter]
    fn merges(&self) -> Vec<(&'static str, String, String)> {
        self.run
            .merges
            .iter()
            .map(|pair| match *pair {
                mec::Pair::ParentChild { parent, child } => ("parent_child", self.name(parent), self.name(child)),
                mec::Pair::Siblings { first, second } => ("siblings", self.name(first), self.name(second)),
                mec::Pair::Stranded { ancestor, descendant } => {
                    ("stranded", self.name(ancestor), self.name(descendant))
                }
            })
            .collect()
    }

    /// Serving node of every active base station.
    #[getter]
    fn assignment(&self) -> BTreeMap<String, String> {
        self.run
            .deployment
            .assignment()
            .iter()
            .map(|(&bs, &server)| (self.name(bs), self.name(server)))
            .collect()
    }

    #[getter]
    fn servers(&self) -> Vec<String> {
        self.run.deployment.servers().map(|s| self.name(s)).collect()
    }

    #[getter]
    fn efficiency(&self) -> f64 {
        self.run.final_iteration().efficiency
    }

    fn __len__(&self) -> usize {
        self.run.iterations.len()
    }

    /// The iteration log as CSV text.
    fn to_csv(&self) -> PyResult<String> {
        let mut buf = Vec::new();
        write_run_log(&self.run.iterations, &mut buf).map_err(value_err)?;
        String::from_utf8(buf).map_err(value_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "PlannerRun(category={}, score={}, mode={}, iterations={}, servers={}, efficiency={:.4})",
            self.run.category,
            self.run.score,
            self.run.mode,
            self.run.iterations.len() - 1,
            self.run.final_servers(),
            self.efficiency()
        )
    }
}

/// Runs for several categories and their combined tick load.
#[pyclass(name = "Plan", module = "mecplan", frozen)]
struct PyPlan {
    runs: BTreeMap<String, Py<PyPlannerRun>>,
    #[pyo3(get)]
    efficiency: f64,
    /// Peak combined ticks per step at each server node.
    #[pyo3(get)]
    capacity: BTreeMap<String, f64>,
}

impl PyPlan {
    fn new(py: Python<'_>, topology: &mec::Topology, plan: mec::CombinedPlan) -> PyResult<Self> {
        let capacity = plan
            .capacity
            .iter()
            .map(|(&n, &c)| (topology.name(n).to_owned(), c))
            .collect();
        let mut runs = BTreeMap::new();
        for (c, run) in plan.runs {
            runs.insert(c.to_string(), Py::new(py, PyPlannerRun::new(topology, run))?);
        }
        Ok(Self {
            runs,
            efficiency: plan.efficiency.eta,
            capacity,
        })
    }
}

#[pymethods]
impl PyPlan {
    #[getter]
    fn runs(&self, py: Python<'_>) -> BTreeMap<String, Py<PyPlannerRun>> {
        self.runs.iter().map(|(k, v)| (k.clone(), v.clone_ref(py))).collect()
    }

    fn __getitem__(&self, py: Python<'_>, category: &str) -> PyResult<Py<PyPlannerRun>> {
        self.runs
            .get(category)
            .map(|r| r.clone_ref(py))
            .ok_or_else(|| PyKeyError::new_err(category.to_owned()))
    }

    fn __repr__(&self) -> String {
        format!(
            "Plan(categories={:?}, servers={}, efficiency={:.4})",
            self.runs.keys().collect::<Vec<_>>(),
            self.capacity.len(),
            self.efficiency
        )
    }
}

fn planner_config(
    l_max_ms: f64,
    score_name: &str,
    mode_name: &str,
    exhaustive_pairs: bool,
) -> PyResult<mec::PlannerConfig> {
    Ok(mec::PlannerConfig {
        score: parse_score(score_name)?,
        mode: parse_mode(mode_name)?,
        exhaustive_pairs,
        ..mec::PlannerConfig::with_l_max(l_max_ms)
    })
}

/// Synthetic `(timestamp, bs_id, app_name, bytes_down)` records.
#[pyfunction]
#[pyo3(signature = (base_stations = 1000, days = 7, seed = 0))]
fn synthetic_trace(base_stations: usize, days: u32, seed: u64) -> PyResult<Vec<(i64, String, String, u64)>> {
    let records = generate_synthetic_trace(&synthetic_config(base_stations, days), seed).map_err(value_err)?;
    Ok(records
        .into_iter()
        .map(|r| (r.timestamp, r.bs_id, r.app_name, r.bytes_down))
        .collect())
}

/// `(bs_id, x, y)` positions matching `synthetic_trace` for the same seed.
#[pyfunction]
#[pyo3(signature = (base_stations = 1000, seed = 0))]
fn synthetic_positions(base_stations: usize, seed: u64) -> PyResult<Vec<(String, f64, f64)>> {
    generate_bs_positions(&synthetic_config(base_stations, 1), seed).map_err(value_err)
}

/// Greedy placement for one category.
#[pyfunction]
#[pyo3(signature = (topology, demand, category, l_max_ms = f64::INFINITY, score = "load", mode = "enriched", exhaustive_pairs = false, models = None))]
#[allow(clippy::too_many_arguments)]
fn greedy_design(
    py: Python<'_>,
    topology: &PyTopology,
    demand: &PyDemand,
    category: &str,
    l_max_ms: f64,
    score: &str,
    mode: &str,
    exhaustive_pairs: bool,
    models: Option<&PyCostModels>,
) -> PyResult<PyPlannerRun> {
    let config = planner_config(l_max_ms, score, mode, exhaustive_pairs)?;
    let c = parse_category(category)?;
    let models = models.cloned().unwrap_or_default().0;
    let run = py
        .detach(|| mec::greedy_design(&topology.0, &demand.inner, c, config, &models))
        .map_err(value_err)?;
    Ok(PyPlannerRun::new(&topology.0, run))
}

/// One independent run per category. `categories` defaults to those present
/// in `demand` that can be planned in `mode`; `l_max` maps category names to
/// limits, missing ones are unlimited.
#[pyfunction]
#[pyo3(signature = (topology, demand, l_max = None, score = "load", mode = "enriched", exhaustive_pairs = false, models = None, categories = None))]
#[allow(clippy::too_many_arguments)]
fn multi_category_plan(
    py: Python<'_>,
    topology: &PyTopology,
    demand: &PyDemand,
    l_max: Option<BTreeMap<String, f64>>,
    score: &str,
    mode: &str,
    exhaustive_pairs: bool,
    models: Option<&PyCostModels>,
    categories: Option<Vec<String>>,
) -> PyResult<PyPlan> {
    let models = models.cloned().unwrap_or_default().0;
    let trace_mode = parse_mode(mode)?;
    let categories = match categories {
        Some(names) => names.iter().map(|c| parse_category(c)).collect::<PyResult<Vec<_>>>()?,
        None => demand
            .inner
            .categories()
            .into_iter()
            .filter(|&c| models.tau(c, trace_mode).is_some())
            .collect(),
    };
    let l_max = l_max.unwrap_or_default();
    for name in l_max.keys() {
        parse_category(name)?;
    }
    let mut configs = BTreeMap::new();
    for &c in &categories {
        let limit = l_max.get(c.as_str()).copied().unwrap_or(f64::INFINITY);
        configs.insert(c, planner_config(limit, score, mode, exhaustive_pairs)?);
    }
    let demand = demand.inner.restricted(&categories);
    let plan = py
        .detach(|| mec::multi_category_plan(&topology.0, &demand, &configs, &models))
        .map_err(value_err)?;
    PyPlan::new(py, &topology.0, plan)
}

/// One run over the tick-weighted sum of `categories`.
#[pyfunction]
#[pyo3(signature = (topology, demand, categories, l_max_ms = f64::INFINITY, score = "load", mode = "enriched", exhaustive_pairs = false, models = None))]
#[allow(clippy::too_many_arguments)]
fn pooled_plan(
    py: Python<'_>,
    topology: &PyTopology,
    demand: &PyDemand,
    categories: Vec<String>,
    l_max_ms: f64,
    score: &str,
    mode: &str,
    exhaustive_pairs: bool,
    models: Option<&PyCostModels>,
) -> PyResult<PyPlan> {
    let config = planner_config(l_max_ms, score, mode, exhaustive_pairs)?;
    let categories = categories
        .iter()
        .map(|c| parse_category(c))
        .collect::<PyResult<Vec<_>>>()?;
    let models = models.cloned().unwrap_or_default().0;
    let plan = py
        .detach(|| mec::pooled_plan(&topology.0, &demand.inner, &categories, config, &models))
        .map_err(value_err)?;
    PyPlan::new(py, &topology.0, plan)
}

fn deployment(
    topology: &PyTopology,
    category: &str,
    assignment: &BTreeMap<String, String>,
) -> PyResult<mec::Deployment> {
    let mut map = BTreeMap::new();
    for (bs, server) in assignment {
        map.insert(topology.id(bs)?, topology.id(server)?);
    }
    let deployment = mec::Deployment::from_assignment(parse_category(category)?, map);
    deployment.validate(&topology.0).map_err(value_err)?;
    Ok(deployment)
}

/// `(max_ms, mean_ms)` over the stations of a `{bs: server}` assignment.
#[pyfunction]
#[pyo3(signature = (topology, assignment, category = "video"))]
fn deployment_latency(
    topology: &PyTopology,
    assignment: BTreeMap<String, String>,
    category: &str,
) -> PyResult<(f64, f64)> {
    let d = deployment(topology, category, &assignment)?;
    let summary = mec::deployment_latency(&topology.0, &d, &mec::LatencyModel::default());
    Ok((summary.max_ms, summary.mean_ms))
}

/// η of per-node load series: time-averaged total over the sum of peaks.
#[pyfunction]
fn efficiency(loads: Vec<Vec<f64>>) -> PyResult<f64> {
    let serve: BTreeMap<mec::NodeId, Vec<f64>> = loads
        .into_iter()
        .enumerate()
        .map(|(i, v)| (mec::NodeId(i as u32), v))
        .collect();
    let c = mec::Category::Video;
    let report = mec::efficiency(&BTreeMap::from([(c, serve)]), &BTreeMap::from([(c, 1.0)])).map_err(value_err)?;
    Ok(report.eta)
}

/// Servers per level and traffic (MB) served per level for an assignment.
#[pyfunction]
fn level_breakdown(
    topology: &PyTopology,
    demand: &PyDemand,
    category: &str,
    assignment: BTreeMap<String, String>,
) -> PyResult<([usize; 4], [f64; 4])> {
    let d = deployment(topology, category, &assignment)?;
    let b = mec::level_breakdown(&topology.0, &d, &demand.inner);
    Ok((b.servers, b.traffic))
}

/// Exact minimum server count on a small instance.
#[pyclass(name = "OracleSolution", module = "mecplan", frozen, get_all)]
struct PyOracleSolution {
    feasible: bool,
    min_servers: usize,
    placement: Vec<String>,
    assignment: BTreeMap<String, String>,
}

#[pyfunction]
#[pyo3(signature = (topology, demand, category, l_max_ms = f64::INFINITY))]
fn solve_optimal(
    py: Python<'_>,
    topology: &PyTopology,
    demand: &PyDemand,
    category: &str,
    l_max_ms: f64,
) -> PyResult<PyOracleSolution> {
    let c = parse_category(category)?;
    let s = py
        .detach(|| mec::solve_optimal(&topology.0, &demand.inner, c, l_max_ms, &mec::LatencyModel::default()))
        .map_err(value_err)?;
    Ok(PyOracleSolution {
        feasible: s.feasible,
        min_servers: s.min_servers,
        placement: topology.names(s.placement.iter().copied()),
        assignment: s
            .assignment
            .iter()
            .map(|(&b, &n)| (topology.0.name(b).to_owned(), topology.0.name(n).to_owned()))
            .collect(),
    })
}

#[pymodule]
fn mecplan(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCostModels>()?;
    m.add_class::<PyDemand>()?;
    m.add_class::<PyTopology>()?;
    m.add_class::<PyIteration>()?;
    m.add_class::<PyPlannerRun>()?;
    m.add_class::<PyPlan>()?;
    m.add_class::<PyOracleSolution>()?;
    m.add_function(wrap_pyfunction!(synthetic_trace, m)?)?;
    m.add_function(wrap_pyfunction!(synthetic_positions, m)?)?;
    m.add_function(wrap_pyfunction!(greedy_design, m)?)?;
    m.add_function(wrap_pyfunction!(multi_category_plan, m)?)?;
    m.add_function(wrap_pyfunction!(pooled_plan, m)?)?;
    m.add_function(wrap_pyfunction!(deployment_latency, m)?)?;
    m.add_function(wrap_pyfunction!(efficiency, m)?)?;
    m.add_function(wrap_pyfunction!(level_breakdown, m)?)?;
    m.add_function(wrap_pyfunction!(solve_optimal, m)?)?;
    m.add("LATENCY_ACCESS_MS", mec::LatencyModel::default().access_ms)?;
    m.add("LATENCY_PER_HOP_MS", mec::LatencyModel::default().per_hop_ms)?;
    Ok(())
}
