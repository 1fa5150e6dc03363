//! Greedy server placement.
//!
//! Every base station with demand starts with its own server. Each iteration
//! merges the best-scoring eligible pair of servers one level up the serving
//! DAG, removing exactly one server, until no pair is eligible or the next
//! merge would break the category's latency limit.
//!
//! Two pair shapes are eligible:
//!
//! * parent and child both hosting servers: the child's stations move to the
//!   parent and the child's server is removed;
//! * siblings hosting servers that share a parent without a server: both
//!   servers are replaced by a new one at that parent.
//!
//! Siblings whose only common parents already host a server are left to the
//! parent-child merges, so every iteration removes one server.
//!
//! A sibling merge can strand a station: its own server stays put while the
//! ring above it loses its server to the pod. When no parent-child or sibling
//! pair remains, such servers merge into their nearest serving ancestor.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{efficiency, EfficiencyReport, LatencyModel, LatencySummary, ServeMap};
use crate::topology::{Level, NodeId, Topology, TopologyError};
use crate::trace::{Category, CostModels, DemandSet, TraceMode};

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("demand references unknown base station `{0}`")]
    UnknownBaseStation(String),
    #[error("pair ({0}, {1}) is not eligible for consolidation")]
    InvalidPair(String, String),
    #[error("invalid planner config: {0}")]
    Config(String),
    #[error("no cost model for category {0}; plan it in raw mode")]
    NoModel(Category),
    #[error("no planner config for category {0}")]
    MissingConfig(Category),
    #[error("invalid deployment: {0}")]
    InvalidDeployment(String),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = PlanError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum ScoreKind {
    #[serde(rename = "location")]
    LocationBased,
    #[default]
    #[serde(rename = "load")]
    LoadBased,
}

impl fmt::Display for ScoreKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScoreKind::LocationBased => "location",
            ScoreKind::LoadBased => "load",
        })
    }
}

impl FromStr for ScoreKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "location" => Ok(ScoreKind::LocationBased),
            "load" => Ok(ScoreKind::LoadBased),
            other => Err(format!("unknown score kind `{other}` (expected location or load)")),
        }
    }
}

/// Placement y(n) and assignment x(b, n) for one category.
///
/// Servers exist exactly at nodes serving at least one station, so the
/// placement is derived from the assignment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Deployment {
    category: Category,
    assignment: BTreeMap<NodeId, NodeId>,
    members: BTreeMap<NodeId, BTreeSet<NodeId>>,
}

impl Deployment {
    pub fn empty(category: Category) -> Self {
        Self {
            category,
            assignment: BTreeMap::new(),
            members: BTreeMap::new(),
        }
    }

    /// Builds a deployment from a station → server map.
    pub fn from_assignment(category: Category, assignment: BTreeMap<NodeId, NodeId>) -> Self {
        let mut members: BTreeMap<NodeId, BTreeSet<NodeId>> = BTreeMap::new();
        for (&bs, &server) in &assignment {
            members.entry(server).or_default().insert(bs);
        }
        Self {
            category,
            assignment,
            members,
        }
    }

    pub fn category(&self) -> Category {
        self.category
    }

    pub fn servers(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.members.keys().copied()
    }

    pub fn server_count(&self) -> usize {
        self.members.len()
    }

    pub fn is_server(&self, node: NodeId) -> bool {
        self.members.contains_key(&node)
    }

    /// Station → serving node.
    pub fn assignment(&self) -> &BTreeMap<NodeId, NodeId> {
        &self.assignment
    }

    pub fn server_of(&self, bs: NodeId) -> Option<NodeId> {
        self.assignment.get(&bs).copied()
    }

    pub fn served_by(&self, server: NodeId) -> Option<&BTreeSet<NodeId>> {
        self.members.get(&server)
    }

    pub fn active_bs(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.assignment.keys().copied()
    }

    /// Moves every station served by `from` onto `to`.
    fn reassign(&mut self, from: NodeId, to: NodeId) {
        let moved = self.members.remove(&from).unwrap_or_default();
        for &bs in &moved {
            self.assignment.insert(bs, to);
        }
        self.members.entry(to).or_default().extend(moved);
    }

    /// Checks the structural invariants against `topology`.
    pub fn validate(&self, topology: &Topology) -> Result<()> {
        for (&bs, &server) in &self.assignment {
            if bs.index() >= topology.len() || server.index() >= topology.len() {
                return Err(PlanError::InvalidDeployment("node id out of range".into()));
            }
            if topology.level(bs) != Level::BaseStation {
                return Err(PlanError::InvalidDeployment(format!(
                    "`{}` is not a base station",
                    topology.name(bs)
                )));
            }
            if !topology.is_ancestor(server, bs) {
                return Err(PlanError::InvalidDeployment(format!(
                    "`{}` served by non-ancestor `{}`",
                    topology.name(bs),
                    topology.name(server)
                )));
            }
            if !self.members.get(&server).is_some_and(|m| m.contains(&bs)) {
                return Err(PlanError::InvalidDeployment("assignment and placement disagree".into()));
            }
        }
        let listed: usize = self.members.values().map(BTreeSet::len).sum();
        if listed != self.assignment.len() || self.members.values().any(BTreeSet::is_empty) {
            return Err(PlanError::InvalidDeployment(
                "placement lists empty or unassigned servers".into(),
            ));
        }
        Ok(())
    }

    pub fn to_export(&self, topology: &Topology) -> DeploymentExport {
        DeploymentExport {
            category: self.category,
            placements: self.servers().map(|n| topology.name(n).to_string()).collect(),
            assignments: self
                .assignment
                .iter()
                .map(|(&b, &n)| (topology.name(b).to_string(), topology.name(n).to_string()))
                .collect(),
        }
    }

    pub fn from_export(topology: &Topology, export: &DeploymentExport) -> Result<Self> {
        let mut assignment = BTreeMap::new();
        for (bs, server) in &export.assignments {
            assignment.insert(topology.id(bs)?, topology.id(server)?);
        }
        let deployment = Self::from_assignment(export.category, assignment);
        let placed: BTreeSet<NodeId> = export
            .placements
            .iter()
            .map(|n| topology.id(n))
            .collect::<Result<_, _>>()?;
        if placed != deployment.servers().collect() {
            return Err(PlanError::InvalidDeployment(
                "placements do not match assignments".into(),
            ));
        }
        deployment.validate(topology)?;
        Ok(deployment)
    }
}

/// Serialized form of a deployment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeploymentExport {
    pub category: Category,
    pub placements: Vec<String>,
    pub assignments: BTreeMap<String, String>,
}

impl DeploymentExport {
    pub fn to_json_writer(&self, writer: impl Write) -> Result<()> {
        serde_json::to_writer_pretty(writer, self)?;
        Ok(())
    }

    pub fn from_json_reader(reader: impl Read) -> Result<Self> {
        Ok(serde_json::from_reader(reader)?)
    }
}

/// One server per base station with positive peak demand in `category`.
pub fn initial_deployment(topology: &Topology, demand: &DemandSet, category: Category) -> Result<Deployment> {
    let mut assignment = BTreeMap::new();
    for series in demand.for_category(category) {
        let bs = topology
            .id(&series.bs_id)
            .ok()
            .filter(|&id| topology.level(id) == Level::BaseStation)
            .ok_or_else(|| PlanError::UnknownBaseStation(series.bs_id.clone()))?;
        if series.peak() > 0.0 {
            assignment.insert(bs, bs);
        }
    }
    Ok(Deployment::from_assignment(category, assignment))
}

/// s(n) for every server: per-step demand of the stations it serves.
pub fn serve_vectors(topology: &Topology, deployment: &Deployment, demand: &DemandSet) -> ServeMap {
    let mut out = ServeMap::new();
    for server in deployment.servers() {
        let mut values = vec![0.0; demand.steps];
        for &bs in deployment.served_by(server).into_iter().flatten() {
            if let Some(series) = demand.get(topology.name(bs), deployment.category()) {
                for (acc, v) in values.iter_mut().zip(&series.values) {
                    *acc += v;
                }
            }
        }
        out.insert(server, values);
    }
    out
}

/// A pair of servers eligible for consolidation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Pair {
    ParentChild {
        parent: NodeId,
        child: NodeId,
    },
    /// `first < second`.
    Siblings {
        first: NodeId,
        second: NodeId,
    },
    /// `ancestor` hosts a server and no node between it and `descendant` does.
    Stranded {
        ancestor: NodeId,
        descendant: NodeId,
    },
}

impl Pair {
    pub fn siblings(a: NodeId, b: NodeId) -> Pair {
        Pair::Siblings {
            first: a.min(b),
            second: a.max(b),
        }
    }

    /// Normalized orientation: parent first, or lower id first for siblings.
    pub fn key(&self) -> (NodeId, NodeId) {
        match *self {
            Pair::ParentChild { parent, child } => (parent, child),
            Pair::Siblings { first, second } => (first, second),
            Pair::Stranded { ancestor, descendant } => (ancestor, descendant),
        }
    }
}

/// All eligible pairs, sorted by normalized key.
pub fn candidate_pairs(topology: &Topology, deployment: &Deployment) -> Vec<Pair> {
    let mut pairs = BTreeMap::new();
    let mut hubs = BTreeSet::new();
    for server in deployment.servers() {
        for &parent in topology.parents(server) {
            if deployment.is_server(parent) {
                let pair = Pair::ParentChild { parent, child: server };
                pairs.insert(pair.key(), pair);
            } else {
                hubs.insert(parent);
            }
        }
    }
    for hub in hubs {
        let kids: Vec<NodeId> = topology
            .children(hub)
            .iter()
            .copied()
            .filter(|&c| deployment.is_server(c))
            .collect();
        for (i, &a) in kids.iter().enumerate() {
            for &b in &kids[i + 1..] {
                let pair = Pair::siblings(a, b);
                pairs.insert(pair.key(), pair);
            }
        }
    }
    pairs.into_values().collect()
}

/// Servers paired with their nearest serving ancestors. Only consulted once
/// [`candidate_pairs`] comes back empty.
pub fn stranded_pairs(topology: &Topology, deployment: &Deployment) -> Vec<Pair> {
    let mut pairs = BTreeSet::new();
    for server in deployment.servers() {
        let mut seen = BTreeSet::new();
        let mut frontier: Vec<NodeId> = topology.parents(server).to_vec();
        while let Some(node) = frontier.pop() {
            if !seen.insert(node) {
                continue;
            }
            if deployment.is_server(node) {
                pairs.insert(Pair::Stranded {
                    ancestor: node,
                    descendant: server,
                });
            } else {
                frontier.extend_from_slice(topology.parents(node));
            }
        }
    }
    pairs.into_iter().collect()
}

fn peak(values: &[f64]) -> f64 {
    values.iter().copied().fold(0.0, f64::max)
}

fn combined_peak(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x + y).fold(0.0, f64::max)
}

/// Peak of each vector minus the peak of their sum, scaled by `tau`.
pub fn load_score(a: &[f64], b: &[f64], tau: f64) -> f64 {
    tau * ((peak(a) + peak(b)) - combined_peak(a, b))
}

/// Score of merging `pair`; higher is better.
pub fn score(topology: &Topology, serve: &ServeMap, pair: Pair, kind: ScoreKind, tau: f64) -> f64 {
    let (a, b) = pair.key();
    match kind {
        ScoreKind::LocationBased => -topology.distance(a, b),
        ScoreKind::LoadBased => {
            let empty = Vec::new();
            let sa = serve.get(&a).unwrap_or(&empty);
            let sb = serve.get(&b).unwrap_or(&empty);
            load_score(sa, sb, tau)
        }
    }
}

/// The common parent that receives a merged sibling pair, if any.
///
/// Only parents without a server qualify, so the merged load is the same for
/// every choice and load-based planning falls through to the lowest id.
/// Location-based planning prefers the smallest summed distance to the two
/// children.
pub fn sibling_target(
    topology: &Topology,
    deployment: &Deployment,
    a: NodeId,
    b: NodeId,
    kind: ScoreKind,
) -> Option<NodeId> {
    let eligible = topology
        .parents(a)
        .iter()
        .copied()
        .filter(|p| topology.is_parent(*p, b) && !deployment.is_server(*p));
    match kind {
        ScoreKind::LoadBased => eligible.min(),
        ScoreKind::LocationBased => eligible
            .map(|p| (topology.distance(a, p) + topology.distance(b, p), p))
            .min_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)))
            .map(|(_, p)| p),
    }
}

fn pair_target(topology: &Topology, deployment: &Deployment, pair: Pair, kind: ScoreKind) -> Result<NodeId> {
    let invalid = || {
        let (a, b) = pair.key();
        PlanError::InvalidPair(topology.name(a).to_string(), topology.name(b).to_string())
    };
    let (a, b) = pair.key();
    if a.index() >= topology.len()
        || b.index() >= topology.len()
        || !deployment.is_server(a)
        || !deployment.is_server(b)
    {
        return Err(invalid());
    }
    match pair {
        Pair::ParentChild { parent, child } if topology.is_parent(parent, child) => Ok(parent),
        Pair::Siblings { first, second } if first < second => {
            sibling_target(topology, deployment, first, second, kind).ok_or_else(invalid)
        }
        Pair::Stranded { ancestor, .. } if stranded_pairs(topology, deployment).contains(&pair) => Ok(ancestor),
        _ => Err(invalid()),
    }
}

/// Applies one merge and returns the resulting deployment.
pub fn consolidate(topology: &Topology, deployment: &Deployment, pair: Pair, kind: ScoreKind) -> Result<Deployment> {
    let target = pair_target(topology, deployment, pair, kind)?;
    let mut next = deployment.clone();
    let (a, b) = pair.key();
    for node in [a, b] {
        if node != target {
            next.reassign(node, target);
        }
    }
    Ok(next)
}

/// Settings for one greedy run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlannerConfig {
    /// Latency limit; `f64::INFINITY` for none.
    pub l_max_ms: f64,
    pub score: ScoreKind,
    pub mode: TraceMode,
    pub latency: LatencyModel,
    /// On a latency breach, try the next-best pair instead of stopping.
    pub exhaustive_pairs: bool,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            l_max_ms: f64::INFINITY,
            score: ScoreKind::LoadBased,
            mode: TraceMode::Enriched,
            latency: LatencyModel::default(),
            exhaustive_pairs: false,
        }
    }
}

impl PlannerConfig {
    pub fn with_l_max(l_max_ms: f64) -> Self {
        Self {
            l_max_ms,
            ..Self::default()
        }
    }
}

/// Per-iteration snapshot; one row of the run log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub iter: usize,
    /// Servers at BS, ring, aggregation and core level.
    pub servers: [usize; 4],
    /// Traffic served per level over the whole window, in the run's units.
    pub traffic: [f64; 4],
    pub latency_max_ms: f64,
    pub latency_mean_ms: f64,
    pub efficiency: f64,
}

impl IterationLog {
    pub fn total_servers(&self) -> usize {
        self.servers.iter().sum()
    }
}

pub const RUN_LOG_HEADER: [&str; 12] = [
    "iter",
    "servers_bs",
    "servers_ring",
    "servers_agg",
    "servers_core",
    "traffic_bs",
    "traffic_ring",
    "traffic_agg",
    "traffic_core",
    "latency_max_ms",
    "latency_mean_ms",
    "efficiency",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// No eligible pair remains.
    NoCandidates,
    /// The next merge would exceed the latency limit.
    LatencyLimit,
}

#[derive(Debug, Clone)]
pub struct PlannerRun {
    pub category: Category,
    pub l_max_ms: f64,
    pub score: ScoreKind,
    pub mode: TraceMode,
    pub tau: f64,
    pub iterations: Vec<IterationLog>,
    /// Pair merged to produce iteration `i + 1`.
    pub merges: Vec<Pair>,
    pub deployment: Deployment,
    pub termination: Termination,
}

impl PlannerRun {
    pub fn final_iteration(&self) -> &IterationLog {
        self.iterations
            .last()
            .expect("a run logs at least its initial deployment")
    }

    pub fn final_servers(&self) -> usize {
        self.deployment.server_count()
    }

    pub fn write_log_csv(&self, writer: impl Write) -> Result<()> {
        write_run_log(&self.iterations, writer)
    }
}

pub fn write_run_log(iterations: &[IterationLog], writer: impl Write) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(RUN_LOG_HEADER)?;
    for it in iterations {
        let mut row = vec![it.iter.to_string()];
        row.extend(it.servers.iter().map(ToString::to_string));
        row.extend(it.traffic.iter().map(ToString::to_string));
        row.push(it.latency_max_ms.to_string());
        row.push(it.latency_mean_ms.to_string());
        row.push(it.efficiency.to_string());
        wtr.write_record(&row)?;
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_run_log(reader: impl Read) -> Result<Vec<IterationLog>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.iter().ne(RUN_LOG_HEADER.iter().copied()) {
        return Err(PlanError::Config(format!("unexpected run log header {header:?}")));
    }
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let f = |i: usize| -> Result<f64> {
            row[i]
                .parse()
                .map_err(|_| PlanError::Config(format!("bad value `{}` in column {}", &row[i], RUN_LOG_HEADER[i])))
        };
        let u = |i: usize| -> Result<usize> {
            row[i]
                .parse()
                .map_err(|_| PlanError::Config(format!("bad value `{}` in column {}", &row[i], RUN_LOG_HEADER[i])))
        };
        out.push(IterationLog {
            iter: u(0)?,
            servers: [u(1)?, u(2)?, u(3)?, u(4)?],
            traffic: [f(5)?, f(6)?, f(7)?, f(8)?],
            latency_max_ms: f(9)?,
            latency_mean_ms: f(10)?,
            efficiency: f(11)?,
        });
    }
    Ok(out)
}

/// Checks the per-iteration invariants of a run log: iteration numbering,
/// one server fewer per iteration, latency within the limit and
/// non-decreasing.
pub fn check_run_log(iterations: &[IterationLog], l_max_ms: f64) -> Result<()> {
    let bad = |msg: String| Err(PlanError::InvalidDeployment(msg));
    for (i, it) in iterations.iter().enumerate() {
        if it.iter != i {
            return bad(format!("row {i} has iteration number {}", it.iter));
        }
        if it.latency_max_ms > l_max_ms {
            return bad(format!(
                "iteration {i} latency {} ms exceeds {l_max_ms} ms",
                it.latency_max_ms
            ));
        }
        if i > 0 {
            let prev = &iterations[i - 1];
            if it.total_servers() + 1 != prev.total_servers() {
                return bad(format!("iteration {i} does not remove exactly one server"));
            }
            if it.latency_max_ms < prev.latency_max_ms {
                return bad(format!("iteration {i} lowers the maximum latency"));
            }
        }
    }
    Ok(())
}

/// Mutable state of one greedy run. Serve vectors, peaks and per-level tallies
/// are updated incrementally as servers merge.
///
/// `serve` holds the vectors the score is computed on. `report` holds the
/// same loads in CPU ticks and feeds the logged traffic and efficiency.
struct Search<'a> {
    topology: &'a Topology,
    config: PlannerConfig,
    tau: f64,
    steps: usize,
    deployment: Deployment,
    serve: BTreeMap<NodeId, Vec<f64>>,
    peaks: BTreeMap<NodeId, f64>,
    report: BTreeMap<NodeId, Vec<f64>>,
    report_peaks: BTreeMap<NodeId, f64>,
    report_totals: BTreeMap<NodeId, f64>,
    versions: BTreeMap<NodeId, u64>,
    next_version: u64,
    score_cache: HashMap<(NodeId, NodeId), (f64, u64, u64)>,
    /// Active stations served at each level.
    served_at: [usize; 4],
    report_mean: f64,
}

impl<'a> Search<'a> {
    fn new(
        topology: &'a Topology,
        deployment: Deployment,
        loads: BTreeMap<NodeId, (Vec<f64>, Vec<f64>)>,
        steps: usize,
        config: PlannerConfig,
        tau: f64,
    ) -> Self {
        let mut search = Search {
            topology,
            config,
            tau,
            steps,
            served_at: [0; 4],
            report_mean: 0.0,
            peaks: BTreeMap::new(),
            report: BTreeMap::new(),
            report_peaks: BTreeMap::new(),
            report_totals: BTreeMap::new(),
            versions: BTreeMap::new(),
            next_version: 0,
            score_cache: HashMap::new(),
            serve: BTreeMap::new(),
            deployment,
        };
        for (node, (values, report)) in loads {
            search.install(node, values, report);
        }
        for &server in search.deployment.assignment().values() {
            search.served_at[topology.level(server).rank() as usize] += 1;
        }
        if search.steps > 0 {
            search.report_mean = search.report_totals.values().sum::<f64>() / search.steps as f64;
        }
        search
    }

    fn install(&mut self, node: NodeId, values: Vec<f64>, report: Vec<f64>) {
        self.peaks.insert(node, peak(&values));
        self.report_peaks.insert(node, peak(&report));
        self.report_totals.insert(node, report.iter().sum());
        self.versions.insert(node, self.next_version);
        self.next_version += 1;
        self.serve.insert(node, values);
        self.report.insert(node, report);
    }

    fn uninstall(&mut self, node: NodeId) -> (Vec<f64>, Vec<f64>) {
        self.peaks.remove(&node);
        self.report_peaks.remove(&node);
        self.report_totals.remove(&node);
        self.versions.remove(&node);
        let values = self.serve.remove(&node).unwrap_or_else(|| vec![0.0; self.steps]);
        let report = self.report.remove(&node).unwrap_or_else(|| vec![0.0; self.steps]);
        (values, report)
    }

    fn score(&mut self, pair: Pair) -> f64 {
        let (a, b) = pair.key();
        match self.config.score {
            ScoreKind::LocationBased => -self.topology.distance(a, b),
            ScoreKind::LoadBased => {
                let (va, vb) = (self.versions[&a], self.versions[&b]);
                if let Some(&(s, ca, cb)) = self.score_cache.get(&(a, b)) {
                    if ca == va && cb == vb {
                        return s;
                    }
                }
                let combined = combined_peak(&self.serve[&a], &self.serve[&b]);
                let s = self.tau * ((self.peaks[&a] + self.peaks[&b]) - combined);
                self.score_cache.insert((a, b), (s, va, vb));
                s
            }
        }
    }

    fn latency(&self, served_at: &[usize; 4]) -> LatencySummary {
        let total: usize = served_at.iter().sum();
        if total == 0 {
            return LatencySummary::default();
        }
        let mut summary = LatencySummary::default();
        let mut sum = 0.0;
        for level in Level::ALL {
            let count = served_at[level.rank() as usize];
            if count > 0 {
                let latency = self.config.latency.level_latency(level);
                summary.max_ms = summary.max_ms.max(latency);
                sum += latency * count as f64;
            }
        }
        summary.mean_ms = sum / total as f64;
        summary
    }

    /// Level tallies after moving the stations of `pair` onto `target`.
    fn prospective(&self, pair: Pair, target: NodeId) -> [usize; 4] {
        let mut served_at = self.served_at;
        let (a, b) = pair.key();
        for node in [a, b] {
            if node != target {
                let moved = self.deployment.served_by(node).map_or(0, BTreeSet::len);
                served_at[self.topology.level(node).rank() as usize] -= moved;
                served_at[self.topology.level(target).rank() as usize] += moved;
            }
        }
        served_at
    }

    fn apply(&mut self, pair: Pair, target: NodeId, served_at: [usize; 4]) {
        let (a, b) = pair.key();
        let (mut merged, mut merged_report) = if self.deployment.is_server(target) {
            self.uninstall(target)
        } else {
            (vec![0.0; self.steps], vec![0.0; self.steps])
        };
        for node in [a, b] {
            if node != target {
                let (values, report) = self.uninstall(node);
                for (acc, v) in merged.iter_mut().zip(&values) {
                    *acc += v;
                }
                for (acc, v) in merged_report.iter_mut().zip(&report) {
                    *acc += v;
                }
                self.deployment.reassign(node, target);
            }
        }
        self.install(target, merged, merged_report);
        self.served_at = served_at;
    }

    fn snapshot(&self, iter: usize) -> IterationLog {
        let mut servers = [0usize; 4];
        let mut traffic = [0.0; 4];
        for server in self.deployment.servers() {
            let level = self.topology.level(server).rank() as usize;
            servers[level] += 1;
            traffic[level] += self.report_totals[&server];
        }
        let latency = self.latency(&self.served_at);
        let deployed: f64 = self.deployment.servers().map(|s| self.report_peaks[&s]).sum();
        let efficiency = if deployed > 0.0 {
            self.report_mean / deployed
        } else {
            0.0
        };
        IterationLog {
            iter,
            servers,
            traffic,
            latency_max_ms: latency.max_ms,
            latency_mean_ms: latency.mean_ms,
            efficiency,
        }
    }

    /// Picks and applies the next merge; `Err` carries the reason to stop.
    fn step(&mut self) -> std::result::Result<Pair, Termination> {
        let mut candidates = candidate_pairs(self.topology, &self.deployment);
        if candidates.is_empty() {
            candidates = stranded_pairs(self.topology, &self.deployment);
        }
        if candidates.is_empty() {
            return Err(Termination::NoCandidates);
        }
        let mut scored: Vec<(f64, Pair)> = candidates.into_iter().map(|p| (self.score(p), p)).collect();
        // best score first; ties go to the smallest normalized key
        scored.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.key().cmp(&y.1.key())));
        let attempts = if self.config.exhaustive_pairs { scored.len() } else { 1 };
        for &(_, pair) in scored.iter().take(attempts) {
            let target = pair_target(self.topology, &self.deployment, pair, self.config.score)
                .expect("candidate pairs always have a merge target");
            let served_at = self.prospective(pair, target);
            if self.latency(&served_at).max_ms <= self.config.l_max_ms {
                self.apply(pair, target, served_at);
                return Ok(pair);
            }
        }
        Err(Termination::LatencyLimit)
    }

    /// Merges until no candidate remains or the next merge breaks the limit.
    fn run(&mut self) -> (Vec<IterationLog>, Vec<Pair>, Termination) {
        let mut iterations = vec![self.snapshot(0)];
        let mut merges = Vec::new();
        let termination = loop {
            match self.step() {
                Ok(pair) => {
                    merges.push(pair);
                    iterations.push(self.snapshot(iterations.len()));
                }
                Err(reason) => break reason,
            }
        };
        (iterations, merges, termination)
    }
}

fn tau_for(models: &CostModels, category: Category, mode: TraceMode) -> Result<f64> {
    models.tau(category, mode).ok_or(PlanError::NoModel(category))
}

/// Ticks per megabyte used for reporting; categories without a model count
/// one tick per megabyte.
pub fn tick_tau(models: &CostModels, category: Category) -> f64 {
    models.tau(category, TraceMode::Enriched).unwrap_or(1.0)
}

fn check_l_max(config: &PlannerConfig, has_demand: bool, what: &str) -> Result<()> {
    if config.l_max_ms.is_nan() {
        return Err(PlanError::Config("l_max must be a number".into()));
    }
    if has_demand && config.l_max_ms < config.latency.access_ms {
        return Err(PlanError::Config(format!(
            "l_max {} ms for {what} is below the {} ms access latency",
            config.l_max_ms, config.latency.access_ms
        )));
    }
    Ok(())
}

/// Runs the greedy placement for one category.
pub fn greedy_design(
    topology: &Topology,
    demand: &DemandSet,
    category: Category,
    config: PlannerConfig,
    models: &CostModels,
) -> Result<PlannerRun> {
    check_l_max(&config, false, category.as_str())?;
    let tau = tau_for(models, category, config.mode)?;
    let initial = initial_deployment(topology, demand, category)?;
    check_l_max(&config, initial.server_count() > 0, category.as_str())?;

    let tick_rate = tick_tau(models, category);
    let loads = serve_vectors(topology, &initial, demand)
        .into_iter()
        .map(|(node, values)| {
            let report = values.iter().map(|v| tick_rate * v).collect();
            (node, (values, report))
        })
        .collect();
    let mut search = Search::new(topology, initial, loads, demand.steps, config, tau);
    let (iterations, merges, termination) = search.run();

    Ok(PlannerRun {
        category,
        l_max_ms: config.l_max_ms,
        score: config.score,
        mode: config.mode,
        tau,
        iterations,
        merges,
        deployment: search.deployment,
        termination,
    })
}

/// Per-category runs sharing the same physical servers.
#[derive(Debug, Clone)]
pub struct CombinedPlan {
    pub runs: BTreeMap<Category, PlannerRun>,
    /// Peak combined ticks per step at each node hosting any category.
    pub capacity: BTreeMap<NodeId, f64>,
    /// Efficiency of the combined tick load.
    pub efficiency: EfficiencyReport,
}

impl CombinedPlan {
    pub fn server_nodes(&self) -> BTreeSet<NodeId> {
        self.capacity.keys().copied().collect()
    }
}

/// Final serve vectors per category, in megabytes, and the tick rate of each
/// category.
pub fn final_serve(
    topology: &Topology,
    demand: &DemandSet,
    runs: &BTreeMap<Category, PlannerRun>,
    models: &CostModels,
) -> (BTreeMap<Category, ServeMap>, BTreeMap<Category, f64>) {
    let serve = runs
        .iter()
        .map(|(&c, run)| (c, serve_vectors(topology, &run.deployment, demand)))
        .collect();
    let tau = runs.keys().map(|&c| (c, tick_tau(models, c))).collect();
    (serve, tau)
}

/// Combines finished runs: each node is dimensioned for the peak of the
/// summed tick load of every category it serves. Ticks are used whatever
/// mode the runs planned in.
pub fn combine_runs(
    topology: &Topology,
    demand: &DemandSet,
    runs: BTreeMap<Category, PlannerRun>,
    models: &CostModels,
) -> Result<CombinedPlan> {
    let (serve, tau) = final_serve(topology, demand, &runs, models);
    let mut combined: BTreeMap<NodeId, Vec<f64>> = BTreeMap::new();
    for (category, per_node) in &serve {
        for (&node, values) in per_node {
            let slot = combined.entry(node).or_insert_with(|| vec![0.0; demand.steps]);
            for (acc, v) in slot.iter_mut().zip(values) {
                *acc += tau[category] * v;
            }
        }
    }
    let capacity = combined.into_iter().map(|(n, v)| (n, peak(&v))).collect();
    let efficiency = efficiency(&serve, &tau).map_err(|e| PlanError::Config(e.to_string()))?;
    Ok(CombinedPlan {
        runs,
        capacity,
        efficiency,
    })
}

/// Plans every category present in `demand` with its own config; the runs
/// execute concurrently.
pub fn multi_category_plan(
    topology: &Topology,
    demand: &DemandSet,
    configs: &BTreeMap<Category, PlannerConfig>,
    models: &CostModels,
) -> Result<CombinedPlan> {
    let categories = demand.categories();
    for category in &categories {
        if !configs.contains_key(category) {
            return Err(PlanError::MissingConfig(*category));
        }
    }
    let results: Vec<Result<PlannerRun>> = std::thread::scope(|scope| {
        let handles: Vec<_> = categories
            .iter()
            .map(|&category| {
                let config = configs[&category];
                scope.spawn(move || greedy_design(topology, demand, category, config, models))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("planner thread panicked"))
            .collect()
    });
    let mut runs = BTreeMap::new();
    for run in results {
        let run = run?;
        runs.insert(run.category, run);
    }
    combine_runs(topology, demand, runs, models)
}

/// Plans `categories` together: each station's load is the sum of its
/// category demands weighted by the mode's tick rates, and every category of
/// a station follows the same server. The returned runs share one iteration
/// log, whose traffic and efficiency are in ticks.
pub fn pooled_plan(
    topology: &Topology,
    demand: &DemandSet,
    categories: &[Category],
    config: PlannerConfig,
    models: &CostModels,
) -> Result<CombinedPlan> {
    let Some(&first) = categories.first() else {
        return Err(PlanError::Config("pooled planning needs at least one category".into()));
    };
    check_l_max(&config, false, "pooled plan")?;
    let mut loads: BTreeMap<NodeId, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    let mut per_category = BTreeMap::new();
    for &category in categories {
        let plan_rate = tau_for(models, category, config.mode)?;
        let tick_rate = tick_tau(models, category);
        let initial = initial_deployment(topology, demand, category)?;
        for (node, values) in serve_vectors(topology, &initial, demand) {
            let (plan, report) = loads
                .entry(node)
                .or_insert_with(|| (vec![0.0; demand.steps], vec![0.0; demand.steps]));
            for (i, v) in values.iter().enumerate() {
                plan[i] += plan_rate * v;
                report[i] += tick_rate * v;
            }
        }
        per_category.insert(category, (plan_rate, initial));
    }
    let initial = Deployment::from_assignment(first, loads.keys().map(|&n| (n, n)).collect());
    check_l_max(&config, initial.server_count() > 0, "pooled plan")?;

    let mut search = Search::new(topology, initial, loads, demand.steps, config, 1.0);
    let (iterations, merges, termination) = search.run();
    let pooled = search.deployment;

    let mut runs = BTreeMap::new();
    for (category, (tau, initial)) in per_category {
        let assignment = initial
            .assignment()
            .keys()
            .map(|&bs| {
                (
                    bs,
                    pooled.server_of(bs).expect("pooled plan serves every active station"),
                )
            })
            .collect();
        runs.insert(
            category,
            PlannerRun {
                category,
                l_max_ms: config.l_max_ms,
                score: config.score,
                mode: config.mode,
                tau,
                iterations: iterations.clone(),
                merges: merges.clone(),
                deployment: Deployment::from_assignment(category, assignment),
                termination,
            },
        );
    }
    combine_runs(topology, demand, runs, models)
}
