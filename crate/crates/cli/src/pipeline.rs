use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use mecplan::metrics::ServeMap;
use mecplan::planner::{check_run_log, serve_vectors, tick_tau, PlanError, Termination};
use mecplan::topology::read_positions_csv;
use mecplan::trace::{
    aggregate, generate_bs_positions, generate_synthetic_trace, read_trace_csv, DemandRecord, TaggingRules,
};
use mecplan::{
    deployment_latency, efficiency, initial_deployment, level_breakdown, multi_category_plan, pooled_plan, Category,
    CombinedPlan, CostModel, CostModels, DemandSet, IterationLog, LatencyModel, Level, PlannerConfig, ScoreKind,
    Topology, TraceMode,
};
use serde::Serialize;

use crate::config::{ExperimentConfig, Planning};
use crate::CliError;

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path).map(BufReader::new).map_err(|e| CliError::io(path, e))
}

fn plan_error(err: PlanError) -> CliError {
    match err {
        // the only planner config errors left after validation are limits
        // that no deployment can meet
        PlanError::Config(msg) => CliError::Infeasible(msg),
        other => CliError::Config(other.to_string()),
    }
}

/// Everything the planner needs, loaded once per invocation.
pub struct Inputs {
    pub topology: Topology,
    pub demand: DemandSet,
    /// Raw records when the trace was synthesized, for writing out.
    pub records: Option<Vec<DemandRecord>>,
    pub positions: Vec<(String, f64, f64)>,
    pub rejected: usize,
    pub models: CostModels,
}

pub fn load_models(config: &ExperimentConfig) -> Result<CostModels, CliError> {
    match &config.cost_models {
        Some(path) => CostModels::load(path).map_err(|e| CliError::io(path, e)),
        None => Ok(CostModels::default()),
    }
}

pub fn load_inputs(config: &ExperimentConfig) -> Result<Inputs, CliError> {
    let models = load_models(config)?;
    let rules = TaggingRules::default();
    let (records, positions, rejected, keep) = match (&config.trace.path, &config.trace.synthetic) {
        (Some(path), _) => {
            let ingest = read_trace_csv(open(path)?).map_err(|e| CliError::io(path, e))?;
            let positions_path = config.trace.positions.as_ref().expect("validated");
            let positions = read_positions_csv(open(positions_path)?).map_err(|e| CliError::io(positions_path, e))?;
            (ingest.records, positions, ingest.rejected, false)
        }
        (None, Some(synthetic)) => {
            let records =
                generate_synthetic_trace(synthetic, config.seed).map_err(|e| CliError::Config(e.to_string()))?;
            let positions =
                generate_bs_positions(synthetic, config.seed).map_err(|e| CliError::Config(e.to_string()))?;
            (records, positions, 0, true)
        }
        (None, None) => return Err(CliError::Config("trace: no source".into())),
    };
    let aggregation = aggregate(&records, &rules, config.step_seconds).map_err(|e| CliError::Config(e.to_string()))?;
    let topology = Topology::build_fat_tree(&positions).map_err(|e| CliError::Config(e.to_string()))?;
    Ok(Inputs {
        topology,
        demand: aggregation.demand,
        records: keep.then_some(records),
        positions,
        rejected: rejected + aggregation.rejected,
        models,
    })
}

/// What one planning pass needs besides the inputs.
#[derive(Debug, Clone, Copy)]
pub struct PlanSettings {
    pub score: ScoreKind,
    pub mode: TraceMode,
    pub planning: Planning,
    pub include_other_raw: bool,
    pub exhaustive_pairs: bool,
}

impl PlanSettings {
    pub fn from_config(config: &ExperimentConfig) -> Self {
        Self {
            score: config.score,
            mode: config.mode,
            planning: config.planning,
            include_other_raw: config.include_other_raw,
            exhaustive_pairs: config.exhaustive_pairs,
        }
    }
}

pub struct PlanOutcome {
    pub settings: PlanSettings,
    pub plan: CombinedPlan,
    /// Models used, including the unit-rate model for Other when planned.
    pub models: CostModels,
    /// Iteration-0 log of Other traffic when it is excluded from planning.
    pub other_log: Option<Vec<IterationLog>>,
}

impl PlanOutcome {
    /// Run logs by category, Other's unplanned log included.
    pub fn logs(&self) -> BTreeMap<Category, &[IterationLog]> {
        let mut logs: BTreeMap<Category, &[IterationLog]> = self
            .plan
            .runs
            .iter()
            .map(|(&c, run)| (c, run.iterations.as_slice()))
            .collect();
        if let Some(other) = &self.other_log {
            logs.insert(Category::Other, other);
        }
        logs
    }
}

pub fn planned_categories(demand: &DemandSet, include_other_raw: bool) -> Vec<Category> {
    demand
        .categories()
        .into_iter()
        .filter(|c| c.is_modeled() || include_other_raw)
        .collect()
}

pub fn plan(inputs: &Inputs, config: &ExperimentConfig, settings: PlanSettings) -> Result<PlanOutcome, CliError> {
    let mut models = inputs.models.clone();
    if settings.include_other_raw {
        let unit = CostModel {
            category: Category::Other,
            slope: 1.0,
            intercept: 0.0,
            nrmse: 0.0,
        };
        models = CostModels::from_models(
            models
                .iter()
                .copied()
                .filter(|m| m.category != Category::Other)
                .chain([unit]),
        );
    }
    let categories = planned_categories(&inputs.demand, settings.include_other_raw);
    let demand = inputs.demand.restricted(&categories);
    let base = |l_max_ms: f64| PlannerConfig {
        l_max_ms,
        score: settings.score,
        mode: settings.mode,
        latency: LatencyModel::default(),
        exhaustive_pairs: settings.exhaustive_pairs,
    };

    let plan = match settings.planning {
        Planning::PerCategory => {
            let configs = categories.iter().map(|&c| (c, base(config.l_max.get(c)))).collect();
            multi_category_plan(&inputs.topology, &demand, &configs, &models).map_err(plan_error)?
        }
        Planning::Pooled if categories.is_empty() => {
            multi_category_plan(&inputs.topology, &demand, &BTreeMap::new(), &models).map_err(plan_error)?
        }
        Planning::Pooled => {
            // one server per station serves every category, so the strictest
            // limit applies
            let l_max = categories
                .iter()
                .map(|&c| config.l_max.get(c))
                .fold(f64::INFINITY, f64::min);
            pooled_plan(&inputs.topology, &demand, &categories, base(l_max), &models).map_err(plan_error)?
        }
    };
    for (category, run) in &plan.runs {
        check_run_log(&run.iterations, run.l_max_ms)
            .map_err(|e| CliError::Infeasible(format!("{category} run log: {e}")))?;
    }

    let other_log = if settings.include_other_raw || inputs.demand.for_category(Category::Other).next().is_none() {
        None
    } else {
        Some(vec![unplanned_log(&inputs.topology, &inputs.demand, Category::Other)?])
    };
    Ok(PlanOutcome {
        settings,
        plan,
        models,
        other_log,
    })
}

/// Iteration 0 of a category that is not planned: every active station
/// serves itself. Traffic is in megabytes.
fn unplanned_log(topology: &Topology, demand: &DemandSet, category: Category) -> Result<IterationLog, CliError> {
    let deployment = initial_deployment(topology, demand, category).map_err(plan_error)?;
    let latency = deployment_latency(topology, &deployment, &LatencyModel::default());
    let levels = level_breakdown(topology, &deployment, demand);
    let serve = BTreeMap::from([(category, serve_vectors(topology, &deployment, demand))]);
    let eta = efficiency(&serve, &BTreeMap::from([(category, 1.0)]))
        .map_err(|e| CliError::Config(e.to_string()))?
        .eta;
    Ok(IterationLog {
        iter: 0,
        servers: levels.servers,
        traffic: levels.traffic,
        latency_max_ms: latency.max_ms,
        latency_mean_ms: latency.mean_ms,
        efficiency: eta,
    })
}

/// Values indexed by network level.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct PerLevel<T> {
    pub bs: T,
    pub ring: T,
    pub agg: T,
    pub core: T,
}

impl<T: Copy> From<[T; 4]> for PerLevel<T> {
    fn from(v: [T; 4]) -> Self {
        Self {
            bs: v[0],
            ring: v[1],
            agg: v[2],
            core: v[3],
        }
    }
}

fn shares(traffic: [f64; 4]) -> [f64; 4] {
    let total: f64 = traffic.iter().sum();
    if total > 0.0 {
        traffic.map(|t| t / total)
    } else {
        [0.0; 4]
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CategorySummary {
    pub planned: bool,
    /// `null` for no limit.
    pub l_max_ms: Option<f64>,
    pub iterations: usize,
    pub termination: Option<Termination>,
    pub servers: PerLevel<usize>,
    pub traffic_share: PerLevel<f64>,
    pub latency_max_ms: f64,
    pub latency_mean_ms: f64,
    pub efficiency: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CombinedSummary {
    pub efficiency: f64,
    /// Time-averaged tick load.
    pub mean_ticks: f64,
    /// Sum of per-node peak tick loads.
    pub deployed_ticks: f64,
    pub server_nodes: usize,
    pub servers: PerLevel<usize>,
    /// Share of ticks served at each level.
    pub traffic_share: PerLevel<f64>,
    pub latency_max_ms: f64,
    /// Mean over every (station, category) assignment.
    pub latency_mean_ms: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ModeSummary {
    pub mode: TraceMode,
    pub score: ScoreKind,
    pub planning: Planning,
    pub exhaustive_pairs: bool,
    pub categories: BTreeMap<Category, CategorySummary>,
    pub combined: CombinedSummary,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

pub fn summarize(inputs: &Inputs, outcome: &PlanOutcome) -> Result<ModeSummary, CliError> {
    let topology = &inputs.topology;
    let latency_model = LatencyModel::default();
    let mut categories = BTreeMap::new();
    let mut combined_traffic = [0.0; 4];
    let (mut latency_max, mut latency_sum, mut assignments) = (0.0f64, 0.0, 0usize);

    for (&category, run) in &outcome.plan.runs {
        let latency = deployment_latency(topology, &run.deployment, &latency_model);
        let levels = level_breakdown(topology, &run.deployment, &inputs.demand);
        let rate = tick_tau(&outcome.models, category);
        let serve: BTreeMap<Category, ServeMap> =
            BTreeMap::from([(category, serve_vectors(topology, &run.deployment, &inputs.demand))]);
        let eta = efficiency(&serve, &BTreeMap::from([(category, rate)]))
            .map_err(|e| CliError::Config(e.to_string()))?
            .eta;
        for (acc, t) in combined_traffic.iter_mut().zip(levels.traffic) {
            *acc += rate * t;
        }
        let stations = run.deployment.assignment().len();
        latency_max = latency_max.max(latency.max_ms);
        latency_sum += latency.mean_ms * stations as f64;
        assignments += stations;
        categories.insert(
            category,
            CategorySummary {
                planned: true,
                l_max_ms: finite(run.l_max_ms),
                iterations: run.iterations.len() - 1,
                termination: Some(run.termination),
                servers: levels.servers.into(),
                traffic_share: levels.shares().into(),
                latency_max_ms: latency.max_ms,
                latency_mean_ms: latency.mean_ms,
                efficiency: eta,
            },
        );
    }
    if let Some(log) = &outcome.other_log {
        let it = &log[0];
        categories.insert(
            Category::Other,
            CategorySummary {
                planned: false,
                l_max_ms: None,
                iterations: 0,
                termination: None,
                servers: it.servers.into(),
                traffic_share: shares(it.traffic).into(),
                latency_max_ms: it.latency_max_ms,
                latency_mean_ms: it.latency_mean_ms,
                efficiency: it.efficiency,
            },
        );
    }

    let mut servers = [0usize; 4];
    for node in outcome.plan.server_nodes() {
        servers[topology.level(node).rank() as usize] += 1;
    }
    let report = outcome.plan.efficiency;
    Ok(ModeSummary {
        mode: outcome.settings.mode,
        score: outcome.settings.score,
        planning: outcome.settings.planning,
        exhaustive_pairs: outcome.settings.exhaustive_pairs,
        categories,
        combined: CombinedSummary {
            efficiency: report.eta,
            mean_ticks: report.numerator,
            deployed_ticks: report.denominator,
            server_nodes: outcome.plan.capacity.len(),
            servers: servers.into(),
            traffic_share: shares(combined_traffic).into(),
            latency_max_ms: latency_max,
            latency_mean_ms: if assignments > 0 {
                latency_sum / assignments as f64
            } else {
                0.0
            },
        },
    })
}

/// Enriched minus raw.
#[derive(Debug, Clone, Serialize)]
pub struct ModeDelta {
    pub efficiency: f64,
    pub latency_max_ms: f64,
    pub latency_mean_ms: f64,
    pub server_nodes: i64,
}

pub fn mode_delta(enriched: &ModeSummary, raw: &ModeSummary) -> ModeDelta {
    let (e, r) = (&enriched.combined, &raw.combined);
    ModeDelta {
        efficiency: e.efficiency - r.efficiency,
        latency_max_ms: e.latency_max_ms - r.latency_max_ms,
        latency_mean_ms: e.latency_mean_ms - r.latency_mean_ms,
        server_nodes: e.server_nodes as i64 - r.server_nodes as i64,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub seed: u64,
    pub base_stations: usize,
    pub steps: usize,
    pub rejected_records: usize,
    /// Megabytes per category over the whole trace.
    pub traffic_mb: BTreeMap<Category, f64>,
    pub modes: BTreeMap<String, ModeSummary>,
    pub delta_enriched_minus_raw: Option<ModeDelta>,
}

pub fn summary(config: &ExperimentConfig, inputs: &Inputs, modes: Vec<ModeSummary>) -> Summary {
    let by_mode: BTreeMap<String, ModeSummary> = modes.into_iter().map(|m| (m.mode.to_string(), m)).collect();
    let delta = match (by_mode.get("enriched"), by_mode.get("raw")) {
        (Some(e), Some(r)) => Some(mode_delta(e, r)),
        _ => None,
    };
    Summary {
        seed: config.seed,
        base_stations: inputs.topology.count_at(Level::BaseStation),
        steps: inputs.demand.steps,
        rejected_records: inputs.rejected,
        traffic_mb: inputs
            .demand
            .categories()
            .into_iter()
            .map(|c| (c, inputs.demand.category_megabytes(c)))
            .collect(),
        modes: by_mode,
        delta_enriched_minus_raw: delta,
    }
}

/// One row of the score × mode trade-off table.
#[derive(Debug, Clone, Serialize)]
pub struct CompareRow {
    pub planning: Planning,
    pub score: ScoreKind,
    pub mode: TraceMode,
    pub efficiency: f64,
    pub latency_max_ms: f64,
    pub latency_mean_ms: f64,
    pub server_nodes: usize,
}

pub fn compare(inputs: &Inputs, config: &ExperimentConfig, base: PlanSettings) -> Result<Vec<CompareRow>, CliError> {
    let mut rows = Vec::new();
    for planning in [Planning::PerCategory, Planning::Pooled] {
        for score in [ScoreKind::LocationBased, ScoreKind::LoadBased] {
            for mode in [TraceMode::Enriched, TraceMode::Raw] {
                let settings = PlanSettings {
                    planning,
                    score,
                    mode,
                    ..base
                };
                let outcome = plan(inputs, config, settings)?;
                let s = summarize(inputs, &outcome)?;
                rows.push(CompareRow {
                    planning,
                    score,
                    mode,
                    efficiency: s.combined.efficiency,
                    latency_max_ms: s.combined.latency_max_ms,
                    latency_mean_ms: s.combined.latency_mean_ms,
                    server_nodes: s.combined.server_nodes,
                });
            }
        }
    }
    Ok(rows)
}
