//! Planning multi-access edge computing deployments from cellular demand
//! traces.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`trace`]: tag application traffic into content categories, bin it per
//!    base station and time step, and convert megabytes into CPU ticks with
//!    per-category linear cost models.
//! 2. [`topology`]: build a fat-tree backhaul (base stations, rings,
//!    aggregation pods, cores) and its serving DAG.
//! 3. [`planner`]: greedily consolidate per-station servers up the DAG under a
//!    per-category latency limit, guided by a location- or load-based score.
//! 4. [`metrics`]: report latency and efficiency of the resulting deployment.
//!
//! [`oracle`] solves small instances exactly to measure the greedy gap.

pub mod metrics;
pub mod oracle;
pub mod planner;
pub mod topology;
pub mod trace;

pub use metrics::{deployment_latency, efficiency, level_breakdown, EfficiencyReport, LatencyModel, LevelBreakdown};
pub use oracle::{gap_report, solve_optimal, OracleSolution};
pub use planner::{
    candidate_pairs, consolidate, greedy_design, initial_deployment, multi_category_plan, pooled_plan, CombinedPlan,
    Deployment, IterationLog, Pair, PlannerConfig, PlannerRun, ScoreKind,
};
pub use topology::{Level, NodeId, Topology};
pub use trace::{Category, CostModel, CostModels, DemandRecord, DemandSeries, DemandSet, TraceMode};
