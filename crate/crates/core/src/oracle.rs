//! Exact minimum server placement for small instances.
//!
//! A server set is feasible when every active base station has a server among
//! the ancestors it can reach within the latency limit. Sets are enumerated by
//! increasing size, so the first feasible set found is minimal.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::metrics::LatencyModel;
use crate::planner::PlannerRun;
use crate::topology::{NodeId, Topology};
use crate::trace::{Category, DemandSet};

/// Largest topology the exhaustive search accepts.
pub const MAX_NODES: usize = 25;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("instance has {nodes} nodes; exhaustive search is limited to {MAX_NODES}")]
    BudgetExceeded { nodes: usize },
    #[error("demand references unknown base station `{0}`")]
    UnknownBaseStation(String),
    #[error("greedy run and oracle solution describe different instances: {0}")]
    Mismatch(String),
}

pub type Result<T, E = OracleError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    pub category: Category,
    pub l_max_ms: f64,
    pub feasible: bool,
    pub min_servers: usize,
    pub placement: BTreeSet<NodeId>,
    /// Station → serving node.
    pub assignment: BTreeMap<NodeId, NodeId>,
}

/// Advances `combo` (strictly increasing indices below `n`) to the next
/// combination in lexicographic order.
fn next_combination(combo: &mut [usize], n: usize) -> bool {
    let k = combo.len();
    for i in (0..k).rev() {
        if combo[i] < n - k + i {
            combo[i] += 1;
            for j in i + 1..k {
                combo[j] = combo[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

pub fn solve_optimal(
    topology: &Topology,
    demand: &DemandSet,
    category: Category,
    l_max_ms: f64,
    model: &LatencyModel,
) -> Result<OracleSolution> {
    if topology.len() > MAX_NODES {
        return Err(OracleError::BudgetExceeded { nodes: topology.len() });
    }
    let mut solution = OracleSolution {
        category,
        l_max_ms,
        feasible: true,
        min_servers: 0,
        placement: BTreeSet::new(),
        assignment: BTreeMap::new(),
    };

    // feasible serving nodes per active station, cheapest first
    let mut reach: Vec<(NodeId, Vec<NodeId>)> = Vec::new();
    for series in demand.for_category(category) {
        let bs = topology
            .id(&series.bs_id)
            .map_err(|_| OracleError::UnknownBaseStation(series.bs_id.clone()))?;
        if series.peak() <= 0.0 {
            continue;
        }
        let mut options: Vec<NodeId> = topology
            .ancestors(bs)
            .iter()
            .copied()
            .filter(|&n| {
                let hops = topology.hop_count(bs, n).expect("ancestor");
                model.access_ms + f64::from(hops) * model.per_hop_ms <= l_max_ms
            })
            .collect();
        if options.is_empty() {
            solution.feasible = false;
            return Ok(solution);
        }
        options.sort_by_key(|&n| (topology.level(n), n));
        reach.push((bs, options));
    }
    if reach.is_empty() {
        return Ok(solution);
    }

    // higher levels first, so among minimal sets the enumeration settles on
    // the highest shared ancestors
    let mut candidates: Vec<NodeId> = reach
        .iter()
        .flat_map(|(_, opts)| opts.iter().copied())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    candidates.sort_by_key(|&n| (std::cmp::Reverse(topology.level(n)), n));
    let bit = |n: NodeId| 1u32 << candidates.iter().position(|&c| c == n).expect("candidate");
    let masks: Vec<u32> = reach
        .iter()
        .map(|(_, opts)| opts.iter().fold(0, |m, &n| m | bit(n)))
        .collect();

    for size in 1..=candidates.len() {
        let mut combo: Vec<usize> = (0..size).collect();
        loop {
            let chosen = combo.iter().fold(0u32, |m, &i| m | (1 << i));
            if masks.iter().all(|&m| m & chosen != 0) {
                let placement: BTreeSet<NodeId> = combo.iter().map(|&i| candidates[i]).collect();
                let assignment: BTreeMap<NodeId, NodeId> = reach
                    .iter()
                    .map(|(bs, opts)| {
                        let server = *opts.iter().find(|n| placement.contains(n)).expect("covered");
                        (*bs, server)
                    })
                    .collect();
                let used: BTreeSet<NodeId> = assignment.values().copied().collect();
                debug_assert_eq!(used, placement, "a minimal cover has no idle server");
                solution.min_servers = used.len();
                solution.placement = used;
                solution.assignment = assignment;
                return Ok(solution);
            }
            if !next_combination(&mut combo, candidates.len()) {
                break;
            }
        }
    }
    unreachable!("the full candidate set covers every station")
}

/// Final greedy server count over the optimum: 1 when both are zero, infinite
/// when only the optimum is zero.
pub fn gap_report(run: &PlannerRun, oracle: &OracleSolution) -> Result<f64> {
    if run.category != oracle.category {
        return Err(OracleError::Mismatch(format!(
            "categories {} and {}",
            run.category, oracle.category
        )));
    }
    if run.l_max_ms != oracle.l_max_ms {
        return Err(OracleError::Mismatch(format!(
            "limits {} ms and {} ms",
            run.l_max_ms, oracle.l_max_ms
        )));
    }
    let greedy = run.final_servers();
    Ok(match (greedy, oracle.min_servers) {
        (0, 0) => 1.0,
        (_, 0) => f64::INFINITY,
        (g, m) => g as f64 / m as f64,
    })
}
