//! Latency and efficiency of a deployment.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::planner::{serve_vectors, Deployment};
use crate::topology::{Level, NodeId, Topology};
use crate::trace::{Category, DemandSet};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("serve vector for {category} at node {node} has {len} steps, expected {expected}")]
    Shape {
        category: Category,
        node: u32,
        len: usize,
        expected: usize,
    },
    #[error("no tick rate given for category {0}")]
    MissingTau(Category),
}

pub type Result<T, E = MetricsError> = std::result::Result<T, E>;

/// Access latency plus a fixed cost per backhaul hop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyModel {
    pub access_ms: f64,
    pub per_hop_ms: f64,
}

impl Default for LatencyModel {
    fn default() -> Self {
        Self {
            access_ms: 5.0,
            per_hop_ms: 2.3,
        }
    }
}

impl LatencyModel {
    pub fn new(access_ms: f64, per_hop_ms: f64) -> Result<Self> {
        if !(access_ms > 0.0 && access_ms.is_finite() && per_hop_ms > 0.0 && per_hop_ms.is_finite()) {
            return Err(MetricsError::InvalidInput(format!(
                "latency terms must be positive, got access {access_ms} ms and per-hop {per_hop_ms} ms"
            )));
        }
        Ok(Self { access_ms, per_hop_ms })
    }

    pub fn bs_latency(&self, hops: i32) -> Result<f64> {
        if hops < 0 {
            return Err(MetricsError::InvalidInput(format!("negative hop count {hops}")));
        }
        Ok(self.access_ms + f64::from(hops) * self.per_hop_ms)
    }

    /// Latency for a base station served at `level`.
    pub fn level_latency(&self, level: Level) -> f64 {
        self.access_ms + f64::from(level.rank()) * self.per_hop_ms
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LatencySummary {
    pub max_ms: f64,
    pub mean_ms: f64,
}

/// Max and mean latency over the deployment's active base stations; zero
/// for an empty deployment.
pub fn deployment_latency(topology: &Topology, deployment: &Deployment, model: &LatencyModel) -> LatencySummary {
    let mut max_ms: f64 = 0.0;
    let mut sum = 0.0;
    let mut n = 0usize;
    for (&bs, &server) in deployment.assignment() {
        let hops = topology
            .hop_count(bs, server)
            .expect("deployment assigns every station to an ancestor");
        let latency = model.access_ms + f64::from(hops) * model.per_hop_ms;
        max_ms = max_ms.max(latency);
        sum += latency;
        n += 1;
    }
    if n == 0 {
        return LatencySummary::default();
    }
    LatencySummary {
        max_ms,
        mean_ms: sum / n as f64,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EfficiencyReport {
    pub eta: f64,
    /// Time-averaged total load.
    pub numerator: f64,
    /// Sum over nodes of each node's peak load.
    pub denominator: f64,
}

/// Serve vectors of one category, keyed by serving node.
pub type ServeMap = BTreeMap<NodeId, Vec<f64>>;

/// Ratio of average required capacity to peak-provisioned capacity, over all
/// categories sharing the nodes. Zero when nothing is deployed.
pub fn efficiency(serve: &BTreeMap<Category, ServeMap>, tau: &BTreeMap<Category, f64>) -> Result<EfficiencyReport> {
    let steps = serve
        .values()
        .flat_map(|m| m.values())
        .map(Vec::len)
        .next()
        .unwrap_or(0);
    let mut combined: BTreeMap<NodeId, Vec<f64>> = BTreeMap::new();
    for (&category, per_node) in serve {
        if per_node.is_empty() {
            continue;
        }
        let rate = *tau.get(&category).ok_or(MetricsError::MissingTau(category))?;
        for (&node, values) in per_node {
            if values.len() != steps {
                return Err(MetricsError::Shape {
                    category,
                    node: node.0,
                    len: values.len(),
                    expected: steps,
                });
            }
            let slot = combined.entry(node).or_insert_with(|| vec![0.0; steps]);
            for (acc, v) in slot.iter_mut().zip(values) {
                *acc += rate * v;
            }
        }
    }
    if steps == 0 {
        return Ok(EfficiencyReport::default());
    }
    let total: f64 = combined.values().flat_map(|v| v.iter()).sum();
    let numerator = total / steps as f64;
    let denominator: f64 = combined.values().map(|v| v.iter().copied().fold(0.0, f64::max)).sum();
    let eta = if denominator > 0.0 {
        numerator / denominator
    } else {
        0.0
    };
    Ok(EfficiencyReport {
        eta,
        numerator,
        denominator,
    })
}

/// Server counts and served traffic per network level.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LevelBreakdown {
    pub servers: [usize; 4],
    /// Total traffic served at each level over the whole window.
    pub traffic: [f64; 4],
}

impl LevelBreakdown {
    pub fn total_servers(&self) -> usize {
        self.servers.iter().sum()
    }

    /// Traffic fractions per level; all zero when there is no traffic.
    pub fn shares(&self) -> [f64; 4] {
        let total: f64 = self.traffic.iter().sum();
        if total > 0.0 {
            self.traffic.map(|t| t / total)
        } else {
            [0.0; 4]
        }
    }
}

pub fn level_breakdown(topology: &Topology, deployment: &Deployment, demand: &DemandSet) -> LevelBreakdown {
    let mut out = LevelBreakdown::default();
    for (node, values) in serve_vectors(topology, deployment, demand) {
        let level = topology.level(node).rank() as usize;
        out.servers[level] += 1;
        out.traffic[level] += values.iter().sum::<f64>();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(category: Category, values: Vec<Vec<f64>>) -> BTreeMap<Category, ServeMap> {
        let map = values
            .into_iter()
            .enumerate()
            .map(|(i, v)| (NodeId(i as u32), v))
            .collect();
        BTreeMap::from([(category, map)])
    }

    fn unit_tau() -> BTreeMap<Category, f64> {
        Category::ALL.iter().map(|&c| (c, 1.0)).collect()
    }

    #[test]
    fn hop_latencies() {
        let model = LatencyModel::default();
        assert_eq!(model.bs_latency(0).unwrap(), 5.0);
        assert!((model.bs_latency(1).unwrap() - 7.3).abs() < 1e-12);
        let core = model.bs_latency(3).unwrap();
        assert!((core - 11.9).abs() < 1e-12);
        assert!((core - 12.0).abs() <= 0.1 + 1e-12);
        assert!(model.bs_latency(-1).is_err());
        assert!(LatencyModel::new(0.0, 2.3).is_err());
        assert!(LatencyModel::new(5.0, -1.0).is_err());
    }

    #[test]
    fn efficiency_cases() {
        let tau = unit_tau();
        let flat = efficiency(&one(Category::Video, vec![vec![10.0, 10.0, 10.0]]), &tau).unwrap();
        assert!((flat.eta - 1.0).abs() < 1e-9);

        let half = efficiency(&one(Category::Video, vec![vec![10.0, 0.0]]), &tau).unwrap();
        assert!((half.eta - 0.5).abs() < 1e-9);

        let split = efficiency(&one(Category::Video, vec![vec![10.0, 0.0], vec![0.0, 10.0]]), &tau).unwrap();
        let merged = efficiency(&one(Category::Video, vec![vec![10.0, 10.0]]), &tau).unwrap();
        assert!((split.eta - 0.5).abs() < 1e-9);
        assert!((merged.eta - 1.0).abs() < 1e-9);
    }

    #[test]
    fn efficiency_combines_categories_per_node() {
        // gaming and video anti-correlated on one node
        let mut serve = one(Category::Video, vec![vec![4.0, 0.0]]);
        serve.insert(Category::Gaming, BTreeMap::from([(NodeId(0), vec![0.0, 1.0])]));
        let tau = BTreeMap::from([(Category::Video, 0.25), (Category::Gaming, 1.0)]);
        let report = efficiency(&serve, &tau).unwrap();
        assert!((report.eta - 1.0).abs() < 1e-12);
        assert!((report.denominator - 1.0).abs() < 1e-12);
    }

    #[test]
    fn efficiency_edge_cases() {
        let tau = unit_tau();
        assert_eq!(efficiency(&BTreeMap::new(), &tau).unwrap().eta, 0.0);
        assert_eq!(
            efficiency(&one(Category::Maps, vec![vec![0.0, 0.0]]), &tau)
                .unwrap()
                .eta,
            0.0
        );
        let err = efficiency(&one(Category::Maps, vec![vec![1.0, 0.0], vec![1.0]]), &tau).unwrap_err();
        assert!(matches!(err, MetricsError::Shape { .. }));
        let err = efficiency(&one(Category::Maps, vec![vec![1.0]]), &BTreeMap::new()).unwrap_err();
        assert_eq!(err, MetricsError::MissingTau(Category::Maps));
    }
}
