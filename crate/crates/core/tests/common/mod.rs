#![allow(dead_code)]

use mecplan::topology::NodeSpec;
use mecplan::trace::{aggregate, generate_bs_positions, generate_synthetic_trace, SyntheticConfig, TaggingRules};
use mecplan::{Category, DemandSeries, DemandSet, Level, Topology};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Instance {
    pub topology: Topology,
    pub demand: DemandSet,
}

/// Synthetic trace on a fat tree over `base_stations` stations, hourly steps.
pub fn synthetic(base_stations: usize, days: u32, seed: u64) -> Instance {
    let config = SyntheticConfig {
        base_stations,
        days,
        ..Default::default()
    };
    let records = generate_synthetic_trace(&config, seed).unwrap();
    let positions = generate_bs_positions(&config, seed).unwrap();
    let demand = aggregate(&records, &TaggingRules::default(), 3600).unwrap().demand;
    Instance {
        topology: Topology::build_fat_tree(&positions).unwrap(),
        demand,
    }
}

/// Random four-level topology with at most `max_nodes` nodes. Every non-core
/// node gets one or two parents one level up and every non-station node
/// keeps at least one child.
pub fn random_layered(rng: &mut impl Rng, max_nodes: usize) -> Topology {
    assert!(max_nodes >= 4);
    let cores = rng.random_range(1..=2usize);
    let pods = rng.random_range(cores..=3usize.max(cores));
    let rings = rng.random_range(pods..=4usize.max(pods));
    let stations = rng.random_range(rings..=max_nodes - cores - pods - rings);
    let counts = [stations, rings, pods, cores];
    let prefix = ["b", "r", "p", "c"];

    let mut specs = Vec::new();
    for (rank, level) in Level::ALL.iter().enumerate() {
        for i in 0..counts[rank] {
            specs.push(NodeSpec {
                id: format!("{}{i}", prefix[rank]),
                level: *level,
                x: rng.random_range(0.0..1000.0),
                y: rng.random_range(0.0..1000.0),
            });
        }
    }
    let mut edges = Vec::new();
    for rank in 0..3 {
        let (below, above) = (counts[rank], counts[rank + 1]);
        for i in 0..below {
            // round robin first, so every upper node has a child
            let first = i % above;
            edges.push((format!("{}{first}", prefix[rank + 1]), format!("{}{i}", prefix[rank])));
            if above > 1 && rng.random_bool(0.4) {
                let mut second = rng.random_range(0..above - 1);
                if second >= first {
                    second += 1;
                }
                edges.push((format!("{}{second}", prefix[rank + 1]), format!("{}{i}", prefix[rank])));
            }
        }
    }
    Topology::from_parts(specs, edges, None).unwrap()
}

/// Random demand for `category` over the stations of `topology`; some
/// stations stay silent.
pub fn random_demand(rng: &mut impl Rng, topology: &Topology, category: Category, steps: usize) -> DemandSet {
    let mut demand = DemandSet::new(steps);
    for bs in topology.base_stations() {
        if rng.random_bool(0.2) {
            continue;
        }
        let values = (0..steps)
            .map(|_| *[0.0, 0.5, 1.0, 4.0, 10.0].choose(rng).unwrap())
            .collect();
        demand.insert(DemandSeries {
            bs_id: topology.name(bs).to_string(),
            category,
            values,
        });
    }
    demand
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
