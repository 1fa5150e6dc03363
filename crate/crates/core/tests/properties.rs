mod common;

use std::collections::BTreeMap;

use mecplan::planner::{load_score, serve_vectors};
use mecplan::trace::{aggregate, enrich, fit_cost_model, generate_synthetic_trace, SyntheticConfig, TaggingRules};
use mecplan::{
    deployment_latency, efficiency, greedy_design, level_breakdown, Category, CostModel, CostModels, DemandRecord,
    DemandSeries, DemandSet, LatencyModel, Level, NodeId, PlannerConfig, ScoreKind, Topology, TraceMode,
};
use proptest::prelude::*;

use common::{random_layered, rng, synthetic, Instance};

fn series(category: Category, values: Vec<f64>) -> DemandSeries {
    DemandSeries {
        bs_id: "bs".into(),
        category,
        values,
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

fn modeled() -> impl Strategy<Value = Category> {
    prop::sample::select(Category::MODELED.to_vec())
}

fn load_vec(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..1e4f64, len)
}

fn serve_map(nodes: usize, steps: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(load_vec(steps), 1..=nodes)
}

fn as_serve(nodes: &[Vec<f64>]) -> BTreeMap<Category, BTreeMap<NodeId, Vec<f64>>> {
    let map = nodes
        .iter()
        .enumerate()
        .map(|(i, v)| (NodeId(i as u32), v.clone()))
        .collect();
    BTreeMap::from([(Category::Video, map)])
}

fn unit_tau() -> BTreeMap<Category, f64> {
    BTreeMap::from([(Category::Video, 1.0)])
}

proptest! {
    #[test]
    fn enrichment_is_linear(category in modeled(), x in load_vec(8), y in load_vec(8), a in 0.0..10.0f64, b in 0.0..10.0f64) {
        let models = CostModels::default();
        let combined: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
        let ex = enrich(&series(category, x), &models, TraceMode::Enriched).unwrap().ticks;
        let ey = enrich(&series(category, y), &models, TraceMode::Enriched).unwrap().ticks;
        let ec = enrich(&series(category, combined), &models, TraceMode::Enriched).unwrap().ticks;
        for i in 0..8 {
            prop_assert!(close(ec[i], a * ex[i] + b * ey[i]));
        }
    }

    #[test]
    fn aggregation_conserves_bytes(records in prop::collection::vec((0i64..86_400 * 3, 0usize..5, 0usize..6, 0u64..5_000_000_000), 1..200)) {
        let apps = ["YouTube", "Clash of Clans", "Google Maps", "WhatsApp", "netflix", "Waze"];
        let records: Vec<DemandRecord> = records
            .into_iter()
            .map(|(timestamp, bs, app, bytes_down)| DemandRecord {
                timestamp,
                bs_id: format!("bs{bs}"),
                app_name: apps[app].into(),
                bytes_down,
            })
            .collect();
        let bytes: u128 = records.iter().map(|r| u128::from(r.bytes_down)).sum();
        let demand = aggregate(&records, &TaggingRules::default(), 3600).unwrap().demand;
        prop_assert!(close(demand.total_megabytes(), bytes as f64 / 1e6));
    }

    #[test]
    fn fit_recovers_noiseless_lines(slope in -500.0..500.0f64, intercept in -2000.0..2000.0f64, xs in prop::collection::btree_set(0u32..10_000, 3..40)) {
        let samples: Vec<(f64, f64)> = xs.iter().map(|&x| (f64::from(x) / 10.0, slope * f64::from(x) / 10.0 + intercept)).collect();
        prop_assume!(samples.iter().any(|s| s.1 != 0.0));
        let model = fit_cost_model(&samples, Category::Video).unwrap();
        prop_assert!((model.slope - slope).abs() < 1e-6 * slope.abs().max(1.0));
        prop_assert!((model.intercept - intercept).abs() < 1e-5 * intercept.abs().max(1.0));
    }

    #[test]
    fn load_score_is_non_negative(a in load_vec(12), b in load_vec(12), tau in 0.0..200.0f64) {
        prop_assert!(load_score(&a, &b, tau) >= 0.0);
    }

    #[test]
    fn efficiency_is_bounded_and_scale_invariant(nodes in serve_map(6, 10), scale in 1e-3..1e3f64) {
        let eta = efficiency(&as_serve(&nodes), &unit_tau()).unwrap().eta;
        prop_assert!((0.0..=1.0 + 1e-12).contains(&eta));
        let scaled: Vec<Vec<f64>> = nodes.iter().map(|v| v.iter().map(|x| x * scale).collect()).collect();
        let eta_scaled = efficiency(&as_serve(&scaled), &unit_tau()).unwrap().eta;
        prop_assert!(close(eta, eta_scaled));
    }

    #[test]
    fn merging_never_lowers_efficiency(nodes in serve_map(6, 10), i in 0usize..6, j in 0usize..6) {
        prop_assume!(nodes.len() >= 2);
        let (i, j) = (i % nodes.len(), j % nodes.len());
        prop_assume!(i != j);
        let before = efficiency(&as_serve(&nodes), &unit_tau()).unwrap().eta;
        let mut merged = nodes.clone();
        let moved = merged[j].clone();
        for (acc, v) in merged[i].iter_mut().zip(&moved) {
            *acc += v;
        }
        merged.remove(j);
        let after = efficiency(&as_serve(&merged), &unit_tau()).unwrap().eta;
        prop_assert!(after >= before - 1e-12);
    }

    #[test]
    fn fat_tree_invariants(points in prop::collection::vec((0.0..5000.0f64, 0.0..5000.0f64), 1..260)) {
        let positions: Vec<(String, f64, f64)> = points.iter().enumerate().map(|(i, &(x, y))| (format!("b{i}"), x, y)).collect();
        let topo = Topology::build_fat_tree(&positions).unwrap();
        let b = positions.len();
        let rings = b.div_ceil(10);
        let pods = rings.div_ceil(10);
        prop_assert_eq!(topo.count_at(Level::BaseStation), b);
        prop_assert_eq!(topo.count_at(Level::Ring), rings);
        prop_assert_eq!(topo.count_at(Level::Aggregation), pods);
        prop_assert_eq!(topo.count_at(Level::Core), pods.div_ceil(10));
        for node in topo.nodes() {
            let parents = topo.parents(node.id);
            if node.level == Level::Core {
                prop_assert!(parents.is_empty());
            } else {
                prop_assert!(!parents.is_empty() && parents.len() <= 2);
                prop_assert!(topo.ancestors(node.id).iter().any(|&a| topo.level(a) == Level::Core));
            }
            if node.level != Level::BaseStation {
                prop_assert!(!topo.children(node.id).is_empty());
            }
        }
    }

    #[test]
    fn greedy_runs_match_full_recomputation(seed in 0u64..1_000, l_max in prop::sample::select(vec![5.0, 7.3, 9.6, 11.9, f64::INFINITY]), load in any::<bool>()) {
        let mut r = rng(seed);
        let topology = random_layered(&mut r, 25);
        let demand = common::random_demand(&mut r, &topology, Category::Gaming, 6);
        let score = if load { ScoreKind::LoadBased } else { ScoreKind::LocationBased };
        let config = PlannerConfig { score, ..PlannerConfig::with_l_max(l_max) };
        let models = CostModels::default();
        let run = greedy_design(&topology, &demand, Category::Gaming, config, &models).unwrap();
        let last = run.final_iteration();

        let latency = deployment_latency(&topology, &run.deployment, &LatencyModel::default());
        prop_assert_eq!(last.latency_max_ms, latency.max_ms);
        prop_assert!(close(last.latency_mean_ms, latency.mean_ms));

        let levels = level_breakdown(&topology, &run.deployment, &demand);
        prop_assert_eq!(last.servers, levels.servers);
        for (logged, mb) in last.traffic.iter().zip(levels.traffic) {
            prop_assert!(close(*logged, 161.38 * mb));
        }
        let total: f64 = levels.shares().iter().sum();
        prop_assert!(levels.total_servers() == 0 || close(total, 1.0));

        let serve = BTreeMap::from([(Category::Gaming, serve_vectors(&topology, &run.deployment, &demand))]);
        let eta = efficiency(&serve, &BTreeMap::from([(Category::Gaming, 161.38)])).unwrap().eta;
        prop_assert!(close(last.efficiency, eta));
    }

    #[test]
    fn load_argmax_survives_power_of_two_scaling(seed in 0u64..1_000, exp in -8i32..8) {
        let mut r = rng(seed);
        let topology = random_layered(&mut r, 25);
        let demand = common::random_demand(&mut r, &topology, Category::Video, 6);
        let models = CostModels::default();
        let base = greedy_design(&topology, &demand, Category::Video, PlannerConfig::default(), &models).unwrap();
        let scaled = greedy_design(&topology, &demand.scaled(2f64.powi(exp)), Category::Video, PlannerConfig::default(), &models).unwrap();
        prop_assert_eq!(base.merges, scaled.merges);
        prop_assert_eq!(base.deployment, scaled.deployment);
    }

    #[test]
    fn raw_mode_equals_unit_rate_enrichment(seed in 0u64..1_000, load in any::<bool>()) {
        let mut r = rng(seed);
        let topology = random_layered(&mut r, 25);
        let demand = common::random_demand(&mut r, &topology, Category::Maps, 6);
        let score = if load { ScoreKind::LoadBased } else { ScoreKind::LocationBased };
        let unit = CostModels::from_models([CostModel { category: Category::Maps, slope: 1.0, intercept: 0.0, nrmse: 0.0 }]);
        let enriched = PlannerConfig { score, ..PlannerConfig::with_l_max(9.6) };
        let raw = PlannerConfig { mode: TraceMode::Raw, ..enriched };
        let a = greedy_design(&topology, &demand, Category::Maps, enriched, &unit).unwrap();
        let b = greedy_design(&topology, &demand, Category::Maps, raw, &unit).unwrap();
        prop_assert_eq!(a.merges, b.merges);
        prop_assert_eq!(a.iterations, b.iterations);
    }
}

#[test]
fn synthetic_shares_within_two_points() {
    let config = SyntheticConfig {
        base_stations: 300,
        days: 7,
        ..Default::default()
    };
    let records = generate_synthetic_trace(&config, 11).unwrap();
    let demand: DemandSet = aggregate(&records, &TaggingRules::default(), 3600).unwrap().demand;
    let total = demand.total_megabytes();
    let target: f64 = config.shares.values().sum();
    for (category, share) in &config.shares {
        let got = demand.category_megabytes(*category) / total;
        let want = share / target;
        assert!((got - want).abs() <= 0.02, "{category}: {got:.4} vs {want:.4}");
    }
}

#[test]
fn unlimited_run_on_1000_stations_ends_at_one_core() {
    let Instance { topology, demand } = synthetic(1000, 1, 5);
    let models = CostModels::default();
    for score in [ScoreKind::LoadBased, ScoreKind::LocationBased] {
        let config = PlannerConfig {
            score,
            ..PlannerConfig::default()
        };
        let run = greedy_design(&topology, &demand, Category::Video, config, &models).unwrap();
        assert_eq!(run.final_servers(), 1);
        let server = run.deployment.servers().next().unwrap();
        assert_eq!(topology.level(server), Level::Core);
        let shares = level_breakdown(&topology, &run.deployment, &demand).shares();
        assert_eq!(shares, [0.0, 0.0, 0.0, 1.0]);
    }
}
