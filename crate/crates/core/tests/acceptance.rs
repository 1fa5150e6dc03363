//! Acceptance criteria. Runs without the libtest harness and prints one
//! PASS/FAIL line per criterion; exits non-zero if any fails.

mod common;

use std::collections::BTreeMap;
use std::time::Instant;

use mecplan::oracle::{gap_report, solve_optimal};
use mecplan::planner::{check_run_log, read_run_log, Termination};
use mecplan::trace::{enrich, ticks_by_category};
use mecplan::{
    efficiency, greedy_design, pooled_plan, Category, CostModel, CostModels, DemandSeries, LatencyModel, Level, NodeId,
    PlannerConfig, ScoreKind, TraceMode,
};
use rand::Rng;

use common::{random_demand, random_layered, rng, synthetic, Instance};

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn cost_constants() -> Outcome {
    let models = CostModels::default();
    let expected = [
        (Category::Video, 0.25),
        (Category::Gaming, 161.38),
        (Category::Maps, 67.44),
    ];
    for (category, slope) in expected {
        let one_mb = DemandSeries {
            bs_id: "bs".into(),
            category,
            values: vec![1.0],
        };
        let ticks = enrich(&one_mb, &models, TraceMode::Enriched)
            .map_err(|e| e.to_string())?
            .ticks[0];
        ensure(ticks == slope, || {
            format!("{category}: 1 MB -> {ticks} ticks, expected {slope}")
        })?;
    }
    ensure(
        CostModel::VIDEO.intercept == 6.76 && CostModel::GAMING.intercept == 1675.03,
        || "stored intercepts differ".into(),
    )?;
    ensure(CostModel::MAPS.intercept == -7.53, || "maps intercept differs".into())?;
    Ok("0.25 / 161.38 / 67.44 ticks per MB".into())
}

fn latency_model() -> Outcome {
    let model = LatencyModel::default();
    let expected = [5.0, 7.3, 9.6, 11.9];
    let mut got = Vec::new();
    for (hops, want) in expected.iter().enumerate() {
        let ms = model.bs_latency(hops as i32).map_err(|e| e.to_string())?;
        ensure((ms - want).abs() < 1e-12, || {
            format!("{hops} hops -> {ms} ms, expected {want}")
        })?;
        got.push(ms);
    }
    ensure((got[3] - 12.0).abs() <= 0.1 + 1e-12, || {
        format!("core latency {} ms not within 0.1 of 12", got[3])
    })?;
    let shown: Vec<String> = got.iter().map(|ms| format!("{ms:.1}")).collect();
    Ok(format!("hops 0-3 -> {} ms", shown.join(" / ")))
}

fn gaming_cap() -> Outcome {
    let models = CostModels::default();
    let mut r = rng(3);
    let mut checked = 0;
    for i in 0..100u64 {
        let stations = r.random_range(50..=1000);
        let Instance { topology, demand } = synthetic(stations, 1, 1000 + i);
        let score = if i % 2 == 0 {
            ScoreKind::LoadBased
        } else {
            ScoreKind::LocationBased
        };
        for exhaustive_pairs in [false, true] {
            let config = PlannerConfig {
                score,
                exhaustive_pairs,
                ..PlannerConfig::with_l_max(10.0)
            };
            let run =
                greedy_design(&topology, &demand, Category::Gaming, config, &models).map_err(|e| e.to_string())?;
            for (&bs, &server) in run.deployment.assignment() {
                ensure(topology.level(server) != Level::Core, || {
                    format!(
                        "instance {i} ({stations} BSs): {} served at core {}",
                        topology.name(bs),
                        topology.name(server)
                    )
                })?;
            }
            checked += 1;
        }
    }
    Ok(format!("{checked} runs on 100 topologies, no gaming station at a core"))
}

fn tick_share(calibration: &Instance) -> Outcome {
    let ticks = ticks_by_category(&calibration.demand, &CostModels::default(), TraceMode::Enriched);
    let total: f64 = Category::MODELED
        .iter()
        .map(|c| ticks.get(c).copied().unwrap_or(0.0))
        .sum();
    let share = ticks.get(&Category::Gaming).copied().unwrap_or(0.0) / total;
    ensure(share >= 0.87, || format!("gaming tick share {share:.4} below 0.87"))?;
    Ok(format!("gaming share of classified ticks {share:.4} (>= 0.87)"))
}

fn greedy_mechanics(calibration: &Instance) -> Outcome {
    let models = CostModels::default();
    let Instance { topology, demand } = calibration;
    let mut lengths = Vec::new();
    for (category, l_max) in [(Category::Video, f64::INFINITY), (Category::Gaming, 10.0)] {
        for score in [ScoreKind::LoadBased, ScoreKind::LocationBased] {
            let config = PlannerConfig {
                score,
                ..PlannerConfig::with_l_max(l_max)
            };
            let run = greedy_design(topology, demand, category, config, &models).map_err(|e| e.to_string())?;
            let active = demand.for_category(category).filter(|s| s.peak() > 0.0).count();
            ensure(run.iterations[0].total_servers() == active, || {
                format!(
                    "{category}: iteration 0 has {} servers for {active} active BSs",
                    run.iterations[0].total_servers()
                )
            })?;
            for pair in run.iterations.windows(2) {
                ensure(pair[1].total_servers() + 1 == pair[0].total_servers(), || {
                    format!(
                        "{category} {score}: iteration {} does not remove exactly one server",
                        pair[1].iter
                    )
                })?;
            }
            lengths.push(format!("{category}/{score} {}", run.iterations.len() - 1));
        }
    }
    Ok(format!("1000 BSs; iterations {}", lengths.join(", ")))
}

fn oracle_equivalence() -> Outcome {
    let models = CostModels::default();
    let latency = LatencyModel::default();
    let limits = [5.0, 7.3, 9.6, 11.9, f64::INFINITY];
    let mut r = rng(6);
    let mut gaps = Vec::new();
    for i in 0..200 {
        let topology = random_layered(&mut r, 20);
        let steps = r.random_range(1..=6);
        let demand = random_demand(&mut r, &topology, Category::Maps, steps);
        let l_max = limits[r.random_range(0..limits.len())];
        let score = if r.random_bool(0.5) {
            ScoreKind::LoadBased
        } else {
            ScoreKind::LocationBased
        };
        let config = PlannerConfig {
            score,
            ..PlannerConfig::with_l_max(l_max)
        };
        let run = greedy_design(&topology, &demand, Category::Maps, config, &models).map_err(|e| e.to_string())?;
        run.deployment
            .validate(&topology)
            .map_err(|e| format!("instance {i}: {e}"))?;
        for (&bs, &server) in run.deployment.assignment() {
            let hops = topology.hop_count(bs, server).map_err(|e| e.to_string())?;
            let ms = latency.access_ms + f64::from(hops) * latency.per_hop_ms;
            ensure(ms <= l_max, || {
                format!("instance {i}: {} at {ms} ms over {l_max}", topology.name(bs))
            })?;
        }
        let active = demand.for_category(Category::Maps).filter(|s| s.peak() > 0.0).count();
        ensure(run.deployment.assignment().len() == active, || {
            format!("instance {i}: unserved stations")
        })?;
        let oracle = solve_optimal(&topology, &demand, Category::Maps, l_max, &latency).map_err(|e| e.to_string())?;
        ensure(oracle.feasible, || format!("instance {i}: oracle infeasible"))?;
        let gap = gap_report(&run, &oracle).map_err(|e| e.to_string())?;
        ensure(gap >= 1.0, || format!("instance {i}: gap {gap} below 1"))?;
        gaps.push(gap);
    }
    gaps.sort_by(f64::total_cmp);
    let median = (gaps[99] + gaps[100]) / 2.0;
    let optimal = gaps.iter().filter(|&&g| g == 1.0).count();
    Ok(format!(
        "200 instances feasible, gap >= 1; median gap {median:.3}, max {:.3}, {optimal} optimal",
        gaps[199]
    ))
}

fn efficiency_cases() -> Outcome {
    let tau: BTreeMap<Category, f64> = BTreeMap::from([(Category::Video, 1.0)]);
    let eta = |nodes: Vec<Vec<f64>>| -> Result<f64, String> {
        let serve = BTreeMap::from([(
            Category::Video,
            nodes
                .into_iter()
                .enumerate()
                .map(|(i, v)| (NodeId(i as u32), v))
                .collect(),
        )]);
        efficiency(&serve, &tau).map(|r| r.eta).map_err(|e| e.to_string())
    };
    let constant = eta(vec![vec![7.0; 24]])?;
    let half = eta(vec![vec![10.0, 0.0]])?;
    let split = eta(vec![vec![10.0, 0.0], vec![0.0, 10.0]])?;
    let merged = eta(vec![vec![10.0, 10.0]])?;
    for (name, got, want) in [
        ("constant", constant, 1.0),
        ("(10,0)", half, 0.5),
        ("split", split, 0.5),
        ("merged", merged, 1.0),
    ] {
        ensure((got - want).abs() <= 1e-9, || {
            format!("{name}: eta {got}, expected {want}")
        })?;
    }
    Ok(format!(
        "constant {constant}, (10,0) {half}, anti-correlated {split} -> {merged}"
    ))
}

fn directional(calibration: &Instance) -> Outcome {
    let models = CostModels::default();
    let Instance { topology, demand } = calibration;
    let categories = [Category::Video, Category::Gaming, Category::Maps];
    let plan = |score, mode| {
        let config = PlannerConfig {
            score,
            mode,
            exhaustive_pairs: true,
            ..PlannerConfig::with_l_max(10.0)
        };
        pooled_plan(topology, demand, &categories, config, &models).map_err(|e| e.to_string())
    };
    let location = plan(ScoreKind::LocationBased, TraceMode::Enriched)?;
    let load = plan(ScoreKind::LoadBased, TraceMode::Enriched)?;
    let raw = plan(ScoreKind::LoadBased, TraceMode::Raw)?;

    let (eta_loc, eta_load, eta_raw) = (location.efficiency.eta, load.efficiency.eta, raw.efficiency.eta);
    let loc_log = &location.runs[&Category::Video].iterations;
    let load_log = &load.runs[&Category::Video].iterations;
    let common = loc_log.len().min(load_log.len());
    let mean_latency =
        |log: &[mecplan::IterationLog]| log[..common].iter().map(|i| i.latency_mean_ms).sum::<f64>() / common as f64;
    let (lat_loc, lat_load) = (mean_latency(loc_log), mean_latency(load_log));

    let mut failures = Vec::new();
    if eta_load < eta_loc {
        failures.push(format!("(a) load eta {eta_load:.4} < location eta {eta_loc:.4}"));
    }
    if lat_loc > lat_load {
        failures.push(format!(
            "(b) location latency {lat_loc:.3} ms > load latency {lat_load:.3} ms"
        ));
    }
    if eta_load < eta_raw {
        failures.push(format!("(c) enriched eta {eta_load:.4} < raw eta {eta_raw:.4}"));
    }
    let detail = format!(
        "(a) eta load {eta_load:.4} >= location {eta_loc:.4}; (b) mean latency location {lat_loc:.3} <= load \
         {lat_load:.3} ms over {common} iterations; (c) eta enriched {eta_load:.4} >= raw {eta_raw:.4}"
    );
    if failures.is_empty() {
        Ok(detail)
    } else {
        Err(failures.join("; "))
    }
}

fn monotone_latency() -> Outcome {
    let models = CostModels::default();
    let limits = [5.0, 7.3, 9.6, 10.0, 11.9, 50.0, f64::INFINITY];
    let mut r = rng(9);
    let mut stopped = 0;
    for i in 0..50u64 {
        let stations = r.random_range(20..=300);
        let Instance { topology, demand } = synthetic(stations, 1, 500 + i);
        let category = Category::MODELED[r.random_range(0..3)];
        let l_max = limits[r.random_range(0..limits.len())];
        let score = if r.random_bool(0.5) {
            ScoreKind::LoadBased
        } else {
            ScoreKind::LocationBased
        };
        let config = PlannerConfig {
            score,
            exhaustive_pairs: r.random_bool(0.5),
            ..PlannerConfig::with_l_max(l_max)
        };
        let run = greedy_design(&topology, &demand, category, config, &models).map_err(|e| e.to_string())?;
        let mut csv = Vec::new();
        run.write_log_csv(&mut csv).map_err(|e| e.to_string())?;
        let log = read_run_log(csv.as_slice()).map_err(|e| e.to_string())?;
        for pair in log.windows(2) {
            ensure(pair[1].latency_max_ms >= pair[0].latency_max_ms, || {
                format!("run {i}: max latency drops at iteration {}", pair[1].iter)
            })?;
        }
        check_run_log(&log, l_max).map_err(|e| format!("run {i}: {e}"))?;
        if run.termination == Termination::LatencyLimit {
            stopped += 1;
        }
    }
    Ok(format!(
        "50 run logs non-decreasing ({stopped} stopped at the latency limit)"
    ))
}

fn main() {
    let started = Instant::now();
    let calibration = synthetic(1000, 7, 42);
    let criteria: Vec<Criterion> = vec![
        ("cost-model constants", Box::new(cost_constants)),
        ("latency model", Box::new(latency_model)),
        ("gaming latency cap", Box::new(gaming_cap)),
        ("tick share", Box::new(|| tick_share(&calibration))),
        ("greedy mechanics", Box::new(|| greedy_mechanics(&calibration))),
        ("oracle equivalence", Box::new(oracle_equivalence)),
        ("efficiency cases", Box::new(efficiency_cases)),
        ("directional findings", Box::new(|| directional(&calibration))),
        ("monotone latency", Box::new(monotone_latency)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = check();
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} [{secs:.1}s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail} [{secs:.1}s]", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed in {:.1}s",
        criteria.len() - failed,
        started.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
