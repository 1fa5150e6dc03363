use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mecplan::oracle::{gap_report, solve_optimal, MAX_NODES};
use mecplan::planner::{tick_tau, Deployment, DeploymentExport};
use mecplan::topology::write_positions_csv;
use mecplan::trace::{
    aggregate, read_trace_csv, ticks_by_category, write_enriched_csv, write_trace_csv, SyntheticConfig, TaggingRules,
};
use mecplan::{
    deployment_latency, efficiency, greedy_design, level_breakdown, planner::serve_vectors, Category, CostModels,
    LatencyModel, PlannerConfig, Topology, TraceMode,
};
use mecplan_cli::config::OUT_DIR_ENV;
use mecplan_cli::output::{write_atomic, write_json, write_plan, write_topology};
use mecplan_cli::pipeline::{self, load_inputs, planned_categories, PerLevel, PlanSettings};
use mecplan_cli::{validate_config, CliError, ExperimentConfig, Planning, TraceSource};
use serde::Serialize;

#[derive(Parser)]
#[command(
    name = "mecplan",
    version,
    about = "Plan MEC server placement from mobile traffic traces"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for synthetic traces; overrides the config
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides the config and MECPLAN_OUT
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_parser = ["location", "load"])]
    score: Option<String>,
    #[arg(long, global = true, value_parser = ["enriched", "raw"])]
    mode: Option<String>,
    /// Plan every category together on its tick-weighted load
    #[arg(long, global = true)]
    pooled: bool,
    /// Plan Other traffic at one tick per megabyte
    #[arg(long, global = true)]
    include_other_raw: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic trace and base-station positions
    Synth {
        #[arg(long)]
        base_stations: Option<usize>,
        #[arg(long)]
        days: Option<u32>,
    },
    /// Write the per-step CPU-tick trace
    Enrich,
    /// Plan one mode and write iteration logs, deployments and the combined plan
    Plan,
    /// Evaluate an exported deployment against a trace
    Metrics {
        #[arg(long)]
        topology: PathBuf,
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        deployment: PathBuf,
        #[arg(long, default_value_t = 3600)]
        step_seconds: u64,
        /// JSON cost models; built-in constants when absent
        #[arg(long)]
        cost_models: Option<PathBuf>,
    },
    /// Exact minimum server count versus the greedy plan on a small instance
    Oracle {
        #[arg(long)]
        category: Option<Category>,
    },
    /// Full pipeline with summary.json
    Run {
        /// Plan in both enriched and raw mode and report the difference
        #[arg(long)]
        compare: bool,
    },
    /// Trade-off table over planning scope, score and mode
    Compare,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("mecplan: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}

fn load_config(common: &Common) -> Result<ExperimentConfig, CliError> {
    let path = common
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config is required for this command".into()))?;
    let mut config = validate_config(path)?;
    apply_overrides(&mut config, common)?;
    Ok(config)
}

fn apply_overrides(config: &mut ExperimentConfig, common: &Common) -> Result<(), CliError> {
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(out) = &common.out {
        config.output_dir = out.clone();
    }
    if let Some(score) = &common.score {
        config.score = score.parse().map_err(CliError::Config)?;
    }
    if let Some(mode) = &common.mode {
        config.mode = mode.parse().map_err(CliError::Config)?;
    }
    if common.pooled {
        config.planning = Planning::Pooled;
    }
    config.include_other_raw |= common.include_other_raw;
    Ok(())
}

fn print_json<T: Serialize>(value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn dispatch(cli: Cli) -> Result<ExitCode, CliError> {
    let common = &cli.common;
    match cli.command {
        Command::Synth { base_stations, days } => synth(common, base_stations, days),
        Command::Enrich => enrich(common),
        Command::Plan => {
            let config = load_config(common)?;
            let inputs = load_inputs(&config)?;
            let outcome = pipeline::plan(&inputs, &config, PlanSettings::from_config(&config))?;
            write_plan(&config.output_dir, &inputs.topology, &outcome)?;
            write_topology(&config.output_dir.join("topology.json"), &inputs.topology)?;
            print_json(&pipeline::summarize(&inputs, &outcome)?.combined)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Metrics {
            topology,
            trace,
            deployment,
            step_seconds,
            cost_models,
        } => metrics(&topology, &trace, &deployment, step_seconds, cost_models.as_deref()),
        Command::Oracle { category } => oracle(common, category),
        Command::Run { compare } => run(common, compare),
        Command::Compare => compare(common),
    }
}

fn synth(common: &Common, base_stations: Option<usize>, days: Option<u32>) -> Result<ExitCode, CliError> {
    let mut config = match &common.config {
        Some(_) => load_config(common)?,
        None => {
            let mut config = ExperimentConfig {
                trace: TraceSource {
                    synthetic: Some(SyntheticConfig::default()),
                    ..Default::default()
                },
                ..Default::default()
            };
            if let Some(dir) = std::env::var_os(OUT_DIR_ENV) {
                config.output_dir = PathBuf::from(dir);
            }
            apply_overrides(&mut config, common)?;
            config
        }
    };
    let synthetic = config
        .trace
        .synthetic
        .as_mut()
        .ok_or_else(|| CliError::Config("synth needs a [trace.synthetic] section".into()))?;
    if let Some(n) = base_stations {
        synthetic.base_stations = n;
    }
    if let Some(d) = days {
        synthetic.days = d;
    }
    config.validate()?;
    let inputs = load_inputs(&config)?;
    let records = inputs.records.as_deref().unwrap_or_default();
    let dir = &config.output_dir;
    write_atomic(&dir.join("trace.csv"), |w| {
        write_trace_csv(records, w).map_err(|e| e.to_string())
    })?;
    write_atomic(&dir.join("positions.csv"), |w| {
        write_positions_csv(&inputs.positions, w).map_err(|e| e.to_string())
    })?;
    println!(
        "wrote {} records for {} base stations to {}",
        records.len(),
        inputs.positions.len(),
        dir.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn enrich(common: &Common) -> Result<ExitCode, CliError> {
    let config = load_config(common)?;
    let inputs = load_inputs(&config)?;
    let path = config.output_dir.join("enriched.csv");
    write_atomic(&path, |w| {
        write_enriched_csv(&inputs.demand, &inputs.models, config.mode, w).map_err(|e| e.to_string())
    })?;
    let ticks = ticks_by_category(&inputs.demand, &inputs.models, config.mode);
    print_json(&ticks)?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct MetricsReport {
    category: Category,
    servers: PerLevel<usize>,
    traffic_share: PerLevel<f64>,
    latency_max_ms: f64,
    latency_mean_ms: f64,
    efficiency: f64,
}

fn metrics(
    topology_path: &Path,
    trace_path: &Path,
    deployment_path: &Path,
    step_seconds: u64,
    cost_models: Option<&Path>,
) -> Result<ExitCode, CliError> {
    let open = |p: &Path| File::open(p).map(BufReader::new).map_err(|e| CliError::io(p, e));
    let topology = Topology::from_json_reader(open(topology_path)?).map_err(|e| CliError::io(topology_path, e))?;
    let export =
        DeploymentExport::from_json_reader(open(deployment_path)?).map_err(|e| CliError::io(deployment_path, e))?;
    let deployment = Deployment::from_export(&topology, &export).map_err(|e| CliError::Config(e.to_string()))?;
    let ingest = read_trace_csv(open(trace_path)?).map_err(|e| CliError::io(trace_path, e))?;
    let demand = aggregate(&ingest.records, &TaggingRules::default(), step_seconds)
        .map_err(|e| CliError::Config(e.to_string()))?
        .demand;
    let models = match cost_models {
        Some(p) => CostModels::load(p).map_err(|e| CliError::io(p, e))?,
        None => CostModels::default(),
    };
    let category = export.category;
    let latency = deployment_latency(&topology, &deployment, &LatencyModel::default());
    let levels = level_breakdown(&topology, &deployment, &demand);
    let serve = BTreeMap::from([(category, serve_vectors(&topology, &deployment, &demand))]);
    let eta = efficiency(&serve, &BTreeMap::from([(category, tick_tau(&models, category))]))
        .map_err(|e| CliError::Config(e.to_string()))?
        .eta;
    print_json(&MetricsReport {
        category,
        servers: levels.servers.into(),
        traffic_share: levels.shares().into(),
        latency_max_ms: latency.max_ms,
        latency_mean_ms: latency.mean_ms,
        efficiency: eta,
    })?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct OracleReport {
    l_max_ms: Option<f64>,
    min_servers: usize,
    feasible: bool,
    greedy_servers: usize,
    /// `null` when the ratio is infinite.
    gap_vs_greedy: Option<f64>,
}

fn oracle(common: &Common, only: Option<Category>) -> Result<ExitCode, CliError> {
    let config = load_config(common)?;
    let inputs = load_inputs(&config)?;
    if inputs.topology.len() > MAX_NODES {
        return Err(CliError::Config(format!(
            "oracle instances are limited to {MAX_NODES} nodes; this topology has {}",
            inputs.topology.len()
        )));
    }
    let mut models = inputs.models.clone();
    if config.include_other_raw {
        models = CostModels::from_models(models.iter().copied().chain([mecplan::CostModel {
            category: Category::Other,
            slope: 1.0,
            intercept: 0.0,
            nrmse: 0.0,
        }]));
    }
    let categories: Vec<Category> = match only {
        Some(c) => vec![c],
        None => planned_categories(&inputs.demand, config.include_other_raw),
    };
    let mut reports = BTreeMap::new();
    for category in categories {
        let l_max = config.l_max.get(category);
        let planner = PlannerConfig {
            score: config.score,
            mode: config.mode,
            exhaustive_pairs: config.exhaustive_pairs,
            ..PlannerConfig::with_l_max(l_max)
        };
        let run = greedy_design(&inputs.topology, &inputs.demand, category, planner, &models)
            .map_err(|e| CliError::Config(e.to_string()))?;
        let solution = solve_optimal(
            &inputs.topology,
            &inputs.demand,
            category,
            l_max,
            &LatencyModel::default(),
        )
        .map_err(|e| CliError::Config(e.to_string()))?;
        let gap = gap_report(&run, &solution).map_err(|e| CliError::Config(e.to_string()))?;
        reports.insert(
            category,
            OracleReport {
                l_max_ms: l_max.is_finite().then_some(l_max),
                min_servers: solution.min_servers,
                feasible: solution.feasible,
                greedy_servers: run.final_servers(),
                gap_vs_greedy: gap.is_finite().then_some(gap),
            },
        );
    }
    let infeasible = reports.values().any(|r| !r.feasible);
    match only {
        Some(c) => print_json(&reports[&c])?,
        None => print_json(&reports)?,
    }
    Ok(if infeasible {
        ExitCode::from(4)
    } else {
        ExitCode::SUCCESS
    })
}

fn run(common: &Common, compare: bool) -> Result<ExitCode, CliError> {
    let config = load_config(common)?;
    let inputs = load_inputs(&config)?;
    let out = &config.output_dir;
    write_topology(&out.join("topology.json"), &inputs.topology)?;
    let base = PlanSettings::from_config(&config);
    let modes = if compare {
        vec![TraceMode::Enriched, TraceMode::Raw]
    } else {
        vec![config.mode]
    };
    let mut summaries = Vec::new();
    for mode in modes {
        let outcome = pipeline::plan(&inputs, &config, PlanSettings { mode, ..base })?;
        let dir = if compare {
            out.join(mode.to_string())
        } else {
            out.clone()
        };
        write_plan(&dir, &inputs.topology, &outcome)?;
        summaries.push(pipeline::summarize(&inputs, &outcome)?);
    }
    let summary = pipeline::summary(&config, &inputs, summaries);
    write_json(&out.join("summary.json"), &summary)?;
    for (mode, s) in &summary.modes {
        println!(
            "{mode}: eta {:.4}, latency max {:.1} ms mean {:.2} ms, {} server nodes",
            s.combined.efficiency, s.combined.latency_max_ms, s.combined.latency_mean_ms, s.combined.server_nodes
        );
    }
    if let Some(delta) = &summary.delta_enriched_minus_raw {
        println!(
            "enriched - raw: eta {:+.4}, mean latency {:+.2} ms",
            delta.efficiency, delta.latency_mean_ms
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn compare(common: &Common) -> Result<ExitCode, CliError> {
    let config = load_config(common)?;
    let inputs = load_inputs(&config)?;
    let rows = pipeline::compare(&inputs, &config, PlanSettings::from_config(&config))?;
    let path = config.output_dir.join("compare.csv");
    write_atomic(&path, |w| {
        writeln!(
            w,
            "planning,score,mode,efficiency,latency_max_ms,latency_mean_ms,server_nodes"
        )
        .map_err(|e| e.to_string())?;
        for r in &rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                r.planning, r.score, r.mode, r.efficiency, r.latency_max_ms, r.latency_mean_ms, r.server_nodes
            )
            .map_err(|e| e.to_string())?;
        }
        Ok(())
    })?;
    println!(
        "{:<13} {:<9} {:<9} {:>8} {:>8} {:>9} {:>8}",
        "planning", "score", "mode", "eta", "max ms", "mean ms", "servers"
    );
    for r in &rows {
        println!(
            "{:<13} {:<9} {:<9} {:>8.4} {:>8.1} {:>9.3} {:>8}",
            r.planning.to_string(),
            r.score.to_string(),
            r.mode.to_string(),
            r.efficiency,
            r.latency_max_ms,
            r.latency_mean_ms,
            r.server_nodes
        );
    }
    Ok(ExitCode::SUCCESS)
}
