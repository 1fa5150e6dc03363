use std::collections::BTreeMap;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use mecplan::planner::{write_run_log, DeploymentExport, Termination};
use mecplan::{Category, EfficiencyReport, Level, ScoreKind, Topology, TraceMode};
use serde::Serialize;
use tempfile::NamedTempFile;

use crate::config::Planning;
use crate::pipeline::PlanOutcome;
use crate::CliError;

/// Writes `path` through a temporary file in the same directory, renamed
/// into place once `fill` succeeds.
pub fn write_atomic<F>(path: &Path, fill: F) -> Result<(), CliError>
where
    F: FnOnce(&mut dyn Write) -> Result<(), String>,
{
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let tmp = NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    {
        let mut writer = BufWriter::new(tmp.as_file());
        fill(&mut writer).map_err(|e| CliError::io(path, e))?;
        writer.flush().map_err(|e| CliError::io(path, e))?;
    }
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value).map_err(|e| e.to_string())?;
        w.write_all(b"\n").map_err(|e| e.to_string())
    })
}

pub fn iterations_path(dir: &Path, category: Category) -> PathBuf {
    dir.join(format!("iterations_{category}.csv"))
}

pub fn deployment_path(dir: &Path, category: Category) -> PathBuf {
    dir.join(format!("deployment_{category}.json"))
}

#[derive(Serialize)]
struct NodeExport<'a> {
    node: &'a str,
    level: Level,
    capacity_ticks: f64,
    categories: Vec<Category>,
}

#[derive(Serialize)]
struct RunExport {
    l_max_ms: Option<f64>,
    tau: f64,
    iterations: usize,
    termination: Termination,
    final_servers: usize,
    deployment: DeploymentExport,
}

#[derive(Serialize)]
struct PlanExport<'a> {
    mode: TraceMode,
    score: ScoreKind,
    planning: Planning,
    efficiency: EfficiencyReport,
    nodes: Vec<NodeExport<'a>>,
    categories: BTreeMap<Category, RunExport>,
}

/// Iteration CSVs, per-category deployments and the combined plan.
pub fn write_plan(dir: &Path, topology: &Topology, outcome: &PlanOutcome) -> Result<(), CliError> {
    for (category, log) in outcome.logs() {
        write_atomic(&iterations_path(dir, category), |w| {
            write_run_log(log, w).map_err(|e| e.to_string())
        })?;
    }
    let plan = &outcome.plan;
    let mut categories = BTreeMap::new();
    for (&category, run) in &plan.runs {
        let export = run.deployment.to_export(topology);
        write_json(&deployment_path(dir, category), &export)?;
        categories.insert(
            category,
            RunExport {
                l_max_ms: run.l_max_ms.is_finite().then_some(run.l_max_ms),
                tau: run.tau,
                iterations: run.iterations.len() - 1,
                termination: run.termination,
                final_servers: run.final_servers(),
                deployment: export,
            },
        );
    }
    let nodes = plan
        .capacity
        .iter()
        .map(|(&node, &capacity_ticks)| NodeExport {
            node: topology.name(node),
            level: topology.level(node),
            capacity_ticks,
            categories: plan
                .runs
                .iter()
                .filter(|(_, run)| run.deployment.is_server(node))
                .map(|(&c, _)| c)
                .collect(),
        })
        .collect();
    let export = PlanExport {
        mode: outcome.settings.mode,
        score: outcome.settings.score,
        planning: outcome.settings.planning,
        efficiency: plan.efficiency,
        nodes,
        categories,
    };
    write_json(&dir.join("plan.json"), &export)
}

pub fn write_topology(path: &Path, topology: &Topology) -> Result<(), CliError> {
    write_atomic(path, |w| topology.to_json_writer(w).map_err(|e| e.to_string()))
}
