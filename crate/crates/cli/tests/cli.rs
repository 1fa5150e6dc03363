use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mecplan::planner::{check_run_log, read_run_log};
use mecplan_cli::{validate_config, Planning};
use serde_json::Value;
use tempfile::TempDir;

fn mecplan(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mecplan"))
        .args(args)
        .current_dir(dir)
        .env_remove("MECPLAN_OUT")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

fn synthetic_config(stations: usize, days: u32) -> String {
    format!("seed = 7\n[trace.synthetic]\nbase_stations = {stations}\ndays = {days}\n")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn full_run_writes_logs_and_summary() {
    let tmp = TempDir::new().unwrap();
    write_config(tmp.path(), "exp.toml", &synthetic_config(1000, 7));
    let out = mecplan(tmp.path(), &["--config", "exp.toml", "run"]);
    assert!(out.status.success(), "{}", stderr(&out));

    let dir = tmp.path().join("out");
    for category in ["video", "gaming", "maps", "other"] {
        let log = read_run_log(fs::File::open(dir.join(format!("iterations_{category}.csv"))).unwrap()).unwrap();
        assert!(!log.is_empty());
        let l_max = if category == "gaming" { 10.0 } else { 50.0 };
        check_run_log(&log, l_max).unwrap();
    }
    assert!(dir.join("plan.json").exists() && dir.join("topology.json").exists());

    let summary = json(&dir.join("summary.json"));
    let enriched = &summary["modes"]["enriched"];
    assert_eq!(enriched["score"], "load");
    assert_eq!(enriched["categories"]["other"]["planned"], false);
    assert_eq!(enriched["categories"]["gaming"]["l_max_ms"], 10.0);
    assert_eq!(enriched["categories"]["gaming"]["servers"]["core"], 0);
    let eta = enriched["combined"]["efficiency"].as_f64().unwrap();
    assert!(eta > 0.0 && eta <= 1.0);
    assert!(summary["delta_enriched_minus_raw"].is_null());
}

#[test]
fn same_seed_gives_identical_logs() {
    let tmp = TempDir::new().unwrap();
    write_config(tmp.path(), "exp.toml", &synthetic_config(150, 2));
    for out_dir in ["a", "b"] {
        let out = mecplan(tmp.path(), &["--config", "exp.toml", "--out", out_dir, "run"]);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    for file in [
        "iterations_video.csv",
        "iterations_gaming.csv",
        "iterations_maps.csv",
        "plan.json",
        "summary.json",
    ] {
        let a = fs::read(tmp.path().join("a").join(file)).unwrap();
        let b = fs::read(tmp.path().join("b").join(file)).unwrap();
        assert_eq!(a, b, "{file} differs");
    }

    let out = mecplan(
        tmp.path(),
        &["--config", "exp.toml", "--out", "c", "--seed", "8", "run"],
    );
    assert!(out.status.success());
    assert_ne!(
        fs::read(tmp.path().join("a/iterations_video.csv")).unwrap(),
        fs::read(tmp.path().join("c/iterations_video.csv")).unwrap()
    );
}

#[test]
fn compare_reports_both_modes_and_delta() {
    let tmp = TempDir::new().unwrap();
    write_config(tmp.path(), "exp.toml", &synthetic_config(150, 2));
    let out = mecplan(tmp.path(), &["--config", "exp.toml", "--pooled", "run", "--compare"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let summary = json(&tmp.path().join("out/summary.json"));
    let e = summary["modes"]["enriched"]["combined"]["efficiency"].as_f64().unwrap();
    let r = summary["modes"]["raw"]["combined"]["efficiency"].as_f64().unwrap();
    let delta = summary["delta_enriched_minus_raw"]["efficiency"].as_f64().unwrap();
    assert!((delta - (e - r)).abs() < 1e-12);
    assert_eq!(summary["modes"]["raw"]["planning"], "pooled");
    assert!(tmp.path().join("out/enriched/iterations_video.csv").exists());
    assert!(tmp.path().join("out/raw/iterations_video.csv").exists());
}

#[test]
fn trade_off_table_has_one_row_per_setting() {
    let tmp = TempDir::new().unwrap();
    write_config(tmp.path(), "exp.toml", &synthetic_config(80, 1));
    let out = mecplan(tmp.path(), &["--config", "exp.toml", "compare"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let table = fs::read_to_string(tmp.path().join("out/compare.csv")).unwrap();
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows.len(), 9);
    assert!(rows[0].starts_with("planning,score,mode,efficiency"));
    assert!(rows.iter().any(|r| r.starts_with("pooled,location,raw,")));
}

#[test]
fn file_trace_matches_synthetic_source() {
    let tmp = TempDir::new().unwrap();
    write_config(tmp.path(), "synth.toml", &synthetic_config(60, 2));
    let out = mecplan(tmp.path(), &["--config", "synth.toml", "--out", "data", "synth"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let out = mecplan(tmp.path(), &["--config", "synth.toml", "--out", "from_synth", "run"]);
    assert!(out.status.success(), "{}", stderr(&out));

    write_config(
        tmp.path(),
        "file.toml",
        "[trace]\npath = \"data/trace.csv\"\npositions = \"data/positions.csv\"\n",
    );
    let out = mecplan(tmp.path(), &["--config", "file.toml", "--out", "from_file", "run"]);
    assert!(out.status.success(), "{}", stderr(&out));
    for category in ["video", "gaming", "maps"] {
        let name = format!("iterations_{category}.csv");
        assert_eq!(
            fs::read(tmp.path().join("from_synth").join(&name)).unwrap(),
            fs::read(tmp.path().join("from_file").join(&name)).unwrap(),
        );
    }
}

#[test]
fn metrics_reevaluates_an_exported_deployment() {
    let tmp = TempDir::new().unwrap();
    write_config(tmp.path(), "exp.toml", &synthetic_config(60, 1));
    assert!(mecplan(tmp.path(), &["--config", "exp.toml", "--out", "data", "synth"])
        .status
        .success());
    assert!(mecplan(tmp.path(), &["--config", "exp.toml", "run"]).status.success());
    let out = mecplan(
        tmp.path(),
        &[
            "metrics",
            "--topology",
            "out/topology.json",
            "--trace",
            "data/trace.csv",
            "--deployment",
            "out/deployment_gaming.json",
        ],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    let summary = json(&tmp.path().join("out/summary.json"));
    let gaming = &summary["modes"]["enriched"]["categories"]["gaming"];
    for key in ["latency_max_ms", "latency_mean_ms", "servers", "traffic_share"] {
        assert_eq!(report[key], gaming[key], "{key}");
    }
    let (a, b) = (
        report["efficiency"].as_f64().unwrap(),
        gaming["efficiency"].as_f64().unwrap(),
    );
    assert!((a - b).abs() < 1e-12);
}

#[test]
fn enrich_writes_tick_trace() {
    let tmp = TempDir::new().unwrap();
    write_config(tmp.path(), "exp.toml", &synthetic_config(20, 1));
    let out = mecplan(tmp.path(), &["--config", "exp.toml", "enrich"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = fs::read_to_string(tmp.path().join("out/enriched.csv")).unwrap();
    assert!(text.starts_with("step,bs_id,category,megabytes,cpu_ticks"));
    assert!(!text.contains(",other,"));
    let totals: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(totals["gaming"].as_f64().unwrap() > totals["video"].as_f64().unwrap());
}

#[test]
fn other_traffic_is_planned_only_on_request() {
    let tmp = TempDir::new().unwrap();
    write_config(tmp.path(), "exp.toml", &synthetic_config(40, 1));
    assert!(mecplan(tmp.path(), &["--config", "exp.toml", "--out", "a", "run"])
        .status
        .success());
    let out = mecplan(
        tmp.path(),
        &["--config", "exp.toml", "--out", "b", "--include-other-raw", "run"],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let lines = |dir: &str| {
        fs::read_to_string(tmp.path().join(dir).join("iterations_other.csv"))
            .unwrap()
            .lines()
            .count()
    };
    assert_eq!(lines("a"), 2);
    assert!(lines("b") > 2);
    let summary = json(&tmp.path().join("b/summary.json"));
    assert_eq!(summary["modes"]["enriched"]["categories"]["other"]["planned"], true);
}

#[test]
fn oracle_reports_gap_on_small_instances() {
    let tmp = TempDir::new().unwrap();
    write_config(tmp.path(), "small.toml", &synthetic_config(12, 1));
    let out = mecplan(tmp.path(), &["--config", "small.toml", "oracle", "--category", "video"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["feasible"], true);
    let min = report["min_servers"].as_u64().unwrap();
    assert!(min >= 1);
    assert!(report["gap_vs_greedy"].as_f64().unwrap() >= 1.0);

    write_config(tmp.path(), "big.toml", &synthetic_config(200, 1));
    let out = mecplan(tmp.path(), &["--config", "big.toml", "oracle"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("25 nodes"));
}

#[test]
fn config_errors_exit_with_code_two() {
    let tmp = TempDir::new().unwrap();
    write_config(tmp.path(), "low.toml", "[trace.synthetic]\n[l_max]\ngaming = 3\n");
    let out = mecplan(tmp.path(), &["--config", "low.toml", "run"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("5 ms"), "{}", stderr(&out));

    write_config(tmp.path(), "score.toml", "score = \"fastest\"\n[trace.synthetic]\n");
    let out = mecplan(tmp.path(), &["--config", "score.toml", "run"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("score"), "{}", stderr(&out));

    write_config(tmp.path(), "extra.toml", "colour = \"blue\"\n[trace.synthetic]\n");
    let out = mecplan(tmp.path(), &["--config", "extra.toml", "run"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("colour"), "{}", stderr(&out));

    let out = mecplan(tmp.path(), &["run"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unreadable_trace_exits_with_code_three() {
    let tmp = TempDir::new().unwrap();
    write_config(
        tmp.path(),
        "exp.toml",
        "[trace]\npath = \"missing.csv\"\npositions = \"p.csv\"\n",
    );
    let out = mecplan(tmp.path(), &["--config", "exp.toml", "run"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("missing.csv"), "{}", stderr(&out));
}

#[test]
fn environment_overrides_only_the_output_directory() {
    let tmp = TempDir::new().unwrap();
    let path = write_config(
        tmp.path(),
        "exp.toml",
        &format!("score = \"location\"\n{}", synthetic_config(30, 1)),
    );
    let out = Command::new(env!("CARGO_BIN_EXE_mecplan"))
        .args(["--config", "exp.toml", "run"])
        .current_dir(tmp.path())
        .env("MECPLAN_OUT", tmp.path().join("elsewhere"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(tmp.path().join("elsewhere/summary.json").exists());
    assert!(!tmp.path().join("out").exists());
    let summary = json(&tmp.path().join("elsewhere/summary.json"));
    assert_eq!(summary["modes"]["enriched"]["score"], "location");

    let config = validate_config(&path).unwrap();
    assert_eq!(config.planning, Planning::PerCategory);
    assert_eq!(config.step_seconds, 3600);
}
