use std::path::Path;
use std::process::{Command, Output};

use planlab_core::error_model::estimate_errors;
use planlab_core::TrajectoryRecord;

fn planlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_planlab"))
        .args(args)
        .env_remove("PLANLAB_WORKERS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_config(dir: &Path, body: serde_json::Value) -> String {
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&body).unwrap()).unwrap();
    path.display().to_string()
}

fn small_run(dir: &Path, out: &str) -> serde_json::Value {
    serde_json::json!({
        "experiment": "bestofn_compare",
        "maps": { "generate": { "count": 2, "t_star": [3] } },
        "frameworks": [
            { "label": "ReAct", "agent": { "framework": "ReAct", "error_params": { "eps_p": 0.25, "eps_s": 0.2 } } },
            { "label": "TAPE", "agent": { "framework": "TAPE", "m": 4, "error_params": { "eps_p": 0.25, "eps_s": 0.2 } } }
        ],
        "trials_per_cell": 20,
        "master_seed": 7,
        "output_dir": dir.join(out).display().to_string()
    })
}

#[test]
fn unknown_config_key_exits_2_with_path() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_run(dir.path(), "out");
    cfg["trials_per_cel"] = 3.into();
    let path = write_config(dir.path(), cfg);
    let o = planlab(&["run", &path]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("trials_per_cel"));
}

#[test]
fn bad_worker_count_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), small_run(dir.path(), "out"));
    let o = Command::new(env!("CARGO_BIN_EXE_planlab"))
        .args(["run", &path])
        .env("PLANLAB_WORKERS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn failed_check_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    // Too few trials for the required 3 sigma verdicts.
    let mut cfg = small_run(dir.path(), "out");
    cfg["trials_per_cell"] = 1.into();
    let path = write_config(dir.path(), cfg);
    let o = planlab(&["run", &path, "--check"]);
    assert_eq!(o.status.code(), Some(3), "{}", stdout(&o));
    assert!(stdout(&o).contains("FAIL"));
}

#[test]
fn run_is_byte_identical_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_run(dir.path(), "a");
    let a = write_config(dir.path(), cfg.clone());
    assert!(planlab(&["run", &a]).status.success());
    cfg["output_dir"] = dir.path().join("b").display().to_string().into();
    let b = write_config(dir.path(), cfg);
    let o = Command::new(env!("CARGO_BIN_EXE_planlab"))
        .args(["run", &b])
        .env("PLANLAB_WORKERS", "1")
        .output()
        .unwrap();
    assert!(o.status.success());
    for f in ["summary.csv", "episodes.csv", "episodes/TAPE_T3_S2.jsonl"] {
        let x = std::fs::read(dir.path().join("a").join(f)).unwrap();
        let y = std::fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(x, y, "{f}");
    }
}

#[test]
fn summary_is_recomputable_from_jsonl() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), small_run(dir.path(), "out"));
    assert!(planlab(&["run", &path]).status.success());
    let out = dir.path().join("out");
    let mut summary = csv::Reader::from_path(out.join("summary.csv")).unwrap();
    let headers = summary.headers().unwrap().clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let mut rows = 0;
    for row in summary.records() {
        let row = row.unwrap();
        let stem = format!("{}_T{}_S{}", &row[col("framework")], &row[col("T_star")], &row[col("slack")]);
        let text = std::fs::read_to_string(out.join("episodes").join(format!("{stem}.jsonl"))).unwrap();
        let records: Vec<TrajectoryRecord> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        let n = records.len() as f64;
        let successes = records.iter().filter(|r| r.success).count() as f64;
        let mean = successes / n;
        let stderr = (mean * (1.0 - mean) / n).sqrt();
        assert_eq!(row[col("n")].parse::<usize>().unwrap(), records.len());
        assert!((row[col("success_mean")].parse::<f64>().unwrap() - mean).abs() <= 5e-7);
        assert!((row[col("stderr")].parse::<f64>().unwrap() - stderr).abs() <= 5e-7);
        rows += 1;
    }
    assert_eq!(rows, 2);
}

#[test]
fn gen_maps_then_oracle_solve() {
    let dir = tempfile::tempdir().unwrap();
    let maps = dir.path().join("maps");
    let o = planlab(&["gen-maps", "--t-star", "4", "--count", "2", "--seed", "3", "--out", maps.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let first = maps.join("map_T4_000.json");
    assert!(first.exists() && maps.join("map_T4_001.json").exists());
    let o = planlab(&["oracle", "solve", first.to_str().unwrap()]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["length"], 4);
    assert_eq!(v["actions"].as_str().unwrap().len(), 4);
}

#[test]
fn file_maps_run_with_check() {
    let dir = tempfile::tempdir().unwrap();
    let maps = dir.path().join("maps");
    assert!(planlab(&["gen-maps", "--t-star", "3", "--count", "1", "--out", maps.to_str().unwrap()]).status.success());
    let mut cfg = small_run(dir.path(), "out");
    cfg["maps"] = serde_json::json!({ "files": [maps.join("map_T3_000.json")] });
    let path = write_config(dir.path(), cfg);
    let o = planlab(&["run", &path]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("TAPE T*=3 slack=2"));
}

#[test]
fn missing_map_file_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_run(dir.path(), "out");
    cfg["maps"] = serde_json::json!({ "files": [dir.path().join("nope.json")] });
    let path = write_config(dir.path(), cfg);
    assert_eq!(planlab(&["run", &path]).status.code(), Some(2));
}

#[test]
fn solve_fixture_prints_solution() {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/solver");
    let o = planlab(&["solve", fixtures.join("fork_budget.json").to_str().unwrap()]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["status"], "Optimal");
    assert_eq!(v["walk"], serde_json::json!([1]));
    let o = planlab(&["solve", fixtures.join("over_budget.json").to_str().unwrap()]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["status"], "Infeasible");
}

#[test]
fn bounds_prints_csv() {
    let dir = tempfile::tempdir().unwrap();
    let grid = dir.path().join("grid.json");
    std::fs::write(
        &grid,
        r#"{"eps_p":[0.25],"eps_s":[0.2],"delta_b":[1.0],"delta_r":[0.0],"t":[1,2]}"#,
    )
    .unwrap();
    let o = planlab(&["bounds", "--grid", grid.to_str().unwrap()]);
    assert!(o.status.success());
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("eps_p,eps_s,delta_b,delta_r,T,"));
    let u_react: f64 = lines[1].split(',').nth(8).unwrap().parse().unwrap();
    assert!((u_react - 0.6).abs() < 1e-12);
}

#[test]
fn estimate_errors_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), small_run(dir.path(), "out"));
    assert!(planlab(&["run", &path]).status.success());
    let log = dir.path().join("out/episodes/ReAct_T3_S2.jsonl");
    let o = planlab(&["estimate-errors", log.to_str().unwrap()]);
    assert!(o.status.success());
    let printed: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let text = std::fs::read_to_string(&log).unwrap();
    let records: Vec<TrajectoryRecord> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(printed, serde_json::to_value(estimate_errors(&records)).unwrap());
}

#[test]
fn malformed_log_line_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("bad.jsonl");
    std::fs::write(&log, "{\"not\": \"a record\"}\n").unwrap();
    assert_eq!(planlab(&["estimate-errors", log.to_str().unwrap()]).status.code(), Some(2));
}
