use std::path::Path;
use std::process::{Command, Output};

fn evodrive(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evodrive"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn stderr_line(o: &Output) -> String {
    let s = String::from_utf8_lossy(&o.stderr);
    let lines: Vec<&str> = s.lines().filter(|l| l.starts_with("error[")).collect();
    assert_eq!(lines.len(), 1, "stderr: {s}");
    lines[0].to_string()
}

const EMPTY_ROAD: &str = r#"
[scenario]
max_steps = 800
[scenario.traffic]
count = 0
[scenario.pedestrians]
count = 0
"#;

#[test]
fn failures_exit_nonzero_with_one_classified_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "budget = \"lots\"\n").unwrap();
    let o = evodrive(&["train-rl", "--config", cfg.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr_line(&o).starts_with("error[config]:"));

    let o = evodrive(&["eval", "--variant", "proposed", "--out", dir.path().to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr_line(&o).starts_with("error[config]:"));
}

#[test]
fn human_collection_without_service_is_a_clean_precondition_error() {
    let o = evodrive(&["collect-demos", "--human", "--service", "ws://127.0.0.1:9"]);
    assert!(!o.status.success());
    assert!(stderr_line(&o).starts_with("error[precondition]: teleop service not reachable"));
}

#[test]
fn rule_based_on_empty_road_succeeds_and_replays() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, EMPTY_ROAD).unwrap();
    let out = dir.path().join("eval");
    let o = evodrive(&[
        "eval",
        "--config",
        cfg.to_str().unwrap(),
        "--variant",
        "rule_based",
        "--episodes",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = String::from_utf8_lossy(&o.stdout);
    assert!(table.contains("Collision Rate") && table.contains("0.0%"));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["collision_rate"], 0.0);
    assert_eq!(report["success_rate"], 1.0);

    let log = std::fs::read_dir(out.join("episodes")).unwrap().next().unwrap().unwrap().path();
    let csv = dir.path().join("trace.csv");
    let o = evodrive(&["replay", log.to_str().unwrap(), "--csv", csv.to_str().unwrap()]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(&csv).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "step,t,x,y,heading,speed,v_cmd,steering,status");
    let parsed = evodrive_core::harness::read_episode_log(&log).unwrap();
    assert_eq!(rows.len() - 1, parsed.frames.len());
    // the exported speed column is the logged speed
    for (row, f) in rows[1..].iter().zip(&parsed.frames) {
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!(cols[5].parse::<f64>().unwrap(), f.ego.v);
    }
    assert!(rows.last().unwrap().ends_with(",succeeded"));
}

#[test]
fn truncated_log_names_the_last_valid_step() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, EMPTY_ROAD).unwrap();
    let out = dir.path().join("eval");
    let o = evodrive(&["eval", "--config", cfg.to_str().unwrap(), "--variant", "rule_based", "--episodes", "1", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let log = std::fs::read_dir(out.join("episodes")).unwrap().next().unwrap().unwrap().path();
    let text = std::fs::read_to_string(&log).unwrap();
    let keep: Vec<&str> = text.lines().take(6).collect();
    let cut = format!("{}\n{}", keep.join("\n"), &text.lines().nth(6).unwrap()[..20]);
    let bad = dir.path().join("cut.jsonl");
    std::fs::write(&bad, cut).unwrap();
    let o = evodrive(&["replay", bad.to_str().unwrap()]);
    assert!(!o.status.success());
    let line = stderr_line(&o);
    assert!(line.starts_with("error[format]:") && line.contains("truncated after step 4"), "{line}");
}

#[test]
fn scripted_collection_writes_schema_valid_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "demo_episodes = 1\n[scenario]\nmax_steps = 40\n[scenario.pedestrians]\ncount = 0\n").unwrap();
    let out = dir.path().join("demos");
    let o = evodrive(&["collect-demos", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let files: Vec<_> = std::fs::read_dir(&out).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(files.len(), 1);
    let demo = evodrive_core::bc::read_demo(Path::new(&files[0])).unwrap();
    assert_eq!(demo.records.len(), 41);
    assert!(String::from_utf8_lossy(&o.stdout).contains("1 files"));
}
