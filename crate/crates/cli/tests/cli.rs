use std::path::PathBuf;
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(name)
}

fn ftrgame(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ftrgame"))
        .args(args)
        .env_remove("FTRGAME_OUT_DIR")
        .env("FTRGAME_LOG", "off")
        .output()
        .expect("binary runs")
}

#[test]
fn run_writes_every_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = ftrgame(&["run", "-c", fixture("two_bus.toml").to_str().unwrap(), "-o", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ftrgame::scenario::TABLE_FILES {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
    assert!(dir.path().join("summary.json").exists());
    let eq = std::fs::read_to_string(dir.path().join("equilibrium.csv")).unwrap();
    assert!(eq.starts_with("player,path,type,bid,quantity,award,profit,joint_bid,joint_award"));
    for row in eq.lines().skip(1) {
        let profit: f64 = row.split(',').nth(6).unwrap().parse().unwrap();
        assert_eq!(profit, 0.0);
    }
}

#[test]
fn metrics_stops_after_the_risk_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = ftrgame(&["metrics", "-c", fixture("eight_bus.toml").to_str().unwrap(), "-o", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let zeta = std::fs::read_to_string(dir.path().join("table1_zeta.csv")).unwrap();
    assert_eq!(zeta.lines().count(), 1 + 5);
    assert!(!dir.path().join("table3_profits.csv").exists());
}

#[test]
fn output_directory_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_ftrgame"))
        .args(["metrics", "-c", fixture("two_bus.toml").to_str().unwrap()])
        .env("FTRGAME_OUT_DIR", dir.path())
        .env("FTRGAME_LOG", "off")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(dir.path().join("table1_zeta.csv").exists());
}

#[test]
fn bad_config_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "buses = []\n").unwrap();
    assert_eq!(ftrgame(&["run", "-c", bad.to_str().unwrap()]).status.code(), Some(1));
    assert_eq!(ftrgame(&["run", "-c", "/nonexistent/scenario.toml"]).status.code(), Some(1));

    let text = std::fs::read_to_string(fixture("two_bus.toml")).unwrap();
    let wrong = dir.path().join("deviation.toml");
    std::fs::write(&wrong, format!("{text}\n[risk]\ndeviation = 1.5\n")).unwrap();
    let out = ftrgame(&["metrics", "-c", wrong.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("deviation"));
}

#[test]
fn exhausted_rounds_exit_with_two_and_still_write() {
    let dir = tempfile::tempdir().unwrap();
    let out = ftrgame(&[
        "run",
        "-c",
        fixture("eight_bus.toml").to_str().unwrap(),
        "-o",
        dir.path().to_str().unwrap(),
        "--max-rounds",
        "1",
        "--no-joint",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(dir.path().join("equilibrium.csv").exists());
}

#[test]
fn clear_reads_an_instance() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("instance.json");
    std::fs::write(
        &inst,
        r#"{
            "offers": [
                { "kind": "obligation", "price": 10.0, "min": 0.0, "max": 15.0, "path": 0 },
                { "kind": "obligation", "price": 2.0, "min": 0.0, "max": 8.0, "path": 1 }
            ],
            "impact": [[1.0], [-1.0]],
            "limits": [10.0]
        }"#,
    )
    .unwrap();
    let out = ftrgame(&["clear", inst.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["awards"][0].as_f64().unwrap(), 15.0);
    assert_eq!(v["awards"][1].as_f64().unwrap(), 8.0);
    assert_eq!(v["objective"].as_f64().unwrap(), 166.0);
}

#[test]
fn verify_certifies_a_saved_solution() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture("eight_bus.toml");
    let run = ftrgame(&["run", "-c", cfg.to_str().unwrap(), "-o", dir.path().to_str().unwrap(), "--no-joint"]);
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));
    let sol = dir.path().join("solution.json");
    let out = ftrgame(&["verify", "-c", cfg.to_str().unwrap(), "--solution", sol.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report["certified"].as_bool().unwrap());
}
