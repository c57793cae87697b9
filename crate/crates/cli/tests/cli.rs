use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn scenario(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn sweeper(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sweeper")).args(args).output().expect("binary runs")
}

fn json_of(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn write_scenario(dir: &tempfile::TempDir, text: &str) -> String {
    let p = dir.path().join("scn.json");
    fs::write(&p, text).unwrap();
    p.display().to_string()
}

#[test]
fn simulate_writes_one_row_per_node() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("drag.csv");
    let res = sweeper(&["simulate", "--scenario", scenario("drag.json").to_str().unwrap(), "--n", "64", "--point", "1,0", "--out", out.to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let csv = fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "t,u_1,u_2,x_1,x_2,step_iters,step_bound");
    assert_eq!(lines.len(), 1 + 65);
    let last: Vec<f64> = lines[65].split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(last[0], 3.0);
    assert!((last[3] - 5.0).abs() < 1e-12);
    assert!(dir.path().join("drag.plot.csv").is_file());
    let summary = json_of(&res);
    assert_eq!(summary["step_bounds_hold"], Value::Bool(true));
    assert_eq!(summary["trajectory"]["n"], 64);
}

#[test]
fn simulate_without_out_prints_csv() {
    let res = sweeper(&["simulate", "--scenario", scenario("drag.json").to_str().unwrap(), "--n", "4"]);
    assert!(res.status.success());
    assert_eq!(String::from_utf8_lossy(&res.stdout).lines().count(), 6);
}

#[test]
fn periodic_orbit_of_the_disk_is_the_equilibrium() {
    let res = sweeper(&["periodic", "--scenario", scenario("disk.json").to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let doc = json_of(&res);
    let orbit = &doc["orbit"];
    assert!(orbit["residual"].as_f64().unwrap() <= 1e-8);
    let q: Vec<f64> = serde_json::from_value(orbit["q_star"].clone()).unwrap();
    assert!((q[0] - 1.0).abs() < 1e-6 && q[1].abs() < 1e-6, "{q:?}");
    assert_eq!(doc["meta"]["scenario_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn equilibrium_report() {
    let res = sweeper(&["equilibrium", "--scenario", scenario("disk.json").to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let doc = json_of(&res);
    assert_eq!(doc["verdict"], "Stable");
    assert!((doc["alpha"].as_f64().unwrap() + 2.0).abs() < 1e-6);
}

#[test]
fn degree_through_a_fixed_point_is_undefined() {
    let res = sweeper(&["degree", "--scenario", scenario("disk.json").to_str().unwrap(), "--polygon", "1,0;1.1,0;1.1,0.1", "--n", "64"]);
    assert_eq!(res.status.code(), Some(4), "{}", String::from_utf8_lossy(&res.stderr));
}

#[test]
fn degree_around_the_equilibrium_is_one() {
    let res = sweeper(&["degree", "--scenario", scenario("disk.json").to_str().unwrap(), "--polygon", "0.9,-0.1;1.1,-0.1;1.1,0.1;0.9,0.1", "--n", "64"]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    assert_eq!(json_of(&res)["result"]["degree"], 1);
}

#[test]
fn unknown_field_is_a_schema_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(scenario("disk.json")).unwrap().replace("\"radius\": 1.0", "\"radius\": 1.0, \"radios\": 2");
    let path = write_scenario(&dir, &text);
    let res = sweeper(&["simulate", "--scenario", &path]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("body"));
}

#[test]
fn underdeclared_contraction_fails_the_audit() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(scenario("fourier_contraction.json")).unwrap().replace("\"L2\": 0.3", "\"L2\": 0.1");
    let path = write_scenario(&dir, &text);
    let res = sweeper(&["periodic", "--scenario", &path]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("audit"));
    let skipped = sweeper(&["simulate", "--scenario", &path, "--n", "8", "--no-audit"]);
    assert!(skipped.status.success());
}

#[test]
fn outward_force_has_no_switched_equilibrium() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(scenario("disk.json")).unwrap().replace("[-2.0, 0.0]", "[0.0, 0.0]");
    let path = write_scenario(&dir, &text);
    let res = sweeper(&["equilibrium", "--scenario", &path, "--point", "1,0"]);
    assert_eq!(res.status.code(), Some(3), "{}", String::from_utf8_lossy(&res.stdout));
}

#[test]
fn bad_arguments_exit_with_two() {
    let disk = scenario("disk.json");
    let disk = disk.to_str().unwrap();
    assert_eq!(sweeper(&["continue", "--scenario", disk]).status.code(), Some(2));
    assert_eq!(sweeper(&["degree", "--scenario", disk]).status.code(), Some(2));
    assert_eq!(sweeper(&["simulate", "--scenario", disk, "--lambda", "1.5"]).status.code(), Some(2));
    assert_eq!(sweeper(&["simulate", "--scenario", "/nonexistent/scn.json"]).status.code(), Some(2));
    assert_eq!(sweeper(&["simulate"]).status.code(), Some(2));
}

#[test]
fn continuation_writes_branch_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("branch.json");
    let res = sweeper(&[
        "continue",
        "--scenario",
        scenario("forced_disk.json").to_str().unwrap(),
        "--lambda-grid",
        "0.05:0.1:2",
        "--n",
        "256",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let doc: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    let branch = doc["branch"].as_array().unwrap();
    assert_eq!(branch.len(), 2);
    assert!(branch.iter().all(|p| p["converged"] == Value::Bool(true)));
    let plot = fs::read_to_string(dir.path().join("branch.plot.csv")).unwrap();
    assert_eq!(plot.lines().count(), 3);
}

#[test]
fn validate_with_scenario_passes() {
    let res = sweeper(&["validate", "--scenario", scenario("fourier_contraction.json").to_str().unwrap(), "--n", "256", "--seed", "5"]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let doc = json_of(&res);
    assert_eq!(doc["all_passed"], Value::Bool(true));
    assert_eq!(doc["checks"].as_array().unwrap().len(), 6);
}
