//! End-to-end checks of the CLI contract: flags, JSON/CSV shapes, exit codes
//! and byte determinism.

use std::path::Path;
use std::process::{Command, Output};

fn adra(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adra"))
        .args(args)
        .output()
        .expect("failed to launch adra")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "invalid JSON ({e}): {}",
            String::from_utf8_lossy(&out.stdout)
        )
    })
}

#[test]
fn analyze_lone_device_hand_value() {
    let out = adra(&["analyze", "-n", "1", "-d", "10", "--threshold", "0", "--policy", "fixed:1"]);
    assert!(out.status.success());
    let record = stdout_json(&out);
    assert_eq!(record["avg_aoi"], 5.5);
    assert_eq!(record["beta_lambda_plus"], 1.0);
    assert_eq!(record["config"]["lambda"], 0);
    assert_eq!(record["config"]["epsilon"], 0);
    assert_eq!(record["config"]["policy"], serde_json::json!({"fixed": 1.0}));
}

#[test]
fn analyze_echoes_derived_threshold_parts() {
    let out = adra(&["analyze", "-n", "20", "-d", "10", "--threshold", "47", "--policy", "adaptive"]);
    assert!(out.status.success());
    let record = stdout_json(&out);
    assert_eq!(record["config"]["lambda"], 4);
    assert_eq!(record["config"]["epsilon"], 7);
    assert!(record["residual"].as_f64().unwrap() <= 1e-10);
}

#[test]
fn analyze_reads_config_file_with_flag_overrides() {
    let dir = std::env::temp_dir().join("adra_cli_cfg_test");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("config.json");
    std::fs::write(
        &path,
        r#"{"n_devices": 20, "frame_len": 10, "age_threshold": 40, "policy": {"fixed": 0.1}}"#,
    )
    .unwrap();
    let out = adra(&["analyze", "--config", path.to_str().unwrap()]);
    assert!(out.status.success());
    let record = stdout_json(&out);
    assert_eq!(record["config"]["n_devices"], 20);
    assert_eq!(record["config"]["age_threshold"], 40);

    // flags override file fields
    let out = adra(&["analyze", "--config", path.to_str().unwrap(), "--threshold", "0"]);
    assert!(out.status.success());
    let record = stdout_json(&out);
    assert_eq!(record["config"]["age_threshold"], 0);
}

#[test]
fn analyze_rejects_malformed_config_file() {
    let dir = std::env::temp_dir().join("adra_cli_badcfg_test");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("broken.json");
    std::fs::write(&path, "{not json").unwrap();
    let out = adra(&["analyze", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stdout_json(&out)["error"], "invalid_config");
}

#[test]
fn analyze_rejects_invalid_fields() {
    let out = adra(&["analyze", "-n", "0", "-d", "10", "--policy", "adaptive"]);
    assert_eq!(out.status.code(), Some(2));
    let record = stdout_json(&out);
    assert_eq!(record["error"], "invalid_config");
    assert!(record["detail"].as_str().unwrap().contains("n_devices_out_of_range"));

    let out = adra(&["analyze", "-n", "2", "-d", "5", "--policy", "fixed:1.5"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn analyze_degenerate_chain_exits_3_with_error_name() {
    let out = adra(&["analyze", "-n", "2", "-d", "10", "--threshold", "0", "--policy", "fixed:1"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(stdout_json(&out)["error"], "DegenerateChain");
}

#[test]
fn simulate_is_byte_deterministic() {
    let args = [
        "simulate", "-n", "5", "-d", "8", "--threshold", "12", "--policy", "fixed:0.3",
        "--slots", "8000", "--runs", "3", "--seed", "42",
    ];
    let a = adra(&args);
    let b = adra(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let record = stdout_json(&a);
    assert_eq!(record["per_run_aoi"].as_array().unwrap().len(), 3);
    assert_eq!(record["horizon_slots"], 8000);
    // different seed changes the outcome
    let c = adra(&[
        "simulate", "-n", "5", "-d", "8", "--threshold", "12", "--policy", "fixed:0.3",
        "--slots", "8000", "--runs", "3", "--seed", "43",
    ]);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn simulate_single_run_has_no_stderr() {
    let out = adra(&[
        "simulate", "-n", "3", "-d", "5", "--policy", "adaptive", "--slots", "5000", "--runs", "1",
    ]);
    assert!(out.status.success());
    let record = stdout_json(&out);
    assert_eq!(record["std_err"], serde_json::Value::Null);
}

#[test]
fn simulate_rounds_horizon_up_to_whole_frames() {
    let out = adra(&[
        "simulate", "-n", "2", "-d", "7", "--policy", "adaptive", "--slots", "1000", "--runs", "1",
    ]);
    assert!(out.status.success());
    let record = stdout_json(&out);
    assert_eq!(record["horizon_slots"], 1001); // 143 frames of 7
}

#[test]
fn simulate_matches_analytic_on_lone_device() {
    let sim = adra(&[
        "simulate", "-n", "1", "-d", "10", "--policy", "fixed:1", "--slots", "20000", "--runs", "2",
    ]);
    let record = stdout_json(&sim);
    assert_eq!(record["mean_aoi"], 5.5);
}

#[test]
fn sweep_threshold_csv_contract() {
    let args = [
        "sweep", "-n", "4", "-d", "5", "--var", "threshold", "--values", "0:10:5",
        "--policy", "adaptive", "--policy", "fixed:0.25",
    ];
    let out = adra(&args);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout.clone()).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "variable,value,policy,analytic_aoi,sim_aoi,sim_stderr");
    assert_eq!(lines.len(), 1 + 3 * 2);
    assert!(lines[1].starts_with("threshold,0,adaptive,"));
    assert!(lines[2].starts_with("threshold,0,fixed:0.25,"));
    assert!(lines[3].starts_with("threshold,5,adaptive,"));
    // sim columns empty without --with-sim
    assert!(lines[1].ends_with(",,"));
    // byte determinism
    let again = adra(&args);
    assert_eq!(out.stdout, again.stdout);
}

#[test]
fn sweep_marks_degenerate_points_as_nan() {
    let out = adra(&[
        "sweep", "-n", "2", "-d", "4", "--var", "threshold", "--values", "0,2,4",
        "--policy", "fixed:1",
    ]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for line in text.lines().skip(1) {
        assert!(line.contains(",NaN,"), "expected NaN row: {line}");
    }
}

#[test]
fn sweep_with_sim_fills_sim_columns() {
    let out = adra(&[
        "sweep", "-n", "3", "-d", "5", "--var", "threshold", "--values", "0,5",
        "--policy", "adaptive", "--with-sim", "--slots", "5000", "--runs", "2", "--seed", "9",
    ]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for line in text.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 6);
        assert!(fields[4].parse::<f64>().is_ok(), "sim_aoi missing: {line}");
        assert!(fields[5].parse::<f64>().is_ok(), "sim_stderr missing: {line}");
    }
}

#[test]
fn sweep_period_var_optimizes_each_point() {
    let out = adra(&[
        "sweep", "-n", "4", "--var", "period", "--values", "3,6", "--policy", "adaptive",
        "--delta-max", "40",
    ]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    let aoi: Vec<f64> = lines[1..]
        .iter()
        .map(|l| l.split(',').nth(3).unwrap().parse().unwrap())
        .collect();
    assert!(aoi[0] < aoi[1], "optimal age should grow with the period: {aoi:?}");
}

#[test]
fn sweep_devices_var_optimizes_each_point() {
    let out = adra(&[
        "sweep", "-d", "4", "--var", "devices", "--values", "1,4", "--policy", "adaptive",
        "--delta-max", "48",
    ]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let aoi: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(3).unwrap().parse().unwrap())
        .collect();
    assert_eq!(aoi.len(), 2);
    assert!(aoi[0] < aoi[1], "more devices should raise the optimal age: {aoi:?}");
}

#[test]
fn sweep_rejects_bad_values() {
    for bad in ["", "5,3", "4,4", "1:10:0", "x"] {
        let out = adra(&[
            "sweep", "-n", "4", "-d", "5", "--var", "threshold", "--values", bad,
            "--policy", "adaptive",
        ]);
        assert_eq!(out.status.code(), Some(2), "values {bad:?} should be rejected");
    }
}

#[test]
fn sweep_writes_output_file() {
    let dir = std::env::temp_dir().join("adra_cli_sweep_test");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("sweep.csv");
    let out = adra(&[
        "sweep", "-n", "4", "-d", "5", "--var", "threshold", "--values", "0,5",
        "--policy", "adaptive", "--out", path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("variable,value,policy,"));
}

#[test]
fn optimize_lone_device_reports_zero_improvement() {
    let dir = std::env::temp_dir().join("adra_cli_opt_test");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("curve.csv");
    let out = adra(&[
        "optimize", "-n", "1", "-d", "6", "--policy", "adaptive", "--delta-max", "18",
        "--out", path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let record = stdout_json(&out);
    assert_eq!(record["best"]["delta"], 0);
    assert_eq!(record["improvement"], 0.0);
    assert_eq!(record["aira"]["aoi"], record["best"]["aoi"]);
    let curve = std::fs::read_to_string(&path).unwrap();
    assert!(curve.starts_with("delta,p,aoi\n"));
    assert_eq!(curve.lines().count(), 1 + 19);
    assert_eq!(record["curve_path"], path.to_str().unwrap());
}

#[test]
fn optimize_contended_adaptive_beats_baseline() {
    let dir = std::env::temp_dir().join("adra_cli_opt2_test");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("curve.csv");
    let out = adra(&[
        "optimize", "-n", "20", "-d", "10", "--policy", "adaptive",
        "--out", path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let record = stdout_json(&out);
    assert_eq!(record["delta_max"], 600);
    assert!(record["improvement"].as_f64().unwrap() >= 0.12);
    assert!(record["best"]["delta"].as_u64().unwrap() > 0);
}

#[test]
fn optimize_fixed_class_searches_the_grid() {
    let dir = std::env::temp_dir().join("adra_cli_opt3_test");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("curve.csv");
    let out = adra(&[
        "optimize", "-n", "6", "-d", "4", "--policy", "fixed-optimal",
        "--p-grid", "0.1,0.3,0.6", "--delta-max", "40", "--out", path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let record = stdout_json(&out);
    assert!(record["best"]["p"].as_f64().is_some());
    assert!(record["improvement"].as_f64().unwrap() > 0.0);
    let curve = std::fs::read_to_string(&path).unwrap();
    assert_eq!(curve.lines().count(), 1 + 41 * 3);

    // all grid points degenerate: exit 3
    let out = adra(&[
        "optimize", "-n", "2", "-d", "4", "--policy", "fixed-optimal", "--p-grid", "1.0",
        "--delta-max", "4", "--out", Path::new(&dir).join("c2.csv").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(stdout_json(&out)["error"], "AllDegenerate");
}

#[test]
fn usage_errors_exit_2() {
    let out = adra(&["analyze", "-n", "4", "-d", "5"]); // missing policy
    assert_eq!(out.status.code(), Some(2));
    let out = adra(&["analyze", "-n", "4", "-d", "5", "--policy", "bogus"]);
    assert_eq!(out.status.code(), Some(2));
    let out = adra(&["nonsense"]);
    assert_eq!(out.status.code(), Some(2));
    let out = adra(&[
        "sweep", "-n", "4", "-d", "5", "--var", "threshold", "--values", "0,5",
        "--policy", "fixed-optimal", "--p-grid", "",
    ]);
    assert_eq!(out.status.code(), Some(2), "empty probability grid must be rejected");
}
