use std::path::Path;
use std::process::{Command, Output};

fn rdbw(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rdbw")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn estimate_on_a_step_recovers_unit_jump() {
    let tmp = tempfile::tempdir().unwrap();
    let mut body = String::from("y,x\n");
    for i in 0..200 {
        let x = -1.0 + 2.0 * (i as f64 + 0.5) / 200.0;
        body.push_str(&format!("{},{x}\n", if x >= 0.0 { 1.0 } else { 0.0 }));
    }
    let input = write(tmp.path(), "step.csv", &body);
    let o = rdbw(&["estimate", "--input", &input, "--h1", "0.3", "--h0", "0.3", "--format", "json"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((v["tau_hat"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(v["bandwidths"]["h1"].as_f64(), Some(0.3));
}

#[test]
fn estimate_runs_each_selector_on_simulated_data() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("d1.csv");
    let o = rdbw(&["sample", "--design", "1", "--n", "600", "--seed", "4", "--output", input.to_str().unwrap()]);
    assert!(o.status.success());
    for sel in ["mmse", "ind", "ik"] {
        let o = rdbw(&["estimate", "--input", input.to_str().unwrap(), "--selector", sel]);
        assert!(o.status.success(), "{sel}: {}", String::from_utf8_lossy(&o.stderr));
        let text = stdout(&o);
        assert!(text.contains("tau_hat"), "{text}");
        assert!(text.contains(&format!("selector      {sel}")), "{text}");
    }
}

#[test]
fn usage_errors_exit_with_code_2() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = write(tmp.path(), "a.csv", "y,z\n1,2\n");
    let o = rdbw(&["estimate", "--input", &missing]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("'x'"));

    let bad = write(tmp.path(), "b.csv", "y,x\n1,0.5\n2,oops\n");
    let o = rdbw(&["estimate", "--input", &bad]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));

    assert_eq!(rdbw(&["simulate", "--n", "100"]).status.code(), Some(2));
    assert_eq!(rdbw(&["rmse-star", "--design", "9", "--n", "500"]).status.code(), Some(2));
    assert_eq!(rdbw(&["estimate", "--input", &bad, "--h1", "0.2"]).status.code(), Some(2));
}

#[test]
fn compute_errors_exit_with_code_3() {
    let tmp = tempfile::tempdir().unwrap();
    // Only three observations to the right: too few for the pilots.
    let input = write(
        tmp.path(),
        "thin.csv",
        "y,x\n0,-0.9\n0,-0.7\n0,-0.5\n0,-0.3\n0,-0.2\n0,-0.1\n1,0.1\n1,0.2\n1,0.3\n",
    );
    let o = rdbw(&["estimate", "--input", &input]);
    assert_eq!(o.status.code(), Some(3));
    assert!(!o.stderr.is_empty());
}

#[test]
fn rmse_star_and_truth_subcommands() {
    let o = rdbw(&["rmse-star", "--design", "2", "--n", "500"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let ik = text.lines().find(|l| l.starts_with("ik,")).unwrap();
    let fields: Vec<f64> = ik.split(',').skip(1).map(|f| f.parse().unwrap()).collect();
    assert!((fields[2] - 0.088).abs() < 0.001, "{ik}");
    assert!((fields[3] - 0.913).abs() < 0.005, "{ik}");

    let o = rdbw(&["truth", "--design", "1", "--format", "json"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((v["f_c"].as_f64().unwrap() - 0.625).abs() < 1e-12);
}

#[test]
fn efficiency_grid_has_requested_shape() {
    let o = rdbw(&["efficiency", "--case", "negative", "--grid", "5"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().count(), 1 + 25);
    let o = rdbw(&["efficiency", "--case", "equal", "--gamma", "1"]);
    assert!(stdout(&o).lines().nth(1).unwrap().contains(",1"));
}

#[test]
fn simulate_writes_all_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("out");
    let o = rdbw(&[
        "simulate", "--design", "2", "--n", "300", "--reps", "20", "--seed", "3", "--out",
        dir.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["summary.json", "summary.csv", "cdf.csv", "mean_functions.csv"] {
        assert!(dir.join(f).exists(), "{f}");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["reps"].as_u64(), Some(20));
    assert_eq!(summary["selectors"].as_array().unwrap().len(), 3);
}
