use std::process::{Command, Output};

use l2approx::TowerReport;

fn l2approx(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_l2approx")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).expect("utf-8 output")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

#[test]
fn betti_circle_factorial_is_one_over_n_factorial() {
    let o = l2approx(&["betti", "--example", "circle", "-j", "0"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    let f0: Vec<&str> = out.lines().skip(1).filter(|l| l.contains(",finite,")).map(|l| l.split(',').nth(5).unwrap()).collect();
    assert_eq!(f0, ["1", "1/2", "1/6", "1/24", "1/120"]);
    assert!(out.lines().any(|l| l.starts_with("0,limit,")));
}

#[test]
fn betti_json_round_trips() {
    let o = l2approx(&["betti", "--example", "wedge2", "-j", "1", "--format", "json"]);
    assert_eq!(code(&o), 0);
    let report = TowerReport::from_json(&stdout(&o)).expect("parses as a report");
    let f0: Vec<_> = report.levels.iter().map(|r| r.f0.clone().unwrap()).collect();
    assert_eq!(f0, ["25/24", "5/4", "121/120"]);
    assert_eq!(report.a_j, 2);
}

#[test]
fn several_dimensions_give_a_json_array() {
    let o = l2approx(&["betti", "--example", "torus", "--levels", "3", "--format", "json"]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v.as_array().map(Vec::len), Some(3));
}

#[test]
fn export_then_reload_matches_builtin() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("circle.json");
    let path_s = path.to_str().unwrap();
    let o = l2approx(&["examples", "export", "circle", "--out", path_s]);
    assert_eq!(code(&o), 0);
    let from_file = l2approx(&["betti", "--input", path_s, "--tower", "factorial", "-j", "1"]);
    let builtin = l2approx(&["betti", "--example", "circle", "--tower", "factorial", "-j", "1"]);
    assert_eq!(code(&from_file), 0);
    let strip = |o: &Output| stdout(o).lines().map(|l| l.splitn(4, ',').nth(3).unwrap_or("").to_string()).collect::<Vec<_>>();
    assert_eq!(strip(&from_file).len(), strip(&builtin).len());
    let f0 = |o: &Output| stdout(o).lines().map(|l| l.split(',').nth(5).unwrap_or("").to_string()).collect::<Vec<_>>();
    assert_eq!(f0(&from_file), f0(&builtin));
}

#[test]
fn missing_input_is_exit_3() {
    let o = l2approx(&["betti", "--input", "/nonexistent/complex.json"]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("cannot read"));
}

#[test]
fn malformed_input_is_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, "{\"model\": 3}").unwrap();
    let o = l2approx(&["betti", "--input", path.to_str().unwrap()]);
    assert_eq!(code(&o), 3);
}

#[test]
fn unknown_example_and_bad_flags_are_exit_3() {
    assert_eq!(code(&l2approx(&["betti", "--example", "klein-bottle"])), 3);
    assert_eq!(code(&l2approx(&["betti", "--example", "circle", "-j", "7"])), 3);
    assert_eq!(code(&l2approx(&["sdf", "--example", "circle", "--grid", "2,1"])), 3);
    assert_eq!(code(&l2approx(&["frobnicate"])), 3);
}

#[test]
fn help_is_exit_0() {
    assert_eq!(code(&l2approx(&["--help"])), 0);
}

#[test]
fn synthetic_decay_violation_fails_with_exit_2() {
    let o = l2approx(&["check", "--synthetic", "decay-violation"]);
    assert_eq!(code(&o), 2);
    assert!(stdout(&o).contains("FAIL"));
}

#[test]
fn random_steps_pass() {
    let o = l2approx(&["check", "--synthetic", "random-steps", "--seed", "3", "--count", "20"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).lines().all(|l| l.starts_with("PASS")));
}

#[test]
fn check_circle_passes() {
    let o = l2approx(&["check", "--example", "circle"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let out = stdout(&o);
    assert!(out.contains("sandwich"));
    assert!(!out.contains("FAIL"));
}

#[test]
fn wedge_gap_is_detected() {
    let o = l2approx(&["check", "--example", "wedge2", "-j", "0", "--gap", "--gap-min", "0.5"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(stdout(&o).lines().any(|l| l.starts_with("PASS gap")));
}

#[test]
fn sdf_has_abelian_rows_with_errors() {
    let o = l2approx(&["sdf", "--example", "circle", "-j", "0", "--grid", "0.5,2"]);
    assert_eq!(code(&o), 0);
    let out = stdout(&o);
    let abelian: Vec<&str> = out.lines().filter(|l| l.contains(",abelian,")).collect();
    assert_eq!(abelian.len(), 2);
    for row in abelian {
        let cols: Vec<&str> = row.split(',').collect();
        let value: f64 = cols[cols.len() - 2].parse().unwrap();
        let error: f64 = cols[cols.len() - 1].parse().unwrap();
        let lambda: f64 = cols[cols.len() - 3].parse().unwrap();
        let exact = 2.0 / std::f64::consts::PI * (lambda.sqrt() / 2.0).asin();
        assert!((value - exact).abs() <= error.max(1e-3), "{row}");
    }
}

#[test]
fn identity_sdf_is_one_past_one() {
    let o = l2approx(&["sdf", "--example", "identity", "--grid", "0.5,1,2"]);
    assert_eq!(code(&o), 0);
    let finite: Vec<Vec<String>> = stdout(&o)
        .lines()
        .filter(|l| l.contains(",finite,"))
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect();
    assert!(!finite.is_empty());
    for cols in finite {
        let lambda: f64 = cols[cols.len() - 3].parse().unwrap();
        let value: f64 = cols[cols.len() - 2].parse().unwrap();
        assert_eq!(value, if lambda >= 1.0 { 1.0 } else { 0.0 });
    }
}

#[test]
fn det_circle_writes_csv_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("det.csv");
    let o = l2approx(&["det", "--example", "circle", "--tower", "dyadic", "-j", "0", "--out", path.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.lines().count() > 10);
}

#[test]
fn examples_list_names_every_example() {
    let out = stdout(&l2approx(&["examples", "list"]));
    for name in ["circle", "torus", "wedge2", "bs12", "identity"] {
        assert!(out.contains(name), "{name} missing from list");
    }
}
