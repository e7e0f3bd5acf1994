use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn poincare(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_poincare")).args(args).output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn scratch(name: &str, contents: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("poincare-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join(name);
    std::fs::write(&path, contents).unwrap();
    path
}

fn strip_clock(mut v: Value) -> Value {
    v.as_object_mut().unwrap().remove("wall_clock_ms");
    v
}

#[test]
fn series_writes_the_square_table() {
    let out = poincare(&["series", "--congruence", "x*x", "--primes", "3", "--n", "0..3"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines,
        ["prime,case,n,a_n,stable", "3,mixed,0,1,true", "3,mixed,1,1,true", "3,mixed,2,3,true", "3,mixed,3,3,true"]
    );
}

#[test]
fn series_report_sidecar() {
    let report = scratch("series-report.json", "");
    let out = poincare(&[
        "series", "--congruence", "x", "--primes", "5", "--n", "0..1", "--report", report.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(report).unwrap()).unwrap();
    assert_eq!(v["command"], "series");
    assert_eq!(v["verdict"], "PASS");
    assert_eq!(v["config"]["primes"], "5");
    // Only x = 0 solves x = 0 mod p^n.
    assert_eq!(v["result"][1]["a_n"], 1);
}

#[test]
fn fit_and_shape_from_csv() {
    let csv = scratch(
        "square.csv",
        "prime,case,n,a_n,stable\n3,mixed,0,1,true\n3,mixed,1,1,true\n3,mixed,2,3,true\n3,mixed,3,3,true\n\
         3,mixed,4,9,true\n3,mixed,5,9,true\n3,mixed,6,27,true\n",
    );
    let out = poincare(&["fit", "--input", csv.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let fit = &json(&out)["result"]["fits"][0];
    assert_eq!(fit["num"], serde_json::json!(["1", "1"]));
    assert_eq!(fit["den"], serde_json::json!(["1", "0", "-3"]));

    let out = poincare(&["shape", "--input", csv.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["result"]["shapes"][0]["factors"], serde_json::json!([[1, 2]]));
}

#[test]
fn shape_failure_exits_one() {
    // 1/(1 - 2T) at q = 3 has no factor of the form 1 - 3^a T^b.
    let rows: String = (0..8).map(|n| format!("3,mixed,{n},{},true\n", 1u64 << n)).collect();
    let csv = scratch("powers-of-two.csv", &format!("prime,case,n,a_n,stable\n{rows}"));
    let out = poincare(&["shape", "--input", csv.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(json(&out)["verdict"], "FAIL");
}

#[test]
fn malformed_prime_is_a_config_error() {
    let out = poincare(&["series", "--congruence", "x", "--primes", "4"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("primes"), "{err}");
}

#[test]
fn missing_relation_is_a_config_error() {
    let out = poincare(&["count", "--primes", "3"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn compare_fields_agree() {
    let out = poincare(&["compare-fields", "--congruence", "x*y", "--vars", "x,y", "--primes", "3", "--n", "0..3"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["verdict"], "PASS");
    let rows = v["result"].as_array().unwrap();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r["mixed"] == r["equal"] && r["agree"] == true));
    assert_eq!(rows[2]["mixed"], 21);
}

#[test]
fn classmass_on_a_relation_file() {
    let rel = scratch("ball.json", r#"{"phi": "ord(x:VF - y:VF) >= n:VG", "x": ["x"], "y": ["y"]}"#);
    let out = poincare(&["classmass", "--formula", rel.to_str().unwrap(), "--primes", "3,5", "--n", "0..2"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    for row in v["result"].as_array().unwrap() {
        assert_eq!(row["all_one"], true);
        assert_eq!(row["integral"], row["count"].to_string());
    }
}

#[test]
fn uniform_validates_on_the_largest_prime() {
    let out = poincare(&["uniform", "--congruence", "x*x", "--primes", "3,5,7,11,13", "--n", "0..6"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["result"]["held_out"], 13);
    assert_eq!(v["result"]["polynomials"][6], "q^3");
}

#[test]
fn uniform_rejects_a_low_degree_cap() {
    let out = poincare(&["uniform", "--congruence", "x*x", "--primes", "3,5,7", "--n", "0..4", "--degree-cap", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(json(&out)["verdict"], "FAIL");
}

#[test]
fn multibox_summary_and_bound() {
    let out = poincare(&["multibox", "--congruence", "x*x", "--primes", "3,5", "--n", "0..3"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    let rows = v["result"]["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 8);
    assert_eq!(rows[2]["classes"], 3);
    assert_eq!(v["result"]["bound_scans"][0]["q"], 1);
}

#[test]
fn parse_check_reports_syntax_errors() {
    let out = poincare(&["parse-check", "ord(x:VF) >= 2"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["result"]["free_vars"], serde_json::json!(["x:VF"]));
    let out = poincare(&["parse-check", "ord(x:VF) >="]);
    assert_eq!(out.status.code(), Some(1));
    assert!(json(&out)["result"]["error"].is_string());
}

#[test]
fn reports_are_deterministic() {
    let args = ["count", "--congruence", "x*x", "--primes", "3", "--n", "0..3"];
    let (a, b) = (poincare(&args), poincare(&args));
    assert_eq!(strip_clock(json(&a)), strip_clock(json(&b)));
}
