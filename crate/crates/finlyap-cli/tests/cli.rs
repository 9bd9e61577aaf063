//! End-to-end tests of the `finlyap` binary: exit codes, report
//! envelopes, determinism, and file output.

use std::fs;
use std::process::Command;

use serde_json::Value;

fn finlyap(args: &[&str]) -> (i32, String, String) {
    let output = Command::new(env!("CARGO_BIN_EXE_finlyap"))
        .args(args)
        .output()
        .expect("binary runs");
    (
        output.status.code().expect("exit code"),
        String::from_utf8(output.stdout).expect("utf-8 stdout"),
        String::from_utf8(output.stderr).expect("utf-8 stderr"),
    )
}

fn envelope(stdout: &str) -> Value {
    serde_json::from_str(stdout).expect("stdout is a JSON report")
}

#[test]
fn certified_oscillator_reproduces_the_known_rate() {
    let (code, stdout, _) = finlyap(&[
        "certify",
        "--system",
        "sine_oscillator",
        "--metric",
        "oscillator_v2",
        "--region",
        "[-3,3]",
        "--mode",
        "ies",
        "--grid",
        "121",
    ]);
    assert_eq!(code, 0);
    let report = envelope(&stdout);
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["command"], "certify");
    assert_eq!(report["report"]["verdict"], "certified_IES");
    let rate = report["report"]["rate_estimate"].as_f64().expect("rate");
    let expected = 1.0 + 3.0_f64.cos();
    assert!(
        (rate - expected).abs() <= 0.01 * expected,
        "rate {rate} is not within 1% of {expected}"
    );
}

#[test]
fn rotation_center_yields_a_counterexample_exit() {
    let (code, stdout, _) = finlyap(&["bendixson", "--system", "harmonic", "--region", "ball:2"]);
    assert_eq!(code, 1);
    let report = envelope(&stdout);
    assert_eq!(report["report"]["verdict"], "counterexample");
    assert_eq!(report["config"]["metric"], "quadratic");
}

#[test]
fn converter_scenario_certifies_asymptotic_contraction() {
    let (code, stdout, _) = finlyap(&["scenario", "boost_lasalle"]);
    assert_eq!(code, 0);
    let report = envelope(&stdout);
    assert_eq!(report["report"]["passed"], true);
    assert_eq!(report["report"]["scenario"], "boost_lasalle");
}

#[test]
fn identical_runs_differ_only_in_the_timestamp() {
    let args = [
        "certify",
        "--system",
        "sine_oscillator",
        "--metric",
        "oscillator_v2",
        "--region",
        "[-3,3]",
        "--grid",
        "21",
        "--seed",
        "99",
    ];
    let (code_a, stdout_a, _) = finlyap(&args);
    let (code_b, stdout_b, _) = finlyap(&args);
    assert_eq!(code_a, 0);
    assert_eq!(code_b, 0);
    assert!(stdout_a.contains("unix:"));
    let strip = |text: &str| -> String {
        text.lines().filter(|l| !l.contains("\"timestamp\"")).collect::<Vec<_>>().join("\n")
    };
    assert_eq!(strip(&stdout_a), strip(&stdout_b), "reports differ beyond the timestamp");
}

#[test]
fn inconclusive_measure_runs_exit_with_code_two() {
    let (code, stdout, _) = finlyap(&[
        "certify",
        "--engine",
        "measure",
        "--system",
        "harmonic",
        "--region",
        "ball:2",
        "--norm",
        "two",
    ]);
    assert_eq!(code, 2);
    let report = envelope(&stdout);
    assert_eq!(report["report"]["verdict"], "inconclusive");
}

#[test]
fn usage_problems_exit_with_code_three() {
    let (code, _, stderr) =
        finlyap(&["certify", "--system", "nosuch", "--metric", "quadratic", "--region", "ball:1"]);
    assert_eq!(code, 3);
    assert!(stderr.contains("nosuch"));

    let (code, _, _) =
        finlyap(&["certify", "--system", "harmonic", "--metric", "quadratic", "--region", "(oops)"]);
    assert_eq!(code, 3);

    let (code, _, _) = finlyap(&["certify", "--no-such-flag"]);
    assert_eq!(code, 3);

    let dir = tempfile::tempdir().expect("tempdir");
    let path = dir.path().join("bad.json");
    fs::write(&path, r#"{"regoin": "ball:1"}"#).expect("write config");
    let (code, _, stderr) = finlyap(&["certify", "--config", path.to_str().expect("utf-8 path")]);
    assert_eq!(code, 3);
    assert!(stderr.contains("regoin"));
}

#[test]
fn output_directory_receives_report_and_series() {
    let dir = tempfile::tempdir().expect("tempdir");
    let out = dir.path().join("run");
    let (code, stdout, _) =
        finlyap(&["scenario", "oscillator_v1", "--out", out.to_str().expect("utf-8 path")]);
    assert_eq!(code, 0);
    assert!(stdout.is_empty(), "stdout stays clean when --out is given");
    let report: Value = serde_json::from_str(
        &fs::read_to_string(out.join("report.json")).expect("report.json exists"),
    )
    .expect("report.json parses");
    assert_eq!(report["command"], "scenario");
    let csv = fs::read_to_string(out.join("oscillator_v1_decay.csv")).expect("series file exists");
    assert!(csv.starts_with("t, distance, log_distance"));
}

#[test]
fn config_file_values_yield_to_explicit_flags() {
    let dir = tempfile::tempdir().expect("tempdir");
    let path = dir.path().join("run.json");
    fs::write(
        &path,
        r#"{
            "system": "sine_oscillator",
            "metric": "oscillator_v2",
            "region": "[-3,3]",
            "grid": 21
        }"#,
    )
    .expect("write config");

    let (code, stdout, _) = finlyap(&["certify", "--config", path.to_str().expect("utf-8 path")]);
    assert_eq!(code, 0);
    let from_file = envelope(&stdout);
    assert_eq!(from_file["config"]["region"], "[-3,3]");

    let (code, stdout, _) = finlyap(&[
        "certify",
        "--config",
        path.to_str().expect("utf-8 path"),
        "--region",
        "[-1,1]",
    ]);
    assert_eq!(code, 0);
    let overridden = envelope(&stdout);
    assert_eq!(overridden["config"]["region"], "[-1,1]");
    let rate = overridden["report"]["rate_estimate"].as_f64().expect("rate");
    let expected = 1.0 + 1.0_f64.cos();
    assert!((rate - expected).abs() <= 0.01 * expected);
}

#[test]
fn metric_property_audit_flags_the_broken_catalog_entry() {
    let (code, _, _) =
        finlyap(&["props", "--metric", "knorm", "--metric-param", "k=2", "--dim", "3"]);
    assert_eq!(code, 0);

    let (code, stdout, _) = finlyap(&[
        "props",
        "--metric",
        "broken_two_exponent",
        "--metric-param",
        "p1=1",
        "--metric-param",
        "p2=2",
        "--dim",
        "2",
    ]);
    assert_eq!(code, 1);
    let report = envelope(&stdout);
    let checks = report["report"]["checks"].as_array().expect("checks");
    let failed: Vec<&str> = checks
        .iter()
        .filter(|c| c["pass"] == false)
        .map(|c| c["name"].as_str().expect("name"))
        .collect();
    assert_eq!(failed, vec!["bound_sandwich"]);
}

#[test]
fn induced_distance_matches_the_euclidean_gap() {
    let (code, stdout, _) = finlyap(&[
        "distance",
        "--metric",
        "quadratic",
        "--from",
        "0,0",
        "--to",
        "3,4",
    ]);
    assert_eq!(code, 0);
    let report = envelope(&stdout);
    let value = report["report"]["value"].as_f64().expect("value");
    assert!((value - 5.0).abs() <= 1e-6, "distance {value} is not the straight-line 5");
    assert_eq!(report["report"]["converged"], true);
    let curve = report["report"]["curve"].as_array().expect("curve");
    assert_eq!(curve.len(), 33, "default 32 segments give 33 polyline nodes");
}

#[test]
fn scenario_listing_names_every_worked_example() {
    let (code, stdout, _) = finlyap(&["scenario", "--list"]);
    assert_eq!(code, 0);
    for name in [
        "oscillator_v1",
        "oscillator_v2",
        "boost_lasalle",
        "consensus_maxmin",
        "kuramoto_constant",
        "kuramoto_centroid",
        "virtual_observer",
    ] {
        assert!(stdout.contains(name), "listing misses {name}");
    }
}
