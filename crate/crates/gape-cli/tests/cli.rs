//! Black-box checks of the binary: exit codes, JSON output, config-file
//! precedence.

use std::path::Path;
use std::process::{Command, Output};

use gape::data::{generate_synthetic, write_dataset, SyntheticSpec};
use gape::types::ym;

fn gape(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gape"))
        .args(args)
        .output()
        .unwrap()
}

fn write_fixture(dir: &Path, noise: f64, seed: u64) {
    let spec = SyntheticSpec::quintile_demo(40, ym(1995, 1), 60, noise);
    let (dataset, _) = generate_synthetic(&spec, seed).unwrap();
    write_dataset(dir, &dataset).unwrap();
}

#[test]
fn metric_reports_finite_outcome_as_json() {
    let output = gape(&["metric", "--price", "10", "--eps", "1", "--growth", "0.10"]);
    assert_eq!(output.status.code(), Some(0));
    let body: serde_json::Value = serde_json::from_slice(&output.stdout).unwrap();
    assert_eq!(body["gape"]["finite"], serde_json::json!(true));
    let years = body["gape"]["years"].as_f64().unwrap();
    assert!((years - 6.7845).abs() < 1e-4);
    assert_eq!(body["peg_payback_years"], serde_json::json!(7));
    assert_eq!(body["peg"], serde_json::json!(1.0));
    assert_eq!(body["pe"], serde_json::json!(10.0));
}

#[test]
fn metric_reports_infinite_outcome_with_bound() {
    let output = gape(&["metric", "--price", "15", "--eps", "1", "--growth", "-0.07"]);
    assert_eq!(output.status.code(), Some(0));
    let body: serde_json::Value = serde_json::from_slice(&output.stdout).unwrap();
    assert_eq!(body["gape"]["finite"], serde_json::json!(false));
    assert_eq!(body["solvency_bound"], serde_json::json!(-0.0625));
    assert!(body["gape"]["payback_proportion"].as_f64().unwrap() < 1.0);
    assert_eq!(body["peg_payback_years"], serde_json::Value::Null);
}

#[test]
fn metric_zero_growth_equals_pe() {
    let output = gape(&["metric", "--price", "10", "--eps", "1", "--growth", "0"]);
    assert_eq!(output.status.code(), Some(0));
    let body: serde_json::Value = serde_json::from_slice(&output.stdout).unwrap();
    assert_eq!(body["gape"]["years"], serde_json::json!(10.0));
}

#[test]
fn metric_accepts_eps_history() {
    let output = gape(&[
        "metric",
        "--price",
        "10",
        "--eps-history",
        "0.8,1.0,1.21",
        "--window",
        "2",
    ]);
    assert_eq!(output.status.code(), Some(0));
    let body: serde_json::Value = serde_json::from_slice(&output.stdout).unwrap();
    // growth = (1.21/0.8)^(1/2) - 1, eps = 1.21
    let growth = body["growth"].as_f64().unwrap();
    assert!((growth - ((1.21f64 / 0.8).sqrt() - 1.0)).abs() < 1e-12);
    assert_eq!(body["eps"], serde_json::json!(1.21));
}

#[test]
fn metric_bad_domain_is_usage_error() {
    let output = gape(&["metric", "--price", "10", "--eps", "-1", "--growth", "0.1"]);
    assert_eq!(output.status.code(), Some(3));
    let output = gape(&["metric", "--price", "10", "--eps", "1"]);
    assert_eq!(output.status.code(), Some(3));
}

#[test]
fn unknown_flag_is_usage_error() {
    let output = gape(&["metric", "--price", "10", "--bogus", "1"]);
    assert_eq!(output.status.code(), Some(3));
    let output = gape(&["nonsense"]);
    assert_eq!(output.status.code(), Some(3));
}

#[test]
fn help_exits_zero() {
    let output = gape(&["--help"]);
    assert_eq!(output.status.code(), Some(0));
}

#[test]
fn validate_clean_orphan_and_overlap_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    write_fixture(dir.path(), 0.01, 11);
    let data = dir.path().to_str().unwrap();

    let output = gape(&["validate", "--data-dir", data]);
    assert_eq!(output.status.code(), Some(0), "{output:?}");

    // Orphan security: a price row with no link.
    let prices = dir.path().join("prices.csv");
    let mut contents = std::fs::read_to_string(&prices).unwrap();
    contents.push_str("ZZZZ,1995-01,10.0,0.01,50.0\n");
    std::fs::write(&prices, &contents).unwrap();
    let output = gape(&["validate", "--data-dir", data]);
    assert_eq!(output.status.code(), Some(1), "{output:?}");
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("orphan_security"), "{stdout}");
    assert!(stdout.contains("ZZZZ"), "{stdout}");

    // Overlapping links: hard error.
    let links = dir.path().join("links.csv");
    let mut contents = std::fs::read_to_string(&links).unwrap();
    contents.push_str("F9999,S0001,1990-01,\n");
    std::fs::write(&links, &contents).unwrap();
    let output = gape(&["validate", "--data-dir", data]);
    assert_eq!(output.status.code(), Some(2), "{output:?}");

    // Missing directory entirely: hard error.
    let output = gape(&["validate", "--data-dir", "/nonexistent/nowhere"]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn backtest_honors_config_file_with_flag_override() {
    let data_dir = tempfile::tempdir().unwrap();
    write_fixture(data_dir.path(), 0.01, 13);
    let out_a = tempfile::tempdir().unwrap();
    let out_b = tempfile::tempdir().unwrap();

    let config_path = data_dir.path().join("run.conf");
    std::fs::write(
        &config_path,
        format!(
            "data_dir = {}\nformation_years = 1996..1998\nwindows = 1,2\nquantiles = 4\noutput_dir = {}\n",
            data_dir.path().display(),
            out_a.path().display(),
        ),
    )
    .unwrap();

    let output = gape(&["backtest", "--config", config_path.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(0), "{output:?}");
    let annual = std::fs::read_to_string(out_a.path().join("annual_returns.csv")).unwrap();
    assert!(annual.lines().next().unwrap().ends_with("P_4"), "{annual}");

    // Flag overrides quantiles from the file.
    let output = gape(&[
        "backtest",
        "--config",
        config_path.to_str().unwrap(),
        "--quantiles",
        "5",
        "--output-dir",
        out_b.path().to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(0), "{output:?}");
    let annual = std::fs::read_to_string(out_b.path().join("annual_returns.csv")).unwrap();
    assert!(annual.lines().next().unwrap().ends_with("P_5"), "{annual}");
}

#[test]
fn backtest_missing_required_config_is_usage_error() {
    let output = gape(&["backtest", "--formation-years", "1996..1998"]);
    assert_eq!(output.status.code(), Some(3));
}

#[test]
fn backtest_out_of_range_knobs_are_usage_errors() {
    let base = [
        "backtest",
        "--data-dir",
        "/data",
        "--output-dir",
        "/out",
        "--formation-years",
        "1996..1998",
    ];
    for extra in [
        ["--formation-month", "13"],
        ["--quantiles", "1"],
        ["--windows", "0,1"],
        ["--cap-sweep", "0,50"],
    ] {
        let mut args: Vec<&str> = base.to_vec();
        args.extend(extra);
        let output = gape(&args);
        assert_eq!(output.status.code(), Some(3), "{args:?} -> {output:?}");
    }
}

#[test]
fn synth_rejects_infeasible_spec_as_usage() {
    let dir = tempfile::tempdir().unwrap();
    let spec_path = dir.path().join("spec.json");
    let mut spec = SyntheticSpec::quintile_demo(40, ym(1995, 1), 60, 0.01);
    spec.months = 6;
    std::fs::write(&spec_path, serde_json::to_string(&spec).unwrap()).unwrap();
    let output = gape(&[
        "synth",
        "--spec-file",
        spec_path.to_str().unwrap(),
        "--output-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(3), "{output:?}");

    let output = gape(&[
        "synth",
        "--spec-file",
        "/nonexistent/spec.json",
        "--output-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn synth_then_validate_then_backtest_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let spec_path = dir.path().join("spec.json");
    let spec = SyntheticSpec::quintile_demo(40, ym(1995, 1), 60, 0.005);
    std::fs::write(&spec_path, serde_json::to_string(&spec).unwrap()).unwrap();

    let data = dir.path().join("data");
    let output = gape(&[
        "synth",
        "--spec-file",
        spec_path.to_str().unwrap(),
        "--seed",
        "3",
        "--output-dir",
        data.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(0), "{output:?}");
    assert!(data.join("manifest.json").exists());

    let output = gape(&["validate", "--data-dir", data.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(0), "{output:?}");

    let out = dir.path().join("out");
    let output = gape(&[
        "backtest",
        "--data-dir",
        data.to_str().unwrap(),
        "--output-dir",
        out.to_str().unwrap(),
        "--formation-years",
        "1996..1998",
        "--returns-mode",
        "price-only",
    ]);
    assert_eq!(output.status.code(), Some(0), "{output:?}");
    assert!(out.join("run_manifest.json").exists());
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("run_manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["config"]["returns_mode"], "price_only");
    assert_eq!(manifest["input_digests"].as_object().unwrap().len(), 5);
}
