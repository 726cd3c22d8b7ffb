//! CLI acceptance: selftest determinism, exit codes, and schema round-trips
//! of every JSON report.

use std::process::{Command, Output};

mod schema;

fn probsum(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_probsum"))
        .args(args)
        .env_remove("PROBSUM_CONFIG")
        .output()
        .expect("binary runs")
}

fn stdout_json(output: &Output) -> serde_json::Value {
    assert!(
        !output.stdout.is_empty(),
        "no stdout; stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    serde_json::from_slice(&output.stdout).expect("stdout parses as JSON")
}

fn exit_code(output: &Output) -> i32 {
    output.status.code().expect("no signal exit")
}

fn check_schema(value: &serde_json::Value, schema_file: &str) {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../schemas/");
    let text = std::fs::read_to_string(format!("{path}{schema_file}"))
        .unwrap_or_else(|e| panic!("read {schema_file}: {e}"));
    let schema: serde_json::Value = serde_json::from_str(&text).unwrap();
    if let Err(violations) = schema::validate(value, &schema) {
        panic!("{schema_file} violations: {violations:#?}\nvalue: {value}");
    }
}

/// Criterion 8: `selftest --seed 42` run twice yields byte-identical JSON,
/// with every check green.
#[test]
fn criterion_8_selftest_is_deterministic() {
    let first = probsum(&["selftest", "--seed", "42"]);
    let second = probsum(&["selftest", "--seed", "42"]);
    assert_eq!(
        exit_code(&first),
        0,
        "stderr: {}",
        String::from_utf8_lossy(&first.stderr)
    );
    assert_eq!(
        first.stdout, second.stdout,
        "selftest output must be byte-identical"
    );

    let report = stdout_json(&first);
    check_schema(&report, "selftest_output.schema.json");
    assert_eq!(report["all_pass"], serde_json::Value::Bool(true));
    println!("acceptance selftest-determinism: pass");
}

#[test]
fn moments_output_round_trips_and_exits_clean() {
    let out = probsum(&[
        "moments",
        "--dist",
        r#"{"kind":"poisson","lambda":1}"#,
        "--orders",
        "1,2,3",
    ]);
    assert_eq!(exit_code(&out), 0);
    let value = stdout_json(&out);
    check_schema(&value, "moments_output.schema.json");
    for report in value["reports"].as_array().unwrap() {
        for route in ["direct", "tail_sum", "pgf"] {
            let v = report[route].as_f64().unwrap();
            assert!((v - 1.0).abs() < 1e-9, "{route} = {v}");
        }
    }
}

#[test]
fn moments_point_mass_is_exact() {
    let out = probsum(&[
        "moments",
        "--dist",
        r#"{"kind":"table","offset":3,"pmf":[1.0]}"#,
        "--orders",
        "2",
    ]);
    assert_eq!(exit_code(&out), 0);
    let value = stdout_json(&out);
    assert_eq!(value["reports"][0]["direct"].as_f64().unwrap(), 6.0);
    assert_eq!(value["reports"][0]["pgf"].as_f64().unwrap(), 6.0);
}

#[test]
fn signed_support_reports_absent_pgf_and_exit_2() {
    // The survival-weighted formula assumes nonnegative support, so the
    // routes genuinely disagree here; the report is still written.
    let out = probsum(&[
        "moments",
        "--dist",
        r#"{"kind":"table","offset":-1,"pmf":[0.7,0.0,0.3]}"#,
        "--orders",
        "1",
    ]);
    assert_eq!(exit_code(&out), 2);
    let value = stdout_json(&out);
    check_schema(&value, "moments_output.schema.json");
    let report = &value["reports"][0];
    assert!(report["pgf"].is_null());
    assert!((report["direct"].as_f64().unwrap() + 0.4).abs() < 1e-12);
    assert!((report["tail_sum"].as_f64().unwrap() - 0.3).abs() < 1e-12);
}

#[test]
fn malformed_descriptor_is_a_usage_error() {
    let out = probsum(&["moments", "--dist", "{not json", "--orders", "1"]);
    assert_eq!(exit_code(&out), 1);
    let out = probsum(&[
        "moments",
        "--dist",
        r#"{"kind":"poisson","lambda":-1}"#,
        "--orders",
        "1",
    ]);
    assert_eq!(exit_code(&out), 1);
    let out = probsum(&["nonsense-subcommand"]);
    assert_eq!(exit_code(&out), 1);
}

#[test]
fn bound_output_round_trips() {
    let out = probsum(&[
        "bound",
        "--dist",
        r#"{"kind":"poisson","lambda":1}"#,
        "--x",
        "1,2,5",
    ]);
    assert_eq!(exit_code(&out), 0);
    let value = stdout_json(&out);
    check_schema(&value, "bound_output.schema.json");
    let results = value["results"].as_array().unwrap();
    assert_eq!(results.len(), 3);
    let at_five = &results[2];
    assert_eq!(at_five["best_N"].as_u64().unwrap(), 3);
    assert!((at_five["bound"].as_f64().unwrap() - 1.0 / 120.0).abs() < 1e-9);
}

#[test]
fn bound_rejects_nonpositive_x() {
    let out = probsum(&[
        "bound",
        "--dist",
        r#"{"kind":"poisson","lambda":1}"#,
        "--x",
        "0",
    ]);
    assert_eq!(exit_code(&out), 1);
}

#[test]
fn bound_csv_profile_parses() {
    let out = probsum(&[
        "bound",
        "--dist",
        r#"{"kind":"geometric","p":0.5}"#,
        "--x",
        "1,2,3",
        "--output",
        "csv",
    ]);
    assert_eq!(exit_code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "x,best_N,bound,clamped");
    assert_eq!(lines.count(), 3);
}

#[test]
fn identity_outputs_round_trip() {
    let leq = probsum(&[
        "identity",
        "leq",
        "--dist-x",
        r#"{"kind":"bernoulli","p":0.5}"#,
        "--dist-y",
        r#"{"kind":"bernoulli","p":0.5}"#,
    ]);
    assert_eq!(exit_code(&leq), 0);
    let value = stdout_json(&leq);
    check_schema(&value, "identity_output.schema.json");
    assert!(value["abs_diff"].as_f64().unwrap() < 1e-12);
    assert!((value["interpretation"].as_f64().unwrap() - 0.75).abs() < 1e-12);

    let abel = probsum(&[
        "identity",
        "abel",
        "--dist",
        r#"{"kind":"poisson","lambda":1}"#,
        "--z",
        "0",
    ]);
    assert_eq!(exit_code(&abel), 0);
    let value = stdout_json(&abel);
    check_schema(&value, "identity_output.schema.json");
    assert!(value["abs_diff"].as_f64().unwrap() < 1e-15);

    let twoseq = probsum(&["identity", "twoseq", "--pair", "geometric-demo"]);
    assert_eq!(exit_code(&twoseq), 0);
    let value = stdout_json(&twoseq);
    check_schema(&value, "identity_output.schema.json");
    assert!(value["abs_diff"].as_f64().unwrap() < 1e-9);
    assert!(value["interpretation"].is_null());
}

#[test]
fn walk_output_round_trips_and_is_deterministic() {
    let args = [
        "walk",
        "--step",
        r#"{"kind":"table","offset":-1,"pmf":[0.7,0.0,0.3]}"#,
        "--horizon",
        "100",
        "--replicates",
        "30000",
        "--seed",
        "42",
        "--orders",
        "1,2",
    ];
    let first = probsum(&args);
    assert_eq!(
        exit_code(&first),
        0,
        "stderr: {}",
        String::from_utf8_lossy(&first.stderr)
    );
    let value = stdout_json(&first);
    check_schema(&value, "walk_output.schema.json");
    assert_eq!(value["stats"]["replicates"].as_u64().unwrap(), 30000);
    assert_eq!(
        value["equidistribution"]["all_pass"],
        serde_json::Value::Bool(true)
    );

    let second = probsum(&args);
    assert_eq!(first.stdout, second.stdout);

    // Thread cap must not change the numbers.
    let mut threaded_args = args.to_vec();
    threaded_args.extend(["--threads", "2"]);
    let threaded = probsum(&threaded_args);
    assert_eq!(first.stdout, threaded.stdout);
}

#[test]
fn zero_drift_walk_exits_with_gate_code() {
    let out = probsum(&[
        "walk",
        "--step",
        r#"{"kind":"table","offset":-1,"pmf":[0.5,0.0,0.5]}"#,
        "--horizon",
        "100",
        "--replicates",
        "20000",
        "--seed",
        "42",
    ]);
    assert_eq!(exit_code(&out), 3);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("convergence"), "stderr: {stderr}");
}

#[test]
fn walk_csv_histogram_parses() {
    let out = probsum(&[
        "walk",
        "--step",
        r#"{"kind":"table","offset":-1,"pmf":[0.7,0.0,0.3]}"#,
        "--horizon",
        "100",
        "--replicates",
        "5000",
        "--seed",
        "1",
        "--output",
        "csv",
    ]);
    assert_eq!(
        exit_code(&out),
        0,
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "value,eta_count,t_count");
    let mut eta_total = 0u64;
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 3);
        eta_total += fields[1].parse::<u64>().unwrap();
    }
    assert_eq!(eta_total, 5000);
}

#[test]
fn walk_without_negative_support_needs_a_drift_note() {
    let step = r#"{"kind":"table","offset":1,"pmf":[1.0]}"#;
    let refused = probsum(&[
        "walk",
        "--step",
        step,
        "--horizon",
        "5",
        "--replicates",
        "100",
        "--seed",
        "1",
    ]);
    assert_eq!(exit_code(&refused), 1);

    let allowed = probsum(&[
        "walk",
        "--step",
        step,
        "--horizon",
        "5",
        "--replicates",
        "100",
        "--seed",
        "1",
        "--orders",
        "1",
        "--drift-note",
        "deterministic upward walk",
        "--gate",
        "1.5",
    ]);
    assert_eq!(
        exit_code(&allowed),
        0,
        "stderr: {}",
        String::from_utf8_lossy(&allowed.stderr)
    );
    let value = stdout_json(&allowed);
    // Strictly increasing walk: everything concentrates at the horizon.
    assert_eq!(value["stats"]["eta_hist"][5].as_u64().unwrap(), 100);
    assert_eq!(value["stats"]["t_hist"][5].as_u64().unwrap(), 100);
}

#[test]
fn stopped_output_round_trips() {
    let wald = probsum(&[
        "stopped",
        "--model",
        "wald-iid",
        "--rule",
        r#"{"kind":"independent","dist":{"kind":"geometric","p":0.3333333333333333},"shift":1}"#,
        "--replicates",
        "100000",
        "--seed",
        "7",
    ]);
    assert_eq!(exit_code(&wald), 0);
    let value = stdout_json(&wald);
    check_schema(&value, "stopped_output.schema.json");
    assert!((value["series_weighted"].as_f64().unwrap() - 6.0).abs() < 1e-9);
    assert!((value["series_rearranged"].as_f64().unwrap() - 6.0).abs() < 1e-9);
    assert_eq!(value["certified"], serde_json::Value::Bool(true));
    assert!(value["mc_sigma_distance"].as_f64().unwrap() <= 3.0);
}

#[test]
fn stopped_threshold_rule_is_uncertified() {
    let out = probsum(&[
        "stopped",
        "--model",
        r#"{"means":{"limit":0.5},"step":"bernoulli"}"#,
        "--rule",
        r#"{"kind":"threshold","level":5,"cap":10000}"#,
        "--replicates",
        "20000",
        "--seed",
        "7",
    ]);
    assert_eq!(exit_code(&out), 0);
    let value = stdout_json(&out);
    check_schema(&value, "stopped_output.schema.json");
    assert_eq!(value["certified"], serde_json::Value::Bool(false));
    assert!(value["series_std_error"].as_f64().unwrap() > 0.0);
    // Steps in {0,1} cannot overshoot the integer level.
    assert_eq!(value["mc_estimate"].as_f64().unwrap(), 5.0);
}

#[test]
fn config_file_supplies_defaults() {
    let dir = std::env::temp_dir().join("probsum-config-test");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("config.json");
    std::fs::write(&path, r#"{"output":"pretty","seed":9}"#).unwrap();

    let out = Command::new(env!("CARGO_BIN_EXE_probsum"))
        .args(["identity", "twoseq", "--pair", "geometric-demo"])
        .env("PROBSUM_CONFIG", &path)
        .output()
        .unwrap();
    assert_eq!(exit_code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(
        text.starts_with("twoseq:"),
        "expected pretty output, got {text}"
    );

    // Flags still win over the file.
    let out = Command::new(env!("CARGO_BIN_EXE_probsum"))
        .args([
            "identity",
            "twoseq",
            "--pair",
            "geometric-demo",
            "--output",
            "json",
        ])
        .env("PROBSUM_CONFIG", &path)
        .output()
        .unwrap();
    assert!(serde_json::from_slice::<serde_json::Value>(&out.stdout).is_ok());
}

#[test]
fn descriptor_can_come_from_a_file() {
    let dir = std::env::temp_dir().join("probsum-descriptor-test");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("dist.json");
    std::fs::write(&path, r#"{"kind":"geometric","p":0.5}"#).unwrap();

    let out = probsum(&["moments", "--dist", path.to_str().unwrap(), "--orders", "2"]);
    assert_eq!(exit_code(&out), 0);
    let value = stdout_json(&out);
    assert!((value["reports"][0]["direct"].as_f64().unwrap() - 2.0).abs() < 1e-9);
}

#[test]
fn out_flag_writes_the_report_to_a_file() {
    let dir = std::env::temp_dir().join("probsum-out-test");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("report.json");
    let out = probsum(&[
        "identity",
        "abel",
        "--dist",
        r#"{"kind":"bernoulli","p":0.5}"#,
        "--z",
        "0.5",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0);
    assert!(out.stdout.is_empty());
    let value: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert!((value["lhs"].as_f64().unwrap() - 0.75).abs() < 1e-12);
}

#[test]
fn renormalization_is_recorded_in_output_metadata() {
    let out = probsum(&[
        "moments",
        "--dist",
        r#"{"kind":"table","offset":0,"pmf":[0.5,0.5000000004]}"#,
        "--orders",
        "1",
    ]);
    assert_eq!(exit_code(&out), 0);
    let value = stdout_json(&out);
    let adj = value["renormalization"].as_f64().unwrap();
    assert!(adj > 0.0 && adj < 1e-9);
}
