//! End-to-end tests of the `ratemig` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use chrono::NaiveDate;
use ratemig_core::diagnostics::likelihood_distance;
use ratemig_core::estimators::{cohort_estimate, count_window, generator_estimate};
use ratemig_core::expm::matrix_exponential;
use ratemig_core::ingest::{parse_history_file, IngestConfig};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_ratemig")
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn run_ok(dir: &Path, args: &[&str]) -> Output {
    let output = run_in(dir, args);
    assert!(
        output.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    output
}

fn json_file(path: PathBuf) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(&path).unwrap_or_else(|e| {
        panic!("cannot read {}: {e}", path.display());
    }))
    .expect("valid json")
}

#[test]
fn simulate_with_zero_entities_writes_an_empty_valid_csv() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(dir.path(), &["simulate", "--entities", "0", "--out", "empty.csv"]);
    let text = std::fs::read_to_string(dir.path().join("empty.csv")).unwrap();
    assert_eq!(text, "entity_id,date,grade\n");
    assert!(dir.path().join("empty.manifest.json").exists());
}

#[test]
fn simulated_file_estimates_without_warnings() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(dir.path(), &["simulate", "--entities", "120", "--seed", "3", "--out", "s.csv"]);
    let output = run_ok(
        dir.path(),
        &["estimate", "--input", "s.csv", "--at", "2010-01-01", "--out", "est"],
    );
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.trim().is_empty(), "unexpected warnings: {stderr}");
}

#[test]
fn estimate_all_methods_emits_consistent_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(dir.path(), &["simulate", "--entities", "200", "--seed", "8", "--out", "s.csv"]);
    run_ok(
        dir.path(),
        &["estimate", "--input", "s.csv", "--at", "2011-06-01", "--states", "4", "--out", "est"],
    );
    let stems = [
        ("transition_cohort", "cohort"),
        ("generator", "generator"),
        ("transition_generator", "generator_exp"),
        ("transition_chapman_kolmogorov", "chapman_kolmogorov"),
    ];
    for (stem, method) in stems {
        let doc = json_file(dir.path().join("est").join(format!("{stem}.json")));
        assert_eq!(doc["method"], method);
        assert_eq!(doc["n"], 4);
        assert_eq!(doc["t"], "2011-06-01");
        assert_eq!(doc["tau_days"], 365);
        assert_eq!(doc["rows"].as_array().unwrap().len(), 4);
        assert!(dir.path().join("est").join(format!("{stem}.csv")).exists());
    }
    let manifest = json_file(dir.path().join("est").join("manifest.json"));
    assert_eq!(manifest["command"], "estimate");
    assert_eq!(manifest["states"], 4);
}

#[test]
fn estimate_matches_the_library_result() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(dir.path(), &["simulate", "--entities", "150", "--seed", "21", "--out", "s.csv"]);
    run_ok(
        dir.path(),
        &["estimate", "--input", "s.csv", "--at", "2010-01-01", "--method", "cohort", "--out", "est"],
    );
    let doc = json_file(dir.path().join("est").join("transition_cohort.json"));

    let config = IngestConfig::default();
    let histories = parse_history_file(dir.path().join("s.csv"), &config).unwrap();
    let t = NaiveDate::from_ymd_opt(2010, 1, 1).unwrap();
    let counts = count_window::<f64>(&histories, 15, t, 365, 365.0).unwrap();
    let expected = cohort_estimate(&counts).unwrap();
    for i in 0..15 {
        for j in 0..15 {
            let value = doc["rows"][i][j].as_f64().unwrap();
            assert_eq!(value.to_bits(), expected.get(i, j).to_bits());
        }
    }
}

#[test]
fn one_date_grid_equals_estimate_plus_direct_distance() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(dir.path(), &["simulate", "--entities", "250", "--seed", "14", "--out", "s.csv"]);
    run_ok(
        dir.path(),
        &[
            "compare", "--input", "s.csv", "--states", "15", "--baseline", "15", "--from",
            "2010-06-01", "--to", "2010-06-01", "--out", "cmp",
        ],
    );
    let doc = json_file(dir.path().join("cmp").join("diagnostics.json"));
    let d_prime_series = doc["series"]
        .as_array()
        .unwrap()
        .iter()
        .find(|s| s["metric"] == "d_prime" && s["n_states"] == 15)
        .expect("d_prime series present");
    let points = d_prime_series["points"].as_array().unwrap();
    assert_eq!(points.len(), 1);
    let emitted = points[0]["value"].as_f64().unwrap();

    let config = IngestConfig::default();
    let histories = parse_history_file(dir.path().join("s.csv"), &config).unwrap();
    let t = NaiveDate::from_ymd_opt(2010, 6, 1).unwrap();
    let counts = count_window::<f64>(&histories, 15, t, 365, 365.0).unwrap();
    let cohort = cohort_estimate(&counts).unwrap();
    let exp_estimate = matrix_exponential(&generator_estimate(&counts).unwrap(), 1.0).unwrap();
    let expected = likelihood_distance(&counts, &cohort, &exp_estimate).unwrap().value;
    assert_eq!(emitted.to_bits(), expected.to_bits());
}

#[test]
fn windows_before_data_start_emit_gap_markers() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(dir.path(), &["simulate", "--entities", "80", "--seed", "5", "--out", "s.csv"]);
    run_ok(
        dir.path(),
        &[
            "compare", "--input", "s.csv", "--states", "15", "--from", "2007-06-01", "--to",
            "2008-06-01", "--out", "cmp",
        ],
    );
    let csv = std::fs::read_to_string(dir.path().join("cmp").join("diagnostics.csv")).unwrap();
    let gap_rows: Vec<&str> = csv.lines().filter(|l| l.ends_with(",empty_window")).collect();
    assert!(
        gap_rows.iter().any(|l| l.starts_with("2007-06-01,d_prime")),
        "expected an empty_window gap at the first grid date:\n{csv}"
    );
}

#[test]
fn sweep_deltas_recompute_from_emitted_distances() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(dir.path(), &["simulate", "--entities", "300", "--seed", "77", "--out", "s.csv"]);
    run_ok(
        dir.path(),
        &[
            "sweep-states", "--input", "s.csv", "--states", "2,4,8,15", "--grid", "28d", "--out",
            "sweep",
        ],
    );
    let distances = json_file(dir.path().join("sweep").join("distances.json"));
    let deltas = json_file(dir.path().join("sweep").join("deltas.json"));
    let series = |doc: &serde_json::Value, metric: &str, n: u64| -> Vec<Option<f64>> {
        doc["series"]
            .as_array()
            .unwrap()
            .iter()
            .find(|s| s["metric"] == metric && s["n_states"] == n)
            .unwrap_or_else(|| panic!("missing {metric} at {n}"))["points"]
            .as_array()
            .unwrap()
            .iter()
            .map(|p| p["value"].as_f64())
            .collect()
    };
    for (d_metric, delta_metric) in [("d_prime", "delta_prime"), ("d_bar", "delta_bar")] {
        let baseline = series(&distances, d_metric, 15);
        for n in [2u64, 4, 8] {
            let coarse = series(&distances, d_metric, n);
            let emitted = series(&deltas, delta_metric, n);
            for ((base, coarse), emitted) in baseline.iter().zip(&coarse).zip(&emitted) {
                match (base, coarse, emitted) {
                    (Some(b), Some(c), Some(e)) => {
                        let recomputed = (b - c) / b;
                        assert_eq!(recomputed.to_bits(), e.to_bits());
                    }
                    (_, _, None) => {}
                    other => panic!("value/gap mismatch: {other:?}"),
                }
            }
        }
    }
}

#[test]
fn sweep_with_baseline_only_writes_an_explanatory_note() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(dir.path(), &["simulate", "--entities", "60", "--seed", "2", "--out", "s.csv"]);
    run_ok(
        dir.path(),
        &["sweep-states", "--input", "s.csv", "--states", "15", "--grid", "28d", "--out", "sweep"],
    );
    let deltas = json_file(dir.path().join("sweep").join("deltas.json"));
    assert!(deltas["note"].as_str().unwrap().contains("baseline"));
    assert!(deltas["series"].as_array().unwrap().is_empty());
    let csv = std::fs::read_to_string(dir.path().join("sweep").join("deltas.csv")).unwrap();
    assert_eq!(csv, "date,metric,n_states,value,gap_reason\n");
}

#[test]
fn sweep_without_baseline_fails_with_input_error() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(dir.path(), &["simulate", "--entities", "60", "--seed", "2", "--out", "s.csv"]);
    let output = run_in(
        dir.path(),
        &["sweep-states", "--input", "s.csv", "--states", "2,4,8", "--out", "sweep"],
    );
    assert_eq!(output.status.code(), Some(2));
    let err: serde_json::Value =
        serde_json::from_str(String::from_utf8_lossy(&output.stderr).trim()).unwrap();
    assert_eq!(err["kind"], "input");
}

#[test]
fn malformed_input_exits_2_with_machine_readable_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("bad.csv"),
        "entity_id,date,grade\nE1,2009-01-01,Z9\n",
    )
    .unwrap();
    let output = run_in(
        dir.path(),
        &["estimate", "--input", "bad.csv", "--at", "2010-01-01", "--out", "est"],
    );
    assert_eq!(output.status.code(), Some(2));
    let err: serde_json::Value =
        serde_json::from_str(String::from_utf8_lossy(&output.stderr).trim()).unwrap();
    assert_eq!(err["kind"], "input");
    assert!(err["error"].as_str().unwrap().contains("Z9"));
}

#[test]
fn empty_window_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("late.csv"),
        "entity_id,date,grade\nE1,2010-06-01,B\n",
    )
    .unwrap();
    let output = run_in(
        dir.path(),
        &["estimate", "--input", "late.csv", "--at", "2008-01-01", "--out", "est"],
    );
    assert_eq!(output.status.code(), Some(3));
    let err: serde_json::Value =
        serde_json::from_str(String::from_utf8_lossy(&output.stderr).trim()).unwrap();
    assert_eq!(err["kind"], "numeric");
}

#[test]
fn gzip_input_is_transparent() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(dir.path(), &["simulate", "--entities", "50", "--seed", "4", "--out", "s.csv"]);
    // Re-compress the sample and estimate from the .gz path.
    let raw = std::fs::read(dir.path().join("s.csv")).unwrap();
    let gz = std::fs::File::create(dir.path().join("s.csv.gz")).unwrap();
    let mut encoder = flate2::write::GzEncoder::new(gz, flate2::Compression::default());
    std::io::Write::write_all(&mut encoder, &raw).unwrap();
    encoder.finish().unwrap();

    run_ok(
        dir.path(),
        &["estimate", "--input", "s.csv", "--at", "2010-01-01", "--method", "cohort", "--out", "a"],
    );
    run_ok(
        dir.path(),
        &["estimate", "--input", "s.csv.gz", "--at", "2010-01-01", "--method", "cohort", "--out", "b"],
    );
    assert_eq!(
        std::fs::read(dir.path().join("a").join("transition_cohort.csv")).unwrap(),
        std::fs::read(dir.path().join("b").join("transition_cohort.csv")).unwrap()
    );
}

#[test]
fn simulate_params_file_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let params = r#"
        n = 4
        entities = 40
        start = "2007-01-01"
        horizon_days = 1500
        seed = 11
        [mode]
        kind = "second_order"
        p_mem = 0.7
        generator = [[-0.5, 0.3, 0.15, 0.05],
                     [0.3, -0.6, 0.25, 0.05],
                     [0.05, 0.3, -0.65, 0.3],
                     [0.02, 0.08, 0.4, -0.5]]
    "#;
    std::fs::write(dir.path().join("sim.toml"), params).unwrap();
    run_ok(dir.path(), &["simulate", "--params", "sim.toml", "--out", "s.csv"]);
    let manifest = json_file(dir.path().join("s.manifest.json"));
    assert_eq!(manifest["command"], "simulate");
    assert_eq!(manifest["scale"], "numeric:4");
    assert_eq!(manifest["mode"]["kind"], "second_order");

    // The manifest itself re-runs the simulation identically.
    run_ok(dir.path(), &["simulate", "--config", "s.manifest.json", "--out", "t.csv"]);
    assert_eq!(
        std::fs::read(dir.path().join("s.csv")).unwrap(),
        std::fs::read(dir.path().join("t.csv")).unwrap()
    );
}
