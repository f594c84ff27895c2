//! End-to-end tests of the `ehdstack` binary: exit codes, error JSON,
//! output files, and rerun determinism.

use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn ehdstack(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ehdstack"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write(dir: &Path, name: &str, contents: &str) {
    std::fs::write(dir.join(name), contents).unwrap();
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

const SINGLE_STAGE_META: &str =
    r#"{"stage_count":1,"drift_gap_m":1.07e-3,"gamma":2.0,"area_m2":1e-4,"label":"cli test"}"#;

/// Synthetic single-stage log: quadratic current above 1600 V, velocities
/// from the lossless forward model.
fn synthetic_csv(rows: usize) -> String {
    let eps0 = 8.854_187_812_8e-12;
    let (rho, d) = (1.20, 1.07e-3);
    let mut csv = String::from("time_s,voltage_V,current_A,velocity_mps\n");
    for k in 0..rows {
        let v = 800.0 + 45.0 * k as f64;
        let i = if v > 1600.0 {
            1e-9 * v * (v - 1600.0)
        } else {
            0.0
        };
        let e = v / d;
        let vel = (1.125 * eps0 * e * e / (0.5 * rho)).sqrt();
        csv.push_str(&format!("{k},{v},{i},{vel}\n"));
    }
    csv
}

// ---------- table1 ----------

#[test]
fn table1_prints_six_cells_and_exits_zero() {
    let dir = TempDir::new().unwrap();
    let out = ehdstack(dir.path(), &["table1"]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(
        text.contains("230.5 m/s"),
        "unexpected drift speed in: {text}"
    );
    for published in ["1.4", "3.3", "4.8", "21.1", "22.6", "23.8"] {
        assert!(
            text.contains(published),
            "missing cell {published} in: {text}"
        );
    }
    assert!(text.contains("max |error|"));
}

// ---------- predict ----------

#[test]
fn predict_four_stages_doubles_single_stage_outlet_velocity() {
    let dir = TempDir::new().unwrap();
    let one = ehdstack(
        dir.path(),
        &["predict", "--stages", "1", "--out", "one.json"],
    );
    assert!(one.status.success(), "stderr: {}", stderr(&one));
    let four = ehdstack(
        dir.path(),
        &["predict", "--stages", "4", "--out", "four.json"],
    );
    assert!(four.status.success(), "stderr: {}", stderr(&four));

    let v1 = read_json(&dir.path().join("one.json"))["stage_outlet_velocities_m_per_s"][0]
        .as_f64()
        .unwrap();
    let v4 = read_json(&dir.path().join("four.json"))["stage_outlet_velocities_m_per_s"][3]
        .as_f64()
        .unwrap();
    assert!((v4 / v1 - 2.0).abs() < 1e-9, "v4/v1 = {}", v4 / v1);
}

#[test]
fn predict_emits_sweep_csv_with_per_stage_columns() {
    let dir = TempDir::new().unwrap();
    let out = ehdstack(dir.path(), &["predict", "--stages", "3", "--out", "p.json"]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let csv = std::fs::read_to_string(dir.path().join("p.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    assert_eq!(
        header,
        "voltage_V,force_N,velocity_mps_stage1,velocity_mps_stage2,velocity_mps_stage3,efficiency_NpW"
    );
    assert_eq!(csv.lines().count(), 51); // header + default 50 sweep rows
}

#[test]
fn predict_reruns_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let args = [
        "predict", "--stages", "2", "--gap-mm", "0.8", "--out", "r.json",
    ];
    assert!(ehdstack(dir.path(), &args).status.success());
    let json_a = std::fs::read(dir.path().join("r.json")).unwrap();
    let csv_a = std::fs::read(dir.path().join("r.csv")).unwrap();
    assert!(ehdstack(dir.path(), &args).status.success());
    assert_eq!(json_a, std::fs::read(dir.path().join("r.json")).unwrap());
    assert_eq!(csv_a, std::fs::read(dir.path().join("r.csv")).unwrap());
}

// ---------- calibration subcommands ----------

#[test]
fn fit_onset_recovers_synthetic_parameters() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "log.csv", &synthetic_csv(50));
    write(dir.path(), "log.json", SINGLE_STAGE_META);
    let out = ehdstack(
        dir.path(),
        &["fit-onset", "--input", "log.csv", "--out", "onset.json"],
    );
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let fit = read_json(&dir.path().join("onset.json"));
    let v0 = fit["onset_voltage_v"].as_f64().unwrap();
    assert!((v0 - 1600.0).abs() < 2.0, "V0 = {v0}");
}

#[test]
fn fit_beta_single_input_fits_beta1() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "log.csv", &synthetic_csv(50));
    write(dir.path(), "log.json", SINGLE_STAGE_META);
    let out = ehdstack(
        dir.path(),
        &["fit-beta", "--input", "log.csv", "--out", "beta.json"],
    );
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let fit = read_json(&dir.path().join("beta.json"));
    let b1 = fit["fitted_beta1"].as_f64().unwrap();
    assert!((b1 - 1.0).abs() < 1e-6, "beta1 = {b1}");
}

#[test]
fn degradation_subcommand_reports_fraction() {
    let dir = TempDir::new().unwrap();
    let mut csv = String::from("time_s,voltage_V,current_A,velocity_mps\n");
    for k in 0..=200 {
        let t = 0.5 * k as f64;
        csv.push_str(&format!("{t},2000,{},\n", 1e-5 * (1.0 - 0.05 * t / 100.0)));
    }
    write(dir.path(), "decay.csv", &csv);
    write(dir.path(), "decay.json", SINGLE_STAGE_META);
    let out = ehdstack(
        dir.path(),
        &[
            "degradation",
            "--input",
            "decay.csv",
            "--window-s",
            "100",
            "--out",
            "deg.json",
        ],
    );
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let doc = read_json(&dir.path().join("deg.json"));
    let frac = doc["degradation_fraction"].as_f64().unwrap();
    assert!((frac - 0.05).abs() < 0.005, "fraction = {frac}");
}

// ---------- error contract ----------

#[test]
fn malformed_csv_row_names_line_17_in_error_json() {
    let dir = TempDir::new().unwrap();
    let mut csv = String::from("time_s,voltage_V,current_A,velocity_mps\n");
    for k in 0..15 {
        csv.push_str(&format!("{k},1500,1e-6,\n"));
    }
    csv.push_str("15,bogus,1e-6,\n"); // file line 17
    write(dir.path(), "bad.csv", &csv);
    write(dir.path(), "bad.json", SINGLE_STAGE_META);
    let out = ehdstack(dir.path(), &["fit-onset", "--input", "bad.csv"]);
    assert_eq!(out.status.code(), Some(2), "stderr: {}", stderr(&out));
    let doc: serde_json::Value = serde_json::from_str(&stderr(&out)).unwrap();
    assert_eq!(doc["error"]["kind"], "csv_parse");
    assert_eq!(doc["error"]["line"], 17);
}

#[test]
fn missing_input_is_a_precondition_error() {
    let dir = TempDir::new().unwrap();
    let out = ehdstack(dir.path(), &["fit-onset"]);
    assert_eq!(out.status.code(), Some(3));
    let doc: serde_json::Value = serde_json::from_str(&stderr(&out)).unwrap();
    assert_eq!(doc["error"]["kind"], "invalid_input");
}

#[test]
fn insufficient_data_is_a_fit_failure_exit() {
    let dir = TempDir::new().unwrap();
    let mut csv = String::from("time_s,voltage_V,current_A,velocity_mps\n");
    for k in 0..10 {
        csv.push_str(&format!("{k},1500,0.0,\n"));
    }
    write(dir.path(), "zero.csv", &csv);
    write(dir.path(), "zero.json", SINGLE_STAGE_META);
    let out = ehdstack(dir.path(), &["fit-onset", "--input", "zero.csv"]);
    assert_eq!(out.status.code(), Some(4), "stderr: {}", stderr(&out));
    let doc: serde_json::Value = serde_json::from_str(&stderr(&out)).unwrap();
    assert_eq!(doc["error"]["kind"], "insufficient_data");
}

// ---------- optimize ----------

const SPACE_JSON: &str = r#"{
  "stage_counts": {"min": 1, "max": 6},
  "drift_gap_m": {"min": 5e-4, "max": 2e-3, "points": 4},
  "drift_field_v_per_m": {"min": 5e5, "max": 2e6, "points": 5},
  "constraints": {"max_voltage_v": 3000.0}
}"#;

#[test]
fn optimize_writes_frontier_json_and_csv() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "space.json", SPACE_JSON);
    let out = ehdstack(
        dir.path(),
        &[
            "optimize",
            "--config",
            "space.json",
            "--weight",
            "1.0",
            "--out",
            "front.json",
        ],
    );
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let doc = read_json(&dir.path().join("front.json"));
    let points = doc["points"].as_array().unwrap();
    assert!(!points.is_empty());
    // w = 1 picks the max-force-density point, which is first in canonical
    // order.
    assert_eq!(
        doc["selected"]["force_density_n_per_m3"],
        points[0]["force_density_n_per_m3"]
    );
    let csv = std::fs::read_to_string(dir.path().join("front.csv")).unwrap();
    assert_eq!(csv.lines().count(), points.len() + 1);
}

#[test]
fn optimize_is_deterministic_across_thread_counts() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "space.json", SPACE_JSON);
    for (threads, name) in [("1", "a.json"), ("4", "b.json")] {
        let out = Command::new(env!("CARGO_BIN_EXE_ehdstack"))
            .args(["optimize", "--config", "space.json", "--out", name])
            .env("EHD_STACK_THREADS", threads)
            .current_dir(dir.path())
            .output()
            .unwrap();
        assert!(out.status.success(), "stderr: {}", stderr(&out));
    }
    let a = std::fs::read(dir.path().join("a.json")).unwrap();
    let b = std::fs::read(dir.path().join("b.json")).unwrap();
    assert_eq!(a, b, "frontier differs across thread counts");
}

#[test]
fn optimize_empty_feasible_set_exits_five() {
    let dir = TempDir::new().unwrap();
    write(
        dir.path(),
        "space.json",
        r#"{
          "stage_counts": {"min": 1, "max": 2},
          "drift_gap_m": {"min": 1e-3, "max": 1e-3, "points": 1},
          "drift_field_v_per_m": {"min": 1e6, "max": 1e6, "points": 1},
          "constraints": {"max_voltage_v": 0.001}
        }"#,
    );
    let out = ehdstack(dir.path(), &["optimize", "--config", "space.json"]);
    assert_eq!(out.status.code(), Some(5), "stderr: {}", stderr(&out));
    let doc: serde_json::Value = serde_json::from_str(&stderr(&out)).unwrap();
    assert_eq!(doc["error"]["kind"], "empty_feasible_set");
}

// ---------- report ----------

#[test]
fn report_defaults_to_published_peaks() {
    let dir = TempDir::new().unwrap();
    let out = ehdstack(dir.path(), &["report", "--out", "cons.json"]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let doc = read_json(&dir.path().join("cons.json"));
    let gap = doc["implied_drift_gap_m"].as_f64().unwrap();
    assert!((gap - 1.07e-3).abs() < 1e-5, "implied gap = {gap}");
    assert_eq!(
        doc["implied_bulk_efficiency_n_per_w"].as_f64().unwrap(),
        0.5
    );
    assert!(!doc["notices"].as_array().unwrap().is_empty());
}
