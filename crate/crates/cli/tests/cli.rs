//! End-to-end checks of the harness: config validation, artifact shapes,
//! determinism, and the binary's exit codes.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::{json, Value};
use tempfile::TempDir;

use outflux_cli::config::parse_config;
use outflux_cli::{execute, CliError, Invocation, Verb};

fn channel_config() -> Value {
    json!({
        "version": 1,
        "domain": {
            "profile": {"kind": "constant", "value": 0.5},
            "l1": 1.0,
            "l2": 1.0
        },
        "law": {"p": 3.0, "t": [2.0]},
        "flux": 0.1,
        "mesh_h": 0.2,
        "window_t": 1.0
    })
}

fn write_config(dir: &Path, cfg: &Value) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    path
}

fn invoke(verb: Verb, config: &Path, out: &Path) -> Result<i32, CliError> {
    invoke_threads(verb, config, out, 1)
}

fn invoke_threads(
    verb: Verb,
    config: &Path,
    out: &Path,
    threads: usize,
) -> Result<i32, CliError> {
    execute(&Invocation {
        verb,
        config_path: config.to_path_buf(),
        out: Some(out.to_path_buf()),
        seed: None,
        threads,
    })
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_rows(path: &Path) -> (String, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().to_string();
    let rows = lines
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect();
    (header, rows)
}

#[test]
fn parse_rejects_unknown_and_missing_fields() {
    let mut cfg = channel_config();
    cfg["extra"] = json!(1);
    let err = parse_config(&cfg.to_string()).unwrap_err();
    assert!(err.to_string().contains("extra"), "{err}");

    let mut cfg = channel_config();
    cfg["law"]["gamma"] = json!(0.5);
    assert!(parse_config(&cfg.to_string()).is_err());

    let mut cfg = channel_config();
    cfg.as_object_mut().unwrap().remove("version");
    let err = parse_config(&cfg.to_string()).unwrap_err();
    assert!(err.to_string().contains("version"), "{err}");
}

#[test]
fn mismatched_widths_fail_by_name() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = channel_config();
    cfg["domain"]["l1"] = json!(2.0);
    let path = write_config(tmp.path(), &cfg);
    let err = invoke(Verb::Run, &path, &tmp.path().join("out")).unwrap_err();
    assert!(matches!(err, CliError::Config(_)));
    assert!(err.to_string().contains("l1"), "{err}");
}

#[test]
fn missing_out_dir_is_an_error() {
    let tmp = TempDir::new().unwrap();
    let path = write_config(tmp.path(), &channel_config());
    let err = execute(&Invocation {
        verb: Verb::Run,
        config_path: path,
        out: None,
        seed: None,
        threads: 1,
    })
    .unwrap_err();
    assert!(err.to_string().contains("out_dir"), "{err}");
}

#[test]
fn schedule_shorter_than_window_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = channel_config();
    cfg["window_t"] = json!(1.5);
    let path = write_config(tmp.path(), &cfg);
    let err = invoke(Verb::Run, &path, &tmp.path().join("out")).unwrap_err();
    assert!(err.to_string().contains("window_t"), "{err}");
}

#[test]
fn zero_flux_run_settles_immediately() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = channel_config();
    cfg["flux"] = json!(0.0);
    let path = write_config(tmp.path(), &cfg);
    let out = tmp.path().join("out");
    let code = invoke(Verb::Run, &path, &out).unwrap();
    assert_eq!(code, 0);

    let summary = read_json(&out.join("summary.json"));
    assert_eq!(summary["verdicts"]["converged"], json!(true));
    assert!(summary["iterations_total"].as_u64().unwrap() <= 1);
    assert!(summary["measured_flux"].as_f64().unwrap().abs() <= 1e-10);

    let (header, rows) = csv_rows(&out.join("diagnostics.csv"));
    assert_eq!(header, "t,y2,yp,z,zprime,slice1,slice2");
    assert_eq!(rows.len(), 9);
    for row in &rows {
        for cell in &row[1..5] {
            assert!(cell.parse::<f64>().unwrap().abs() <= 1e-12);
        }
    }
    assert!(out.join("solution.vtk").is_file());
    assert!(out.join("iterations.jsonl").is_file());
}

#[test]
fn rerun_artifacts_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let path = write_config(tmp.path(), &channel_config());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(invoke(Verb::Run, &path, &a).unwrap(), 0);
    assert_eq!(invoke(Verb::Run, &path, &b).unwrap(), 0);
    for name in [
        "summary.json",
        "diagnostics.csv",
        "solution.vtk",
        "iterations.jsonl",
    ] {
        let left = fs::read(a.join(name)).unwrap();
        let right = fs::read(b.join(name)).unwrap();
        assert_eq!(left, right, "{name} differs between reruns");
    }
}

#[test]
fn sweep_covers_grid_in_config_order_and_parallel_matches() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = channel_config();
    cfg["flux"] = json!([0.0, 0.05]);
    cfg["law"]["p"] = json!([2.0, 3.0]);
    let path = write_config(tmp.path(), &cfg);
    let (serial, parallel) = (tmp.path().join("s"), tmp.path().join("p"));
    assert_eq!(invoke(Verb::Sweep, &path, &serial).unwrap(), 0);
    assert_eq!(invoke_threads(Verb::Sweep, &path, &parallel, 2).unwrap(), 0);

    let (header, rows) = csv_rows(&serial.join("sweep.csv"));
    assert_eq!(
        header,
        "alpha,p,t,converged,iterations,residual,kappa,c1,c2,measured_flux,error"
    );
    assert_eq!(rows.len(), 4);
    let alphas: Vec<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    let ps: Vec<&str> = rows.iter().map(|r| r[1].as_str()).collect();
    assert_eq!(alphas, ["0", "0", "0.05", "0.05"]);
    assert_eq!(ps, ["2", "3", "2", "3"]);
    for row in &rows {
        assert_eq!(row[3], "true");
        assert!(row[10].is_empty(), "unexpected error cell: {}", row[10]);
    }

    let left = fs::read(serial.join("sweep.csv")).unwrap();
    let right = fs::read(parallel.join("sweep.csv")).unwrap();
    assert_eq!(left, right, "thread count changed the sweep table");
}

#[test]
fn ineq_writes_one_report_per_constant() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = channel_config();
    cfg["law"]["p"] = json!([2.0, 3.0]);
    let path = write_config(tmp.path(), &cfg);
    let out = tmp.path().join("out");
    assert_eq!(invoke(Verb::Ineq, &path, &out).unwrap(), 0);

    let doc = read_json(&out.join("inequalities.json"));
    let reports = doc["reports"].as_array().unwrap();
    assert_eq!(reports.len(), 5);
    for rep in reports {
        assert!(rep["id"].is_string());
        let c = rep["constant"].as_f64().unwrap();
        assert!(c.is_finite() && c > 0.0);
    }
}

#[test]
fn carrier_check_certifies_flux_and_divergence() {
    let tmp = TempDir::new().unwrap();
    let path = write_config(tmp.path(), &channel_config());
    let out = tmp.path().join("out");
    assert_eq!(invoke(Verb::CarrierCheck, &path, &out).unwrap(), 0);

    let doc = read_json(&out.join("carrier.json"));
    assert_eq!(doc["verdicts"]["flux_ok"], json!(true));
    assert_eq!(doc["verdicts"]["divergence_ok"], json!(true));
    assert_eq!(doc["sections"].as_array().unwrap().len(), 4);
    assert!(out.join("carrier.vtk").is_file());
}

#[test]
fn binary_reports_bad_widths_with_exit_one() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = channel_config();
    cfg["domain"]["l1"] = json!(2.0);
    let path = write_config(tmp.path(), &cfg);
    let output = Command::new(env!("CARGO_BIN_EXE_outflux"))
        .arg("run")
        .arg(&path)
        .arg("--out")
        .arg(tmp.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("l1"), "stderr: {stderr}");
}

#[test]
fn binary_zero_flux_smoke() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = channel_config();
    cfg["flux"] = json!(0.0);
    let path = write_config(tmp.path(), &cfg);
    let out = tmp.path().join("out");
    let output = Command::new(env!("CARGO_BIN_EXE_outflux"))
        .arg("run")
        .arg(&path)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(output.status.success(), "{:?}", output);
    assert!(out.join("summary.json").is_file());
    assert!(out.join("solution.vtk").is_file());
}
