//! Black-box tests of the lcsctl binary: exit codes, output files,
//! determinism of reruns, and the sampled-field round trip.

use lcs_control::control::{AnchorProgram, ControlProgram};
use lcs_control::flow_model::{find_saddle, taylor_green, BoundingBox, GridSpec, TimeSignal};
use lcs_control::geom::Vec2;
use lcs_control::ridge_verify::ExperimentParams;
use serde_json::{json, Value};
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn lcsctl(args: &[&str], config: Option<&Value>, out_dir: &Path) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_lcsctl"));
    cmd.args(args).arg("--out").arg(out_dir).arg("--workers").arg("1");
    if let Some(value) = config {
        let path = out_dir.join("config.json");
        fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
        cmd.arg("--config").arg(path);
    }
    cmd.output().expect("failed to spawn lcsctl")
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("killed by signal")
}

#[test]
fn missing_config_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = lcsctl(&["saddle"], None, dir.path());
    assert_eq!(exit_code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("--config"));
}

#[test]
fn malformed_json_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("config.json");
    fs::write(&path, "{ not json").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_lcsctl"))
        .args(["saddle", "--config"])
        .arg(&path)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn wrong_schema_version_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let config = json!({
        "schema_version": 99,
        "field": {"kind": "taylor_green", "amplitude": 1.0},
        "guess": [0.9, 0.1],
    });
    let out = lcsctl(&["saddle"], Some(&config), dir.path());
    assert_eq!(exit_code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("schema_version"));
}

#[test]
fn manifold_rejects_bad_horizon_and_times() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = json!({
        "schema_version": 1,
        "field": {"kind": "taylor_green", "amplitude": 1.0},
        "guess": [0.9, 0.1],
        "horizon": -1.0,
        "times": {"start": 0.0, "stop": 0.5, "count": 3},
    });
    let out = lcsctl(&["manifold"], Some(&config), dir.path());
    assert_eq!(exit_code(&out), 2);

    config["horizon"] = json!(1.0);
    config["times"] = json!({"start": 0.0, "stop": 5.0, "count": 3});
    let out = lcsctl(&["manifold"], Some(&config), dir.path());
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn saddle_reports_the_taylor_green_frame() {
    let dir = tempfile::tempdir().unwrap();
    let config = json!({
        "schema_version": 1,
        "field": {"kind": "taylor_green", "amplitude": 1.0},
        "guess": [0.9, 0.1],
    });
    let out = lcsctl(&["saddle"], Some(&config), dir.path());
    assert_eq!(exit_code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let frame: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("saddle_frame.json")).unwrap())
            .unwrap();
    let pi2 = std::f64::consts::PI * std::f64::consts::PI;
    assert!((frame["a"]["x"].as_f64().unwrap() - 1.0).abs() < 1e-10);
    assert!(frame["a"]["y"].as_f64().unwrap().abs() < 1e-10);
    assert!((frame["lambda_u"].as_f64().unwrap() - pi2).abs() < 1e-8);
}

#[test]
fn manifold_writes_state_series() {
    let dir = tempfile::tempdir().unwrap();
    let config = json!({
        "schema_version": 1,
        "field": {
            "kind": "periodic_controlled",
            "amplitude": 1.0, "delta": 0.1, "omega": 6.283185307179586, "horizon": 2.0,
        },
        "guess": [0.9, 0.1],
        "horizon": 2.0,
        "times": {"start": -1.0, "stop": 1.0, "count": 9},
    });
    let out = lcsctl(&["manifold"], Some(&config), dir.path());
    assert_eq!(exit_code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("manifold_states.csv")).unwrap();
    assert_eq!(csv.lines().count(), 10, "header plus nine rows");
}

#[test]
fn control_reports_amplitude_and_bound() {
    let dir = tempfile::tempdir().unwrap();
    let tg = taylor_green(1.0);
    let frame = find_saddle(&tg, Vec2::new(0.9, 0.1)).unwrap();
    let program = ControlProgram {
        anchors: vec![AnchorProgram {
            theta_s: Some(TimeSignal::Cosine { amp: 0.1, omega: 2.0 * std::f64::consts::PI }),
            ..AnchorProgram::holding(frame, 0.2)
        }],
        half_window: 2.0,
    };
    let config = json!({
        "schema_version": 1,
        "program": serde_json::to_value(&program).unwrap(),
    });
    let out = lcsctl(&["control"], Some(&config), dir.path());
    assert_eq!(exit_code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let report: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("control_report.json")).unwrap())
            .unwrap();
    assert!(report["amplitude"].as_f64().unwrap() > 0.0);
    assert!(report["smoothness_bound"].as_f64().unwrap() > 0.0);
    assert_eq!(report["anchors"], 1);
}

fn small_periodic_config() -> Value {
    let params = ExperimentParams {
        grid: GridSpec::new(80, 40, BoundingBox::new(0.0, 2.0, 0.0, 1.0)),
        slices: 2,
        slice_spacing: 0.25,
        ..ExperimentParams::default()
    };
    json!({
        "schema_version": 1,
        "experiment": {"name": "periodic", "params": serde_json::to_value(&params).unwrap()},
    })
}

#[test]
fn periodic_experiment_writes_outputs_and_reruns_identically() {
    let config = small_periodic_config();
    let dir1 = tempfile::tempdir().unwrap();
    let out = lcsctl(&["experiment"], Some(&config), dir1.path());
    assert_eq!(exit_code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let csv1 = fs::read(dir1.path().join("periodic.csv")).unwrap();
    assert!(dir1.path().join("periodic_summary.json").exists());

    let dir2 = tempfile::tempdir().unwrap();
    let out = lcsctl(&["experiment"], Some(&config), dir2.path());
    assert_eq!(exit_code(&out), 0);
    let csv2 = fs::read(dir2.path().join("periodic.csv")).unwrap();
    assert_eq!(csv1, csv2, "rerun produced different bytes");
}

#[test]
fn experiment_rejects_bad_params() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = small_periodic_config();
    config["experiment"]["params"]["threshold_frac"] = json!(1.5);
    let out = lcsctl(&["experiment"], Some(&config), dir.path());
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn decompose_writes_reports_and_exports() {
    let dir = tempfile::tempdir().unwrap();
    let config = json!({
        "schema_version": 1,
        "input": {
            "kind": "periodic_controlled",
            "amplitude": 1.0, "delta": 0.1, "omega": 6.283185307179586, "horizon": 2.0,
        },
        "grid": serde_json::to_value(GridSpec::new(
            60, 30, BoundingBox::new(0.0, 2.0, 0.0, 1.0),
        )).unwrap(),
        "times": {"start": -1.0, "stop": 1.0, "count": 11},
    });
    let out = lcsctl(&["decompose"], Some(&config), dir.path());
    assert_eq!(exit_code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("decomposition_report.json").exists());
    assert!(dir.path().join("steady.json").exists());
    assert!(dir.path().join("unsteady.bin").exists());
}

#[test]
fn saddle_accepts_sampled_field_files() {
    // Write a sampled Taylor-Green field in the documented header/payload
    // format and run the saddle analysis on it.
    let dir = tempfile::tempdir().unwrap();
    let tg = taylor_green(1.0);
    // Straddle y = 0 so the (1, 0) saddle is interior to the sample lattice;
    // on the wall the interpolant's one-sided Jacobian stencil degenerates.
    let grid = GridSpec::new(60, 30, BoundingBox::new(0.0, 2.0, -0.5, 0.5));
    // The decomposition wants a window symmetric about t = 0.
    let times: Vec<f64> = (0..5).map(|k| -0.2 + 0.1 * k as f64).collect();
    let mut payload = Vec::new();
    for &t in &times {
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let v = tg.eval_total(grid.node(i, j), t);
                payload.extend_from_slice(&v.x.to_le_bytes());
                payload.extend_from_slice(&v.y.to_le_bytes());
            }
        }
    }
    fs::write(dir.path().join("field.bin"), &payload).unwrap();
    let header = json!({
        "nx": grid.nx, "ny": grid.ny,
        "x_bounds": [0.0, 2.0], "y_bounds": [-0.5, 0.5],
        "times": times, "payload": "field.bin",
    });
    fs::write(dir.path().join("field.json"), serde_json::to_string(&header).unwrap()).unwrap();

    let dir2 = tempfile::tempdir().unwrap();
    let config = json!({
        "schema_version": 1,
        "field": {"kind": "sampled", "header": dir.path().join("field.json")},
        "guess": [0.9, 0.1],
    });
    let out = lcsctl(&["saddle"], Some(&config), dir2.path());
    assert_eq!(exit_code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let frame: Value =
        serde_json::from_str(&fs::read_to_string(dir2.path().join("saddle_frame.json")).unwrap())
            .unwrap();
    // Bilinear samples on a 60 x 30 lattice: expect the saddle near (1, 0)
    // but not to analytic precision.
    assert!((frame["a"]["x"].as_f64().unwrap() - 1.0).abs() < 0.02);
    assert!(frame["a"]["y"].as_f64().unwrap().abs() < 0.02);
}
