use std::f64::consts::TAU;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use conformal_flow::affine_bridge::{self, Sl2Params};
use conformal_flow::circle_field::CircleField;
use conformal_flow::cli::{NormalizeReport, RunSummary, OUTPUT_ROOT_ENV};
use conformal_flow::conformal_metric::{ConformalMetric, MetricSnapshot};
use conformal_flow::flow_engine;
use tempfile::TempDir;

fn bin(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_conformal-flow"))
        .args(args)
        .env(OUTPUT_ROOT_ENV, root)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, contents: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, contents).unwrap();
    path.to_string_lossy().into_owned()
}

fn write_metric(dir: &Path, name: &str, m: &ConformalMetric) -> String {
    write(dir, name, &serde_json::to_string(&m.to_snapshot()).unwrap())
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn config(body: &str) -> String {
    format!(r#"{{"t_end": 0.1, "cadence": 0.05, "output_dir": "out", {body}}}"#)
}

#[test]
fn config_errors_exit_one_and_name_the_field() {
    let dir = TempDir::new().unwrap();
    let cases = [
        (r#""alpha": 4.0, "n_samples": 63, "initial": {"kind": "round"}"#, "n_samples"),
        (r#""alpha": 4.0, "n_samples": 100, "initial": {"kind": "perturbed_round", "amplitude": 0.1, "mode": 60}"#, "initial.mode"),
        (r#""alpha": 4.0, "n_samples": 64, "initial": {"kind": "round"}, "stepsize": 1"#, "stepsize"),
        (r#""alpha": 2.0, "n_samples": 64, "initial": {"kind": "round"}"#, "alpha"),
        (r#""alpha": 4.0, "n_samples": 64, "initial": {"kind": "random_bandlimited", "modes": 3, "amplitude": 0.1}"#, "seed"),
    ];
    for (i, (body, field)) in cases.iter().enumerate() {
        let path = write(dir.path(), &format!("c{i}.json"), &config(body));
        let out = bin(dir.path(), &["run", &path]);
        assert_eq!(out.status.code(), Some(1), "case {i}");
        assert!(stderr(&out).contains(field), "case {i}: {}", stderr(&out));
    }
}

#[test]
fn non_orthogonal_affine_data_is_rejected_without_projection() {
    let dir = TempDir::new().unwrap();
    let body = r#""alpha": 1.0, "n_samples": 64, "initial": {"kind": "fourier_u", "a": [1.0, 0.2]}"#;
    let path = write(dir.path(), "c.json", &config(body));
    let out = bin(dir.path(), &["run", &path]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn yamabe_run_writes_outputs_and_decays_at_the_linearized_rate() {
    let dir = TempDir::new().unwrap();
    let body = r#""alpha": 4.0, "n_samples": 256, "initial": {"kind": "perturbed_round", "amplitude": 0.2, "mode": 2},
        "projections": {"length": true}"#;
    let text = format!(r#"{{"t_end": 8.0, "cadence": 0.05, "output_dir": "yamabe", {body}}}"#);
    let path = write(dir.path(), "c.json", &text);
    let out = bin(dir.path(), &["run", &path]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let run_dir = dir.path().join("yamabe");
    let summary: RunSummary = serde_json::from_str(&fs::read_to_string(run_dir.join("summary.json")).unwrap()).unwrap();
    let rate = summary.decay.expect("fit").rate;
    assert!((4.8..=7.2).contains(&rate), "rate {rate}");
    assert_eq!(summary.total_violations, 0);
    let csv = fs::read_to_string(run_dir.join("trajectory.csv")).unwrap();
    assert!(csv.starts_with("t,Rbar,L,F2,F4,umin,umax,area,kw_residual,harnack,a1,b1,a2,b2,a3,b3\n"));
    assert!(run_dir.join("snapshots/metric_00000.json").exists());
    assert!(!run_dir.join(".lock").exists());
}

#[test]
fn a_held_lock_blocks_a_second_run() {
    let dir = TempDir::new().unwrap();
    fs::create_dir_all(dir.path().join("out")).unwrap();
    fs::write(dir.path().join("out/.lock"), "").unwrap();
    let path = write(dir.path(), "c.json", &config(r#""alpha": 4.0, "n_samples": 32, "initial": {"kind": "round"}"#));
    let out = bin(dir.path(), &["run", &path]);
    assert_ne!(out.status.code(), Some(0));
}

#[test]
fn ingested_polygons_run_with_decreasing_area() {
    let dir = TempDir::new().unwrap();
    let points: Vec<String> = (0..400)
        .map(|j| {
            let t = TAU * j as f64 / 400.0;
            format!("{},{}", 2.0 * t.cos(), t.sin())
        })
        .collect();
    let poly = write(dir.path(), "ellipse.csv", &(String::from("x,y\n") + &points.join("\n")));
    let out = bin(dir.path(), &["ingest", &poly, "--resample", "64"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(dir.path().join("ellipse.metric.json").exists());

    let bumpy: Vec<String> = (0..400)
        .map(|j| {
            let t = TAU * j as f64 / 400.0;
            let r = 1.0 + 0.08 * (3.0 * t).cos();
            format!("{},{}", r * t.cos(), r * t.sin())
        })
        .collect();
    write(dir.path(), "bumpy.csv", &bumpy.join("\n"));
    let body = r#""alpha": 1.0, "n_samples": 64, "initial": {"kind": "polygon", "path": "bumpy.csv"},
        "projections": {"length": true, "orthogonality": true}"#;
    let text = format!(r#"{{"t_end": 1.0, "cadence": 0.05, "output_dir": "affine", {body}}}"#);
    let path = write(dir.path(), "c.json", &text);
    let out = bin(dir.path(), &["run", &path]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let csv = fs::read_to_string(dir.path().join("affine/trajectory.csv")).unwrap();
    let areas: Vec<f64> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(7).unwrap().parse().unwrap())
        .collect();
    assert!(areas.len() > 10);
    assert!(areas.windows(2).all(|w| w[1] < w[0]), "{areas:?}");
    assert!(dir.path().join("affine/curves/curve_00000.csv").exists());
}

#[test]
fn ingest_rejects_a_square() {
    let dir = TempDir::new().unwrap();
    let poly = write(dir.path(), "square.csv", "0,0\n1,0\n1,1\n0,1\n");
    let out = bin(dir.path(), &["ingest", &poly]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn normalize_recovers_the_stretch() {
    let dir = TempDir::new().unwrap();
    let p = Sl2Params::new(2.0, 0.3).unwrap();
    let m = ConformalMetric::new(1.0, CircleField::from_fn(128, |t| p.multiplier(t)).unwrap()).unwrap();
    let path = write_metric(dir.path(), "psi.json", &m);
    let out = bin(dir.path(), &["normalize", &path]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let report: NormalizeReport = serde_json::from_str(&fs::read_to_string(dir.path().join("psi.sl2.json")).unwrap()).unwrap();
    assert!((report.params.lambda - 2.0).abs() < 1e-8);
    assert!((report.perimeter - TAU).abs() < 1e-6);
    let snap: MetricSnapshot = serde_json::from_str(&fs::read_to_string(dir.path().join("psi.normalized.json")).unwrap()).unwrap();
    let v = ConformalMetric::from_snapshot(snap).unwrap();
    assert!(v.u().map(|x| (x - 1.0).abs()).max() < 1e-6);
}

#[test]
fn normalize_rejects_an_open_curve() {
    let dir = TempDir::new().unwrap();
    let m = ConformalMetric::new(1.0, CircleField::from_fn(64, |t| 1.0 + 0.2 * t.cos()).unwrap()).unwrap();
    let path = write_metric(dir.path(), "open.json", &m);
    let out = bin(dir.path(), &["normalize", &path]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("a1"));
}

#[test]
fn reconstruct_then_ingest_round_trips() {
    let dir = TempDir::new().unwrap();
    let m = ConformalMetric::new(1.0, CircleField::from_fn(128, |t| (1.0 + 0.2 * (2.0 * t).cos()).powf(-1.0 / 3.0)).unwrap()).unwrap();
    let path = write_metric(dir.path(), "m.json", &m);
    let out = bin(dir.path(), &["reconstruct", &path, "--out", "curves"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let curve = dir.path().join("curves/m.curve.csv");
    let out = bin(dir.path(), &["ingest", curve.to_str().unwrap(), "--resample", "128"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let snap: MetricSnapshot = serde_json::from_str(&fs::read_to_string(dir.path().join("m.curve.metric.json")).unwrap()).unwrap();
    let back = ConformalMetric::from_snapshot(snap).unwrap();
    // ingestion rescales to length 2π
    let expected = flow_engine::project_length(&m);
    assert!(back.u().sup_distance(expected.u()) < 1e-3);
    assert!((affine_bridge::perimeter(&back) - affine_bridge::perimeter(&expected)).abs() < 1e-3);
}

#[test]
fn inequality_reports_and_rejects() {
    let dir = TempDir::new().unwrap();
    let field = CircleField::from_fn(64, |t| 1.0 + 0.1 * (2.0 * t).cos()).unwrap();
    let path = write(dir.path(), "f.json", &serde_json::to_string(&field.to_snapshot()).unwrap());
    for theorem in ["A", "B"] {
        let out = bin(dir.path(), &["inequality", theorem, &path]);
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
        let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        assert!(v["deficit"].as_f64().unwrap() >= 0.0);
    }
    let tilted = CircleField::from_fn(64, |t| 1.0 + 0.1 * t.cos()).unwrap();
    let path = write(dir.path(), "g.json", &serde_json::to_string(&tilted.to_snapshot()).unwrap());
    assert_eq!(bin(dir.path(), &["inequality", "A", &path]).status.code(), Some(1));
}

#[test]
fn verify_suites_pass_and_unknown_suites_fail() {
    let dir = TempDir::new().unwrap();
    for suite in ["covariance", "kazdan_warner", "sl2"] {
        let out = bin(dir.path(), &["verify", suite, "--seed", "42"]);
        assert_eq!(out.status.code(), Some(0), "{suite}: {}", String::from_utf8_lossy(&out.stdout));
    }
    assert_eq!(bin(dir.path(), &["verify", "nope"]).status.code(), Some(1));
}
