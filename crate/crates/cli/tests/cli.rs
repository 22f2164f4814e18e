use std::path::Path;
use std::process::{Command, Output};

fn extremal(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_extremal"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

fn rows(path: &Path) -> Vec<Vec<f64>> {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    rdr.records()
        .map(|r| r.unwrap().iter().map(|x| x.parse::<f64>().unwrap()).collect())
        .collect()
}

#[test]
fn profile_reports_closed_form_boundary_data() {
    let dir = tempfile::tempdir().unwrap();
    let out = extremal(&["profile", "--out", "o"], dir.path());
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["c1"].as_f64().unwrap() + 0.5).abs() < 1e-10);
    assert!((v["c2"].as_f64().unwrap() + 0.5).abs() < 1e-8);
    for row in rows(&dir.path().join("o/profile.csv")) {
        assert!((row[1] - (1.0 - row[0] * row[0]) / 4.0).abs() < 1e-10);
    }
}

#[test]
fn modes_csv_has_closed_form_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"numerics": {"j_max": 8}}"#);
    let out = extremal(&["modes", "--config", &cfg, "--out", "o"], dir.path());
    assert!(out.status.success());
    let rows = rows(&dir.path().join("o/modes.csv"));
    assert_eq!(rows.len(), 8);
    for (k, row) in rows.iter().enumerate() {
        let j = (k + 1) as f64;
        assert_eq!(row[0], j);
        assert!((row[1] - 1.0).abs() < 1e-10);
        assert!((row[2] - (j - 1.0) / 2.0).abs() < 1e-8);
    }
}

#[test]
fn schema_errors_are_json_with_pointer() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"grid": {"n1": 4, "refine": "yes"}}"#);
    let out = extremal(&["landscape", "--config", &cfg], dir.path());
    assert!(!out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(v["error"]["kind"], "config");
    assert_eq!(v["error"]["pointer"], "/grid/refine");

    let cfg = write_config(dir.path(), "d.json", r#"{"numerics": {"j_max": 40}}"#);
    let out = extremal(&["modes", "--config", &cfg], dir.path());
    let v: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(v["error"]["pointer"], "/numerics");

    let cfg = write_config(dir.path(), "e.json", r#"{"chart": {"kind": "klein_bottle"}}"#);
    let out = extremal(&["solve", "--config", &cfg], dir.path());
    let v: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!(v["error"]["pointer"].as_str().unwrap().starts_with("/chart"));
}

#[test]
fn solver_failures_are_reported_with_kind() {
    let dir = tempfile::tempdir().unwrap();
    // the ball would reach the antipode
    let cfg = write_config(dir.path(), "c.json", r#"{"chart": {"kind": "round_sphere"}, "epsilons": [2.5]}"#);
    let out = extremal(&["extremal", "--config", &cfg, "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let v: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(v["error"]["kind"], "precondition");
}

const SMALL: &str = r#"{
    "chart": {"kind": "flat_torus"},
    "nonlinearity": {"name": "periodic_forcing", "amplitude": 0.25},
    "epsilons": [0.05],
    "point": [1.0, 0.5],
    "numerics": {"n_r": 24, "n_theta": 32, "j_max": 8, "profile_n_r": 32},
    "grid": {"n1": 8, "n2": 2, "refine": true},
    "solve": {"vbar": {"cos": [0.0, 0.05], "sin": [0.0, 0.0]}}
}"#;

#[test]
fn artifacts_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", SMALL);
    for cmd in ["solve", "extremal", "landscape"] {
        for (out, workers) in [("a", "1"), ("b", "3")] {
            let o = extremal(&[cmd, "--config", &cfg, "--out", out, "--workers", workers], dir.path());
            assert!(o.status.success(), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
        }
    }
    let mut names: Vec<_> = std::fs::read_dir(dir.path().join("a"))
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert_eq!(names.len(), 10, "{names:?}");
    for n in names {
        let a = std::fs::read(dir.path().join("a").join(&n)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(&n)).unwrap();
        assert!(a == b, "{n:?} differs");
    }
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("a/landscape.json")).unwrap()).unwrap();
    let crit = summary[0]["critical_points"].as_array().unwrap();
    assert!(!crit.is_empty());
    for c in crit {
        let x = c["p"][0].as_f64().unwrap();
        let d = (x - std::f64::consts::FRAC_PI_2).abs().min((x - 1.5 * std::f64::consts::PI).abs());
        assert!(d < 1e-4, "{x}");
    }
}

#[test]
fn validate_passes_on_fresh_checkout() {
    let dir = tempfile::tempdir().unwrap();
    let out = extremal(&["validate", "--out", "o"], dir.path());
    let text = String::from_utf8_lossy(&out.stdout);
    println!("{text}");
    assert!(out.status.success());
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 11);
}
