use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn exe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adiabatic"))
        .args(args)
        .output()
        .unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.display().to_string()
}

fn run(command: &str, config: &str, out: &Path) -> Output {
    exe(&[
        command,
        "--config",
        config,
        "--out",
        &out.display().to_string(),
    ])
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

#[test]
fn adiabatic_time_on_shift_example() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "c.json",
        r#"{"example": "shift-discrete(10)", "epsilon": 0.1}"#,
    );
    let out = tmp.path().join("out");
    let o = run("adiabatic-time", &cfg, &out);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let (header, rows) = read_csv(&out.join("search.csv"));
    assert_eq!(header, ["n", "epsilon", "T", "worst_case_tv", "flag"]);
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][0], "10");
    let t: f64 = rows[0][2].parse().unwrap();
    let tv: f64 = rows[0][3].parse().unwrap();
    assert!(t >= 100.0 / (4.0 * -(0.9f64).ln()) && t <= 1000.0);
    assert!(tv <= 0.1);
    assert_eq!(rows[0][4], "false");

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["status"], "ok");
    assert_eq!(manifest["config"]["epsilon"], 0.1);
    for a in manifest["artifacts"].as_array().unwrap() {
        assert!(out.join(a.as_str().unwrap()).exists());
    }
    assert_eq!(manifest["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn invalid_epsilon_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "c.json",
        r#"{"example": "shift-discrete(10)", "epsilon": 1.5}"#,
    );
    let out = tmp.path().join("out");
    let o = run("adiabatic-time", &cfg, &out);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());

    let o = run(
        "adiabatic-time",
        &tmp.path().join("missing.json").display().to_string(),
        &out,
    );
    assert_eq!(o.status.code(), Some(2));
    let o = exe(&["no-such-command", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "c.json",
        r#"{"example": "glauber-torus(3,1,0.2,0.5)", "horizon": 5.0, "paths": 2000}"#,
    );
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let o = exe(&[
            "glauber-run",
            "--config",
            &cfg,
            "--out",
            &dir.display().to_string(),
            "--seed",
            "9",
        ]);
        assert_eq!(
            o.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
    for name in ["distribution.csv", "monte_carlo.csv"] {
        assert_eq!(
            fs::read(a.join(name)).unwrap(),
            fs::read(b.join(name)).unwrap()
        );
    }
    let (header, rows) = read_csv(&a.join("distribution.csv"));
    assert_eq!(header, ["configuration", "exact", "empirical"]);
    assert_eq!(rows.len(), 8);
    assert_eq!(rows[7][0], "111");
    let c = tmp.path().join("c");
    exe(&[
        "glauber-run",
        "--config",
        &cfg,
        "--out",
        &c.display().to_string(),
        "--seed",
        "10",
    ]);
    assert_ne!(
        fs::read(a.join("distribution.csv")).unwrap(),
        fs::read(c.join("distribution.csv")).unwrap()
    );
}

#[test]
fn bound_table_from_parameters() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "c.json",
        r#"{"epsilon": 0.1, "bounds": {"t_mix": 10, "lambda": 1, "n": 10, "horizon": 200,
            "torus": {"n": 3, "d": 2, "beta1": 0.5, "beta2": 0.2}}}"#,
    );
    let out = tmp.path().join("out");
    let o = run("verify-bounds", &cfg, &out);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let (header, rows) = read_csv(&out.join("bounds.csv"));
    assert_eq!(
        header,
        ["bound_name", "parameters", "value", "kind", "notes"]
    );
    let kov = rows
        .iter()
        .find(|r| r[0] == "kovchegov_continuous_explicit")
        .unwrap();
    assert_eq!(kov[2].parse::<f64>().unwrap(), 1010.025);
    assert_eq!(kov[3], "explicit-upper");
    assert_eq!(rows.len(), 8);
    for r in &rows {
        assert_eq!(r.len(), 5);
        assert!(r[2].parse::<f64>().unwrap().is_finite());
    }
}

#[test]
fn matrix_inputs_and_domain_errors() {
    let tmp = TempDir::new().unwrap();
    write(
        tmp.path(),
        "a.json",
        r#"{"dim": 2, "rows": [[0.9, 0.1], [0.2, 0.8]]}"#,
    );
    write(
        tmp.path(),
        "b.json",
        r#"{"dim": 2, "rows": [[0.5, 0.5], [0.5, 0.5]]}"#,
    );
    write(
        tmp.path(),
        "id.json",
        r#"{"dim": 2, "rows": [[1.0, 0.0], [0.0, 1.0]]}"#,
    );
    let cfg = write(
        tmp.path(),
        "c.json",
        r#"{"matrices": {"mode": "discrete", "initial": "a.json", "final": "b.json"}, "epsilon": 0.05}"#,
    );
    let out = tmp.path().join("ok");
    assert_eq!(run("mixing-time", &cfg, &out).status.code(), Some(0));
    let (_, rows) = read_csv(&out.join("mixing.csv"));
    assert_eq!(rows[0][2].parse::<f64>().unwrap(), 1.0);

    let bad = write(
        tmp.path(),
        "bad.json",
        r#"{"matrices": {"mode": "discrete", "initial": "a.json", "final": "id.json"}, "epsilon": 0.05}"#,
    );
    let out = tmp.path().join("bad");
    assert_eq!(run("adiabatic-time", &bad, &out).status.code(), Some(1));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["status"], "failed");
    assert_eq!(manifest["inputs"].as_array().unwrap().len(), 3);
}

#[test]
fn trajectory_profile_and_scaling_fit() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "t.json",
        r#"{"example": "shift-continuous(4)", "horizon": 50, "grid_points": 11}"#,
    );
    let out = tmp.path().join("t");
    assert_eq!(run("trajectory", &cfg, &out).status.code(), Some(0));
    let (header, rows) = read_csv(&out.join("profile.csv"));
    assert_eq!(header, ["t", "deviation"]);
    assert_eq!(rows.len(), 11);
    assert_eq!(rows[10][0].parse::<f64>().unwrap(), 50.0);

    let cfg = write(
        tmp.path(),
        "f.json",
        r#"{"example": "shift-discrete", "sizes": [5, 10, 20], "epsilon": 0.1}"#,
    );
    let out = tmp.path().join("f");
    assert_eq!(run("fit-scaling", &cfg, &out).status.code(), Some(0));
    let (_, rows) = read_csv(&out.join("search.csv"));
    assert_eq!(rows.len(), 3);
    let (header, rows) = read_csv(&out.join("fit.csv"));
    assert_eq!(
        header,
        [
            "variable",
            "exponent",
            "log_prefactor",
            "r_squared",
            "points"
        ]
    );
    let exponent: f64 = rows[0][1].parse().unwrap();
    assert!((1.7..2.3).contains(&exponent), "{exponent}");
}

#[test]
fn search_timeout_keeps_partial_artifacts() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "c.json",
        r#"{"example": "shift-discrete(20)", "epsilon": 0.05, "cap": 100}"#,
    );
    let out = tmp.path().join("out");
    assert_eq!(run("adiabatic-time", &cfg, &out).status.code(), Some(1));
    assert!(out.join("probes.csv").exists());
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["status"], "partial");
}
