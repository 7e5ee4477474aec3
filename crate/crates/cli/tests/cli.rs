use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use sha2::{Digest, Sha256};
use tempfile::TempDir;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn twosite(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_twosite"))
        .args(args)
        .arg("--out")
        .arg(out)
        .arg("--workers")
        .arg("2")
        .output()
        .expect("binary runs")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn equilibrium_solution_and_manifest() {
    let dir = TempDir::new().unwrap();
    let params = configs().join("params.txt");
    let o = twosite(
        &["--params", params.to_str().unwrap(), "equilibrium", "--y1", "1.0"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let sol = json(&dir.path().join("equilibrium.json"));
    assert!(sol["residual"].as_f64().unwrap() < 1e-10);
    assert_eq!(sol["in_region"], Value::Bool(true));

    let m = json(&dir.path().join("manifest.json"));
    let want = hex::encode(Sha256::digest(fs::read(&params).unwrap()));
    assert_eq!(m["params"]["sha256"].as_str().unwrap(), want);
    assert_eq!(m["command"], "equilibrium");
    assert_eq!(m["status"], "ok");
    assert_eq!(m["config"]["resolved"]["y1_ref"].as_f64(), Some(1.0));
    assert!(m["outputs"].as_array().unwrap().iter().any(|v| v == "equilibrium.json"));
}

#[test]
fn shipped_parameter_file_matches_builtin_table() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let params = configs().join("params.txt");
    assert!(twosite(&["equilibrium", "--y1", "1.1"], &a).status.success());
    assert!(twosite(&["--params", params.to_str().unwrap(), "equilibrium", "--y1", "1.1"], &b).status.success());
    assert_eq!(
        json(&a.join("manifest.json"))["params"]["values"],
        json(&b.join("manifest.json"))["params"]["values"]
    );
    assert_eq!(fs::read(a.join("equilibrium.json")).unwrap(), fs::read(b.join("equilibrium.json")).unwrap());
}

#[test]
fn unconverged_equilibrium_is_a_numerical_failure() {
    let dir = TempDir::new().unwrap();
    let o = twosite(&["equilibrium", "--y1", "5.0"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let m = json(&dir.path().join("manifest.json"));
    assert!(m["status"].as_str().unwrap().starts_with("numerical failure"));
}

#[test]
fn malformed_parameter_file_names_the_line() {
    let dir = TempDir::new().unwrap();
    let p = write(&dir, "p.txt", "Tv_1 = 0.05\nTv_2 = fast\n");
    let o = twosite(&["--params", p.to_str().unwrap(), "equilibrium", "--y1", "1.0"], &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}

#[test]
fn unknown_config_key_names_the_line() {
    let dir = TempDir::new().unwrap();
    let c = write(&dir, "s.toml", "y1_ref = 1.2\nhorizon = 5\n[initial]\nequilibrium = [1.0, 0.0]\n");
    let o = twosite(&["--config", c.to_str().unwrap(), "stabilize"], &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}

#[test]
fn empty_initial_condition_list_is_rejected() {
    let dir = TempDir::new().unwrap();
    let c = write(&dir, "z.toml", "y1_ref = 1.0\ny2_ref = 1.69\ninitial_conditions = []\n");
    let o = twosite(&["--config", c.to_str().unwrap(), "zero-dynamics"], &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("initial_conditions"));
}

#[test]
fn non_hurwitz_pole_file_is_rejected_before_simulation() {
    let dir = TempDir::new().unwrap();
    write(&dir, "poles.toml", "electric = [-2.5, -2.5, 0.5, -2.5, -2.5]\nheat = [-0.25, -0.25, -0.25]\n");
    let c = write(
        &dir,
        "s.toml",
        "y1_ref = 1.2\npoles_file = \"poles.toml\"\n[initial]\nequilibrium = [1.0, 0.0]\n",
    );
    let out = dir.path().join("out");
    let o = twosite(&["--config", c.to_str().unwrap(), "stabilize"], &out);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("Hurwitz"), "{}", stderr(&o));
    assert!(!out.join("trajectory.csv").exists());
}

#[test]
fn tracking_requires_positive_gain() {
    let dir = TempDir::new().unwrap();
    let c = write(
        &dir,
        "s.toml",
        "y1_ref = 1.2\ny2_ref = 1.69\nk = 0.0\n[initial]\nequilibrium = [1.0, 0.0]\n",
    );
    let o = twosite(&["--config", c.to_str().unwrap(), "track"], &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn one_cell_grid_gives_one_row() {
    let dir = TempDir::new().unwrap();
    let c = write(&dir, "q.toml", "y1 = { lo = 1.0, hi = 1.0, n = 1 }\n");
    let out = dir.path().join("out");
    let o = twosite(&["--config", c.to_str().unwrap(), "scan", "eigQ"], &out);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(out.join("eig_q.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("y1_ref,status,"));
    assert!(lines[1].starts_with("1.0000000000000000e0,ok,1,0,1,"));
}

#[test]
fn one_cell_singularity_grid_gives_one_row() {
    let dir = TempDir::new().unwrap();
    let c = write(
        &dir,
        "s.toml",
        "x_e1 = { lo = 0.0, hi = 0.0, n = 1 }\nx_e3 = { lo = 0.0, hi = 0.0, n = 1 }\n",
    );
    let out = dir.path().join("out");
    let o = twosite(&["--config", c.to_str().unwrap(), "scan", "singularity"], &out);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(out.join("singularity.csv")).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.lines().nth(1).unwrap().ends_with(",0,0,1"));
}

#[test]
fn q_scan_locates_the_minimum_phase_boundary() {
    let dir = TempDir::new().unwrap();
    let c = configs().join("fig6b.toml");
    let out = dir.path().join("out");
    let o = twosite(&["--config", c.to_str().unwrap(), "scan", "eig-q"], &out);
    assert!(o.status.success(), "{}", stderr(&o));
    let s = json(&out.join("eig_q_summary.json"));
    let crossings = s["crossings"].as_array().unwrap();
    assert_eq!(crossings.len(), 1);
    assert!((crossings[0].as_f64().unwrap() - 0.67).abs() < 0.05);
    let intervals = s["stable_intervals"].as_array().unwrap();
    assert_eq!(intervals.len(), 1);
    assert!((intervals[0][1].as_f64().unwrap() - 1.32).abs() < 1e-12);
}

#[test]
fn qtilde_scan_reports_refined_boundary() {
    let dir = TempDir::new().unwrap();
    let c = configs().join("fig6c.toml");
    let out = dir.path().join("out");
    let o = twosite(&["--config", c.to_str().unwrap(), "scan", "eigQtilde"], &out);
    assert!(o.status.success(), "{}", stderr(&o));
    let s = json(&out.join("eig_qtilde_summary.json"));
    let b = s["refined_boundary"].as_f64().unwrap();
    assert!((b - 4.85).abs() < 0.15, "{b}");
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let dir = TempDir::new().unwrap();
    let c = write(&dir, "q.toml", "y1_ref = 1.0\ny2 = { lo = 1.0, hi = 5.0, n = 9 }\nrefine_tol = 0.01\n");
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = twosite(&["--config", c.to_str().unwrap(), "scan", "eig-qtilde"], out);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for f in ["eig_qtilde.csv", "eig_qtilde_summary.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn csv_cells_use_seventeen_significant_digits() {
    let dir = TempDir::new().unwrap();
    let c = write(&dir, "q.toml", "y1 = { lo = 0.9, hi = 1.0, n = 2 }\n");
    let out = dir.path().join("out");
    assert!(twosite(&["--config", c.to_str().unwrap(), "scan", "eig-q"], &out).status.success());
    let text = fs::read_to_string(out.join("eig_q.csv")).unwrap();
    let row = text.lines().nth(1).unwrap();
    let cell = row.split(',').nth(5).unwrap();
    let mantissa = cell.split('e').next().unwrap().trim_start_matches('-');
    assert_eq!(mantissa.chars().filter(|c| c.is_ascii_digit()).count(), 17, "{cell}");
}

#[test]
fn shipped_zero_dynamics_configs() {
    let dir = TempDir::new().unwrap();
    for (name, drifts) in [("fig4.toml", false), ("fig5.toml", true)] {
        let out = dir.path().join(name);
        let c = configs().join(name);
        let o = twosite(&["--config", c.to_str().unwrap(), "zero-dynamics"], &out);
        assert!(o.status.success(), "{}", stderr(&o));
        let s = json(&out.join("zero_dynamics_summary.json"));
        assert_eq!(s["runs"].as_array().unwrap().len(), 15);
        assert_eq!(s["all_converged"], Value::Bool(true));
        if drifts {
            assert!(s["min_eta4_drift_rate"].as_f64().unwrap() > 0.0);
        }
        let csv = fs::read_to_string(out.join("zero_dynamics_14.csv")).unwrap();
        assert!(csv.starts_with("t,eta1,eta2,eta3,eta4,F1,F2,F3,F4,output_error\n"));
    }
}

#[test]
fn shipped_stabilization_configs() {
    let dir = TempDir::new().unwrap();
    for (name, y1) in [("fig7a.toml", 1.2), ("fig7b.toml", 0.8)] {
        let out = dir.path().join(name);
        let c = configs().join(name);
        let o = twosite(&["--config", c.to_str().unwrap(), "stabilize"], &out);
        assert!(o.status.success(), "{}", stderr(&o));
        let s = json(&out.join("summary.json"));
        assert_eq!(s["k"].as_f64(), Some(0.0));
        assert!((s["final_outputs"]["y1"].as_f64().unwrap() - y1).abs() < 1e-3 * y1);
        assert!(s["target"]["final_distance"].as_f64().unwrap() < 1e-4);
        assert_eq!(s["saturation"]["within_nominal"], Value::Bool(true));
        let csv = fs::read_to_string(out.join("trajectory.csv")).unwrap();
        let head = csv.lines().next().unwrap();
        assert_eq!(head.split(',').count(), 21);
        assert!(head.starts_with("t,y1,y2,yhat2ref,x1,"));
        assert!(head.ends_with("x13,u1,u2,sigma1,sigma2"));
    }
}

#[test]
fn shipped_tracking_config() {
    let dir = TempDir::new().unwrap();
    let c = configs().join("fig8.toml");
    let o = twosite(&["--config", c.to_str().unwrap(), "track"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let s = json(&dir.path().join("summary.json"));
    assert!(s["y1_relative_error"].as_f64().unwrap() < 0.01);
    assert!(s["y2_relative_error"].as_f64().unwrap() < 0.01);
}

#[test]
fn check_is_seeded() {
    let dir = TempDir::new().unwrap();
    let run = |seed: &str, out: &str| {
        let out = dir.path().join(out);
        let o = twosite(&["check", "--samples", "8", "--oracle-samples", "2", "--seed", seed], &out);
        assert!(o.status.success(), "{}", stderr(&o));
        fs::read(out.join("check.csv")).unwrap()
    };
    let a = run("7", "a");
    assert_eq!(a, run("7", "b"));
    assert_ne!(a, run("8", "c"));
}

#[test]
fn tracking_scan_needs_gain_and_reports_spectrum() {
    let dir = TempDir::new().unwrap();
    let c = write(&dir, "t.toml", "y1_ref = 1.0\ny2 = { lo = 1.0, hi = 2.0, n = 3 }\nk = 0.01\nrefine_tol = 0\n");
    let out = dir.path().join("out");
    let o = twosite(&["--config", c.to_str().unwrap(), "scan", "tracking"], &out);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(out.join("tracking.csv")).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert!(text.lines().next().unwrap().contains("re6,im6"));

    let c = write(&dir, "n.toml", "y2 = { lo = 1.0, hi = 2.0, n = 3 }\n");
    let o = twosite(&["--config", c.to_str().unwrap(), "scan", "tracking"], &dir.path().join("o2"));
    assert_eq!(o.status.code(), Some(1));
}
