use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin(runs: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shear-mhd"))
        .arg("--runs")
        .arg(runs)
        .args(args)
        .output()
        .expect("spawn shear-mhd")
}

/// Run directory printed on stdout.
fn run_dir(out: &Output) -> PathBuf {
    let s = String::from_utf8_lossy(&out.stdout);
    PathBuf::from(s.lines().last().expect("run dir on stdout").trim())
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

const NONLINEAR: &str = r#"
dt_initial = 0.05
t_final = 1.0
output_stride = 5
epsilon = 100.0
seed = 3
enforce_budget = false

[grid]
k_max = 4
m_y = 32
l_y = 25.132741228718345
t_final = 100.0

[params]
nu = 0.05
mu = 0.05
beta = 1.0

[initial_profile]
kind = "random"
k_band = 2
m_band = 3
"#;

const SWEEP: &str = r#"
eps_lo = 10.0
eps_hi = 40.0
horizon = 1.0

[[blocks]]
nu = [0.05, 0.1]
mu = [0.05]

[solver]
dt_initial = 0.1
enforce_budget = false
initial_profile = { kind = "random", k_band = 1, m_band = 2 }

[solver.grid]
k_max = 2
m_y = 16
l_y = 25.132741228718345
t_final = 100.0
"#;

#[test]
fn linear_run_writes_trajectory_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin(
        tmp.path(),
        &["linear", "run", "--nu", "0.01", "--mu", "0.01", "--beta", "1", "--k", "1", "--eta", "3", "--t-final", "10"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = run_dir(&out);
    let csv = fs::read_to_string(dir.join("trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "t,re_0,im_0,re_1,im_1,ln_norm,ln_energy,dissipation_rate,ck_rate,residual_rate"
    );
    let last: Vec<f64> = csv.lines().last().unwrap().split(',').map(|x| x.parse().unwrap()).collect();
    assert!((last[0] - 10.0).abs() < 1e-12);
    let m = json(&dir.join("manifest.json"));
    assert_eq!(m["exit_code"], 0);
    assert_eq!(m["command"], "linear run");
    assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);
    assert!(dir.ends_with(&m["config_hash"].as_str().unwrap()[..16]));
    assert_eq!(json(&dir.join("summary.json"))["regime"], "MU3_LE_NU_LE_MU13");
}

#[test]
fn small_c2_is_a_validation_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin(
        tmp.path(),
        &["multipliers", "check", "--nu", "0.01", "--mu", "0.01", "--beta", "1", "--c2", "2000"],
    );
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("params.c2") && err.contains("3000"), "{err}");
}

#[test]
fn missing_and_malformed_inputs_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin(tmp.path(), &["linear", "run", "--nu", "0.01", "--mu", "0.01", "--beta", "1"]);
    assert_eq!(out.status.code(), Some(2));
    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, "k = 1.0\neta = 0.0\nbogus = 1\n[params]\nnu = 0.1\nmu = 0.1\nbeta = 1.0\n").unwrap();
    let out = bin(tmp.path(), &["linear", "run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));
}

#[test]
fn multiplier_check_and_table() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin(
        tmp.path(),
        &["multipliers", "check", "--nu", "0.01", "--mu", "0.001", "--beta", "1", "--lattice-size", "2000"],
    );
    assert!(out.status.success());
    let rep = json(&run_dir(&out).join("properties.json"));
    assert_eq!(rep["lower_bound_m2"]["violations"], 0);
    let out = bin(
        tmp.path(),
        &["multipliers", "table", "--nu", "0.01", "--mu", "0.001", "--beta", "1", "--mode", "1,4", "--mode", "2,-3", "--samples", "11"],
    );
    assert!(out.status.success());
    let csv = fs::read_to_string(run_dir(&out).join("multipliers.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 22);
}

#[test]
fn nonlinear_restart_matches_uninterrupted_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("nl.toml");
    fs::write(&cfg, NONLINEAR).unwrap();
    let out = bin(tmp.path(), &["nonlinear", "run", "--config", cfg.to_str().unwrap(), "--snapshot-every", "5"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let full = run_dir(&out);
    let sum = json(&full.join("summary.json"));
    assert_eq!(sum["status"]["status"], "completed");
    assert!(sum["invariants"]["divergence"].as_f64().unwrap() <= 1e-10);
    let m = json(&full.join("manifest.json"));
    assert_eq!(m["seeds"], serde_json::json!([3]));
    let snap = full.join("snapshots/step-00000010.snap");
    assert!(snap.exists());

    let out = bin(
        tmp.path(),
        &["nonlinear", "run", "--config", cfg.to_str().unwrap(), "--restart", snap.to_str().unwrap()],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let resumed = run_dir(&out);
    assert_ne!(resumed, full);
    let last = |d: &Path| fs::read_to_string(d.join("records.csv")).unwrap().lines().last().unwrap().to_string();
    assert_eq!(last(&full), last(&resumed));
    assert_eq!(
        fs::read(full.join("final.snap")).unwrap(),
        fs::read(resumed.join("final.snap")).unwrap()
    );
}

#[test]
fn fit_rates_reports_short_window() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("nl.toml");
    fs::write(&cfg, NONLINEAR).unwrap();
    let out = bin(tmp.path(), &["nonlinear", "run", "--config", cfg.to_str().unwrap()]);
    let dir = run_dir(&out);
    let sum = json(&dir.join("summary.json"));
    assert!(sum["rate_fit_error"].as_str().unwrap().contains("too short"));
    let out = bin(tmp.path(), &["fit", "rates", "--run", dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("need 20"));
}

#[test]
fn threshold_sweep_resumes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("sweep.toml");
    fs::write(&cfg, SWEEP).unwrap();
    let c = cfg.to_str().unwrap();
    let out = bin(tmp.path(), &["threshold", "sweep", "--config", c]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = run_dir(&out);
    let first = json(&dir.join("sweep.json"));
    assert_eq!(first["points"].as_array().unwrap().len(), 2);
    let csv = fs::read_to_string(dir.join("thresholds.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);

    // Tamper with one finished point: a resumed sweep must reuse it.
    let p0 = dir.join("points/point-0000.json");
    let mut v = json(&p0);
    v["epsilon_star"] = serde_json::json!(12.5);
    fs::write(&p0, serde_json::to_string(&v).unwrap()).unwrap();
    fs::remove_file(dir.join("points/point-0001.json")).unwrap();
    let out = bin(tmp.path(), &["threshold", "sweep", "--config", c, "--resume"]);
    assert!(out.status.success());
    assert_eq!(run_dir(&out), dir);
    let again = json(&dir.join("sweep.json"));
    assert_eq!(again["points"][0]["epsilon_star"], 12.5);
    assert_eq!(again["points"][1], first["points"][1]);
    assert!(dir.join("points/point-0001.json").exists());
}

#[test]
fn report_lists_runs() {
    let tmp = tempfile::tempdir().unwrap();
    bin(tmp.path(), &["linear", "run", "--nu", "0.1", "--mu", "0.1", "--beta", "1", "--k", "1", "--eta", "0", "--t-final", "5"]);
    bin(tmp.path(), &["multipliers", "check", "--nu", "0.1", "--mu", "0.1", "--beta", "1", "--lattice-size", "100"]);
    let out = bin(tmp.path(), &["report"]);
    assert!(out.status.success());
    let dir = run_dir(&out);
    let rep = json(&dir.join("report.json"));
    assert_eq!(rep["runs"].as_array().unwrap().len(), 2);
    let md = fs::read_to_string(dir.join("report.md")).unwrap();
    assert!(md.contains("| linear run | ok |") && md.contains("multipliers check"));
}
