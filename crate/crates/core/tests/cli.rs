use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn memoryscape(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_memoryscape"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn curve_matches_golden_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = memoryscape(
        &["bifurcation-curve", "--case", "i", "--r-min", "1.0", "--r-max", "2.5", "--count", "2", "--out", "run"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let got = fs::read_to_string(dir.path().join("run/bifurcation_curve.csv")).unwrap();
    let want = fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/curve_case_i.csv")).unwrap();
    assert_eq!(got, want);
}

#[test]
fn curve_sidecar_records_resolved_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = memoryscape(&["bifurcation-curve", "--count", "5", "--jobs", "2", "--out", "."], dir.path());
    assert!(out.status.success());
    let side = json(&dir.path().join("bifurcation_curve.json"));
    assert_eq!(side["schema_version"], 1);
    assert_eq!(side["toolkit_version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(side["result"]["csv_schema"], "R,alpha_l,alpha_r,n_l,n_r,abs_alpha_l");
    assert_eq!(side["result"]["kernel_normalization"], "mass-one");
    assert_eq!(side["result"]["n_max"], 512);
    for key in ["case", "R", "N", "dt", "tmax", "tol", "seed", "normalization", "jobs", "r_min", "r_max", "r_count"] {
        assert!(!side["config"][key].is_null(), "missing {key}");
    }
    let csv = fs::read_to_string(dir.path().join("bifurcation_curve.csv")).unwrap();
    assert_eq!(csv.lines().count(), 6);
}

#[test]
fn full_sweep_orders_window_edges_below_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = memoryscape(&["bifurcation-curve", "--r-min", "0.1", "--r-max", "3.0", "--count", "200"], dir.path());
    assert!(out.status.success());
    let csv = fs::read_to_string(dir.path().join("bifurcation_curve.csv")).unwrap();
    for line in csv.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let r: f64 = f[0].parse().unwrap();
        let (ar, al): (f64, f64) = (f[2].parse().unwrap(), f[5].parse().unwrap());
        if r < 2.1 {
            assert!(al < ar, "R = {r}");
        }
    }
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = memoryscape(&["bifurcation-curve", "--count", "0"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("empty R sweep"));
    assert_eq!(memoryscape(&["stability", "--case", "iv"], dir.path()).status.code(), Some(2));
    assert_eq!(memoryscape(&["simulate", "--dt", "1.0"], dir.path()).status.code(), Some(2));
    fs::write(dir.path().join("bad.toml"), "radius = 1.0\n").unwrap();
    assert_eq!(memoryscape(&["stability", "--config", "bad.toml"], dir.path()).status.code(), Some(2));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), "case = \"iii\"\nR = 1.5\nalpha = 3.0\n").unwrap();
    let out = memoryscape(&["stability", "--config", "run.toml", "--R", "2.0", "--out", "o"], dir.path());
    assert!(out.status.success());
    let report = json(&dir.path().join("o/stability.json"));
    assert_eq!(report["config"]["case"], "iii");
    assert_eq!(report["config"]["R"], 2.0);
    assert_eq!(report["config"]["alpha"], 3.0);
    let stdout: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(stdout, report);
}

#[test]
fn stability_beyond_the_window_lists_destabilizing_modes() {
    let dir = tempfile::tempdir().unwrap();
    let out = memoryscape(&["stability", "--alpha", "32.9"], dir.path());
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    let c = &r["result"]["classification"];
    assert_eq!(c["verdict"]["state"], "unstable");
    assert_eq!(c["verdict"]["modes"], serde_json::json!([2]));
    assert_eq!(r["result"]["window"]["n_r"], 2);
}

#[test]
fn simulate_writes_profile_and_honours_strict() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["simulate", "--case", "ii", "--alpha", "5", "--N", "32", "--tmax", "40", "--out", "s"];
    let out = memoryscape(&args, dir.path());
    assert_eq!(out.status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("s/simulate.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("x,u,k"));
    let xs: Vec<f64> = lines.map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(xs.len(), 32);
    assert!(xs[0] == 0.0 && xs[31] < 2.0 * std::f64::consts::PI);
    let summary = json(&dir.path().join("s/simulate.json"));
    assert_eq!(summary["result"]["k_sup_bound_holds"], true);

    let strict = ["simulate", "--case", "ii", "--alpha", "5", "--N", "32", "--tmax", "0.5", "--out", "s", "--strict"];
    assert_eq!(memoryscape(&strict, dir.path()).status.code(), Some(4));
}

#[test]
fn blow_up_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = memoryscape(&["simulate", "--alpha", "5000", "--N", "32", "--tmax", "50"], dir.path());
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stdout));
    let summary = json(&dir.path().join("simulate.json"));
    assert!(summary["result"]["blow_up"].as_str().unwrap().contains("blow-up"));
}

#[test]
fn profiles_run_all_six_probes() {
    let dir = tempfile::tempdir().unwrap();
    let out = memoryscape(&["profiles", "--N", "32", "--tmax", "5", "--out", "p"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let report = json(&dir.path().join("p/profiles.json"));
    let probes = report["result"]["probes"].as_array().unwrap();
    assert_eq!(probes.len(), 6);
    let w = &report["result"]["window"];
    let ar = w["alpha_r"].as_f64().unwrap();
    assert!((probes[0]["alpha"].as_f64().unwrap() - (ar - 0.1)).abs() < 1e-12);
    assert!((probes[2]["alpha"].as_f64().unwrap() - 2.0 * ar).abs() < 1e-12);
    for p in probes {
        let file = p["run"]["csv"].as_str().unwrap();
        assert!(dir.path().join("p").join(file).exists());
    }
}

#[test]
fn classify_reports_both_paths_and_the_empirical_onset() {
    let dir = tempfile::tempdir().unwrap();
    let out = memoryscape(&["classify", "--case", "i"], dir.path());
    assert!(out.status.success());
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    let modes = r["result"]["modes"].as_array().unwrap();
    assert_eq!(modes.len(), 2);
    for m in modes {
        assert!(m["analytic"]["direction"].is_string());
        assert!(m["analytic"]["printed_direction"].is_string());
        assert_eq!(m["empirical"]["kind"], "subcritical");
        assert_eq!(m["analytic_matches_empirical"], true);
        if m["analytic"]["paths_agree"] == false {
            assert!(m["analytic_paths_disagree"]["printed"].is_number());
        }
    }
}

#[test]
fn classify_interior_mode_is_unstable() {
    let dir = tempfile::tempdir().unwrap();
    let out = memoryscape(&["classify", "--case", "ii", "--mode", "3", "--no-probe"], dir.path());
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    let m = &r["result"]["modes"][0];
    assert_eq!(m["analytic"]["is_endpoint"], false);
    assert_eq!(m["analytic"]["branch_stability"], "unstable");
}

#[test]
fn case_two_just_past_the_right_edge_is_a_small_cosine() {
    let dir = tempfile::tempdir().unwrap();
    let out = memoryscape(&["stability", "--case", "ii"], dir.path());
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    let (ar, nr) = (r["result"]["window"]["alpha_r"].as_f64().unwrap(), r["result"]["window"]["n_r"].clone());
    let alpha = format!("{}", ar + 0.1);
    let args = ["simulate", "--case", "ii", "--alpha", &alpha, "--N", "32", "--stop-rule", "rate-per-time", "--tol", "1e-8", "--tmax", "20000"];
    let out = memoryscape(&args, dir.path());
    assert_eq!(out.status.code(), Some(0));
    let s = json(&dir.path().join("simulate.json"));
    assert_eq!(s["result"]["converged"], true);
    assert_eq!(s["result"]["dominant_mode"], nr);
    let amp = s["result"]["amplitude"].as_f64().unwrap();
    assert!(amp > 1e-2 && amp < 0.3, "{amp}");
}
