use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

const HEADER: &str = "suite,system_id,check_id,point_index,eps,value,tolerance,pass,wall_time_ms";

fn slowfast(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_slowfast")).args(args).output().expect("spawn slowfast")
}

fn write_config(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, v.to_string()).unwrap();
    path
}

fn config(system: &str, suites: &[&str]) -> Value {
    json!({
        "system_id": system,
        "initial_points": [{"y": [1.0], "x": [0.2], "p": [0.5], "q": [0.1]}],
        "random_points": 2,
        "eps_ladder": [0.1, 0.05, 0.025, 0.0125],
        "quadrature_N": 64,
        "horizon_c": 1.0,
        "suites": suites,
        "seed": 9,
        "output_path": "unused"
    })
}

fn run(dir: &TempDir, v: &Value, out: &str, extra: &[&str]) -> (Output, PathBuf) {
    let cfg = write_config(dir.path(), &format!("{out}.json"), v);
    let out = dir.path().join(out);
    let mut args = vec!["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    (slowfast(&args), out)
}

fn rows(out: &Path) -> Vec<Vec<String>> {
    let text = std::fs::read_to_string(out.join("results.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(HEADER));
    lines.map(|l| l.split(',').map(str::to_owned).collect()).collect()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn identities_on_oscillator_pass() {
    let dir = TempDir::new().unwrap();
    let (o, out) = run(&dir, &config("osc-const", &["identities"]), "ident", &["--jobs", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows = rows(&out);
    // 3 points × (9 identity rows + 4 connection rows)
    assert_eq!(rows.len(), 39);
    assert!(rows.iter().all(|r| r[0] == "identities" && r[7] == "true"));
    for id in ["homological_hp", "mean_lie_yq", "mean_s_x2p", "mean_dj", "mean_theta", "hor_dj", "hor_pushforward"] {
        assert!(rows.iter().any(|r| r[2] == id), "{id}");
    }
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["all_pass"], json!(true));
    assert_eq!(summary["suites"]["identities"]["rows"], json!(39));
}

#[test]
fn oracle_on_u_twist_pass() {
    let dir = TempDir::new().unwrap();
    let (o, out) = run(&dir, &config("u-twist", &["oracle"]), "oracle", &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows = rows(&out);
    // 3 points × (q1, q2, q3, theta, k_avg, 4 F rows)
    assert_eq!(rows.len(), 27);
    assert_eq!(rows.iter().filter(|r| r[2] == "f" && !r[4].is_empty()).count(), 12);
}

#[test]
fn drift_on_twist2_meets_slope_bands() {
    let dir = TempDir::new().unwrap();
    let mut v = config("twist2", &["drift"]);
    v["quadrature_N"] = json!(256);
    let (o, out) = run(&dir, &v, "drift", &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    // drift runs only from the explicit point
    let slopes = summary["slopes"].as_array().unwrap();
    assert_eq!(slopes.len(), 1);
    let sj = slopes[0]["slope_j"].as_f64().unwrap();
    let sf = slopes[0]["slope_f"].as_f64().unwrap();
    assert!((0.7..=1.3).contains(&sj) && (1.7..=2.3).contains(&sf), "{sj} {sf}");
    let rows = rows(&out);
    assert_eq!(rows.iter().filter(|r| r[2] == "drift_h").count(), 4);
    assert!(rows.iter().find(|r| r[2] == "slope_j").unwrap()[6] == "0.7..1.3");
}

#[test]
fn normal_form_suite_has_aggregate() {
    let dir = TempDir::new().unwrap();
    let mut v = config("shear", &["normal-form"]);
    v["random_points"] = json!(0);
    let (o, out) = run(&dir, &v, "nf", &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows = rows(&out);
    let ids: Vec<&str> = rows.iter().map(|r| r[2].as_str()).collect();
    assert_eq!(ids, ["first_integral", "renormalized_defect", "renormalized_defect_max", "split_refinement_128_256", "split_residual"]);
}

#[test]
fn suites_flag_overrides_config() {
    let dir = TempDir::new().unwrap();
    let (o, out) = run(&dir, &config("u-twist", &["drift"]), "override", &["--suites", "oracle"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(rows(&out).iter().all(|r| r[0] == "oracle"));
}

#[test]
fn reruns_identical_except_wall_time() {
    let dir = TempDir::new().unwrap();
    let v = config("twist2", &["identities", "oracle"]);
    let (a, out_a) = run(&dir, &v, "a", &["--jobs", "1"]);
    let (b, out_b) = run(&dir, &v, "b", &["--jobs", "3"]);
    assert_eq!((a.status.code(), b.status.code()), (Some(0), Some(0)));
    let strip = |rows: Vec<Vec<String>>| rows.into_iter().map(|mut r| { r.pop(); r }).collect::<Vec<_>>();
    assert_eq!(strip(rows(&out_a)), strip(rows(&out_b)));
}

#[test]
fn numerical_failures_become_failed_rows() {
    let dir = TempDir::new().unwrap();
    let mut v = config("twist2", &["identities"]);
    // coarse numeric orbits cannot close to this tolerance
    v["integrator"] = json!({"method": {"kind": "rk4", "steps_per_orbit": 64}, "closure_tol": 1e-14, "force_numeric": true});
    let (o, out) = run(&dir, &v, "fail", &[]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    let rows = rows(&out);
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|r| r[7] == "false" && r[5] == "NaN"));
}

#[test]
fn config_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    let mut cases = vec![];
    let mut v = config("twist2", &["drift"]);
    v["eps_ladder"] = json!([0.1, 0.2, 0.05]);
    cases.push(("ladder", v));
    let mut v = config("twist2", &["drift"]);
    v["system_id"] = json!("duffing");
    cases.push(("system", v));
    let mut v = config("twist2", &["drift"]);
    v["quadrature"] = json!(64);
    cases.push(("field", v));
    cases.push(("oracle", config("anharmonic", &["oracle"])));
    let mut v = config("twist2", &["drift"]);
    v["initial_points"] = json!([{"y": [1.0, 2.0], "x": [0.2], "p": [0.5], "q": [0.1]}]);
    cases.push(("dims", v));

    for (name, v) in cases {
        let cfg = write_config(dir.path(), &format!("{name}.json"), &v);
        let o = slowfast(&["validate", "--config", cfg.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(2), "{name}: {}", stderr(&o));
        let (o, out) = run(&dir, &v, name, &[]);
        assert_eq!(o.status.code(), Some(2), "{name}");
        assert!(!out.exists(), "{name}: no results on config errors");
    }
    let o = slowfast(&["validate", "--config", "/nonexistent/config.json"]);
    assert_eq!(o.status.code(), Some(2));
    let o = slowfast(&["run", "--config", "x.json", "--suites", "spectra"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn validate_accepts_shipped_configs() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in std::fs::read_dir(root).unwrap() {
        let path = entry.unwrap().path();
        let o = slowfast(&["validate", "--config", path.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}: {}", path.display(), stderr(&o));
        n += 1;
    }
    assert!(n >= 3);
}

#[test]
fn list_systems_names_catalog() {
    let o = slowfast(&["list-systems"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    for id in ["osc-const", "u-twist", "twist2", "shear", "anharmonic"] {
        assert!(text.lines().any(|l| l.starts_with(id)), "{id}");
    }
}
