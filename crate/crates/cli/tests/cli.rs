use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const LOGISTIC_1: &str = "expr:x/(x+(1-x)*exp(1))";
const LOGISTIC_2: &str = "expr:x/(x+(1-x)*exp(2))";
const LOGISTIC_3: &str = "expr:x/(x+(1-x)*exp(3))";
const LOGISTIC_SQRT2: &str = "expr:x/(x+(1-x)*exp(1.4142135623730951))";

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_szekeres"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn analyze_logistic_pair_is_irrational() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["analyze", "--f", LOGISTIC_1, "--g", LOGISTIC_SQRT2], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&dir.path().join("decomposition.json"));
    assert_eq!(v["schema_version"], 1);
    let comps = v["components"].as_array().unwrap();
    assert_eq!(comps.len(), 1);
    assert_eq!(comps[0]["kind"], "irrational");
    assert!((comps[0]["tau"].as_f64().unwrap() - 2f64.sqrt()).abs() < 1e-8);
    assert!(dir.path().join("component_0_field.csv").exists());
}

#[test]
fn analyze_identity_pair() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["analyze", "--f", "expr:x", "--g", "expr:x"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let v = json(&dir.path().join("decomposition.json"));
    assert_eq!(v["components"].as_array().unwrap().len(), 0);
    let fp = &v["fixed_points"].as_array().unwrap()[0];
    assert_eq!((fp["lo"].as_f64(), fp["hi"].as_f64()), (Some(0.0), Some(1.0)));
}

#[test]
fn malformed_input_exits_3_with_caret() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["analyze", "--f", "expr:x/(x+(1-x)*exp(1)", "--g", "expr:x"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains('^') && err.contains("column"), "{err}");
    assert!(!dir.path().join("decomposition.json").exists());
}

#[test]
fn path_rational_pair_commutes_to_roundoff() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["path", "--f", LOGISTIC_3, "--g", LOGISTIC_2, "--lattice-x", "512"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&dir.path().join("path_report.json"));
    assert!(v["path"]["commutation_residual"].as_f64().unwrap() < 1e-9);
    assert_eq!(v["decomposition"]["components"][0]["p"], 2);
    assert_eq!(v["decomposition"]["components"][0]["q"], 3);
    assert_eq!(v["path"]["ok"], true);
}

#[test]
fn endpoint_frames_are_exact() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["path", "--f", LOGISTIC_1, "--g", LOGISTIC_SQRT2, "--times", "0,1", "--lattice-t", "3", "--lattice-x", "64"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(dir.path().join("frames.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,x,f_t,g_t,df_t,dg_t"));
    let mut rows = 0;
    for line in lines {
        let v: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        let (t, x) = (v[0], v[1]);
        if t == 0.0 {
            let e1 = (-1f64).exp();
            let e2 = (-(2f64.sqrt())).exp();
            assert!((v[2] - x * e1 / (x * e1 + 1.0 - x)).abs() < 1e-15);
            assert!((v[3] - x * e2 / (x * e2 + 1.0 - x)).abs() < 1e-15);
        } else {
            assert_eq!(t, 1.0);
            assert_eq!((v[2], v[3], v[4], v[5]), (x, x, 1.0, 1.0));
        }
        rows += 1;
    }
    assert_eq!(rows, 2 * 257);
}

#[test]
fn verify_linear_reports_lambda() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["verify", "--f", "expr:x/2", "--half-open", "hi"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&dir.path().join("audit.json"));
    assert!((v["lambda"].as_f64().unwrap() - 2.0 * 2f64.ln()).abs() < 1e-12);
    assert_eq!(v["ok"], true);
}

#[test]
fn verify_logistic_scaling() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["verify", "--f", LOGISTIC_1, "--g", LOGISTIC_2], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&dir.path().join("audit.json"));
    assert!(v["scaling_check"].as_f64().unwrap() < 1e-8);
    assert!((v["centralizer"]["tau"].as_f64().unwrap() - 2.0).abs() < 1e-8);
}

#[test]
fn non_commuting_exits_5() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["verify", "--f", LOGISTIC_1, "--g", "expr:(x+x^2)/2"], dir.path());
    assert_eq!(o.status.code(), Some(5));
    assert!(!dir.path().join("audit.json").exists());
}

#[test]
fn path_times_outside_unit_interval_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["path", "--f", "expr:x/2", "--g", "expr:x/4", "--half-open", "hi", "--lattice-x", "64", "--times", "0,-1"], dir.path());
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!dir.path().join("frames.csv").exists());
}

#[test]
fn half_open_end_is_not_checked_as_fixed() {
    // x/2 does not fix 1, which is outside [0, 1)
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["path", "--f", "expr:x/2", "--g", "expr:x/4", "--half-open", "hi", "--lattice-x", "64"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&dir.path().join("path_report.json"));
    assert_eq!(v["path"]["checks"]["f0_fixed"], true);
}

#[test]
fn tolerance_overrides_reach_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tol.conf");
    fs::write(&cfg, "eps_rat=1e-6\nq_max=12\n").unwrap();
    let o = run(&["analyze", "--f", LOGISTIC_1, "--g", LOGISTIC_SQRT2, "--config", cfg.to_str().unwrap(), "--tol.q_max=20", "--grid", "1025"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&dir.path().join("decomposition.json"));
    assert_eq!(v["tolerances"]["q_max"], 20);
    assert_eq!(v["tolerances"]["grid"], 1025);
    assert_eq!(v["tolerances"]["eps_rat"].as_f64(), Some(1e-6));
}

#[test]
fn csv_inputs_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let tol = szekeres::Tolerances::default();
    let f = szekeres::samples::logistic::<f64>(1.0);
    let g = szekeres::samples::logistic::<f64>(2.0);
    let (fp, gp) = (dir.path().join("f.csv"), dir.path().join("g.csv"));
    f.write_csv(fs::File::create(&fp).unwrap(), tol.grid).unwrap();
    g.write_csv(fs::File::create(&gp).unwrap(), tol.grid).unwrap();
    let spec = |p: &Path| format!("csv:{}", p.display());
    let o = run(&["analyze", "--f", &spec(&fp), "--g", &spec(&gp)], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&dir.path().join("decomposition.json"));
    assert_eq!(v["components"][0]["kind"], "rational");
    assert_eq!((v["components"][0]["p"].as_i64(), v["components"][0]["q"].as_i64()), (Some(2), Some(1)));
}
