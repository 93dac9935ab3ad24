use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn utilmax(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_utilmax")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn market(name: &str) -> String {
    fixture(name).display().to_string()
}

#[test]
fn binomial_exponential_solve() {
    let m = market("binomial.json");
    let o = utilmax(&["solve", "--market", &m, "--utility", "exp:gamma=1", "--wealth", "0"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let doc: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let value = doc["value"].as_f64().unwrap();
    assert!((value - 0.055059).abs() < 5e-7, "{value}");
    // y_hat = 1 - u(0) for exponential utility
    assert!((doc["y_hat"].as_f64().unwrap() - (1.0 - value)).abs() < 1e-9);
    assert_eq!(doc["certificate"]["passed"], Value::Bool(true));
}

#[test]
fn malformed_probabilities_exit_2() {
    let o = utilmax(&["solve", "--market", &market("bad_probs.json"), "--utility", "exp", "--wealth", "0"]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("bad_probs.json") && err.contains("node 0"), "{err}");
}

#[test]
fn increasing_price_exit_3() {
    let o = utilmax(&["solve", "--market", &market("increasing.json"), "--utility", "exp", "--wealth", "0"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("martingale"));
    let o = utilmax(&["polytope", "--market", &market("increasing.json")]);
    assert_eq!(o.status.code(), Some(3));
    let doc: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(doc["empty"], Value::Bool(true));
}

#[test]
fn verify_round_trip_and_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.json");
    let m = market("binomial.json");
    let r = report.display().to_string();
    let o = utilmax(&["solve", "--market", &m, "--utility", "exp:gamma=1", "--wealth", "0", "--out", &r]);
    assert_eq!(o.status.code(), Some(0));
    let o = utilmax(&["verify", "--market", &m, "--report", &r]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));

    let mut doc: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let f0 = doc["f_hat"][0].as_f64().unwrap();
    doc["f_hat"][0] = serde_json::json!(f0 + 0.1);
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, doc.to_string()).unwrap();
    let o = utilmax(&["verify", "--market", &m, "--report", &bad.display().to_string(), "--format", "csv"]);
    assert_eq!(o.status.code(), Some(1));
    let out = stdout(&o);
    assert!(out.starts_with("check,location,residual,pass\n"));
    for check in ["budget,", "fenchel,"] {
        let line = out.lines().find(|l| l.starts_with(check)).unwrap();
        assert!(line.ends_with(",false"), "{line}");
    }

    let missing = dir.path().join("missing.json").display().to_string();
    assert_eq!(utilmax(&["verify", "--market", &m, "--report", &missing]).status.code(), Some(2));
}

#[test]
fn satiated_instance_is_degenerate() {
    let m = market("binomial.json");
    let o = utilmax(&["verify", "--market", &m, "--utility", "trunclin:bliss=1", "--wealth", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let doc: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let names: Vec<&str> = doc["checks"].as_array().unwrap().iter().map(|c| c["name"].as_str().unwrap()).collect();
    assert!(!names.contains(&"replication") && !names.contains(&"value-chain"));
    assert!(stdout(&o).contains("SATIATED"));
}

#[test]
fn exponential_curves_follow_the_wealth_shift() {
    let m = market("binomial.json");
    let o = utilmax(&["curves", "--market", &m, "--utility", "exp:gamma=1", "--from", "0", "--to", "2", "--step", "0.25"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    let mut rows = out.lines();
    assert_eq!(rows.next(), Some("x,u_primal,u_dual,y_hat"));
    let rows: Vec<Vec<f64>> = rows.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 9);
    // -ln(1 - u(0)) for the binomial fixture
    let shift = -(1.0 - 0.0550592125788451f64).ln();
    for r in &rows {
        let oracle = 1.0 - (-r[0] - shift).exp();
        assert!((r[1] - oracle).abs() < 1e-9 && (r[2] - oracle).abs() < 1e-9, "{r:?}");
    }
    for w in rows.windows(3) {
        assert!(w[1][1] >= w[0][1] && w[2][1] - 2.0 * w[1][1] + w[0][1] <= 1e-12);
    }
}

#[test]
fn quadratic_curve_and_empty_range() {
    let m = market("binomial.json");
    let o = utilmax(&["curves", "--market", &m, "--utility", "quad:bliss=1", "--from", "0", "--to", "0", "--step", "1"]);
    let out = stdout(&o);
    let row: Vec<f64> = out.lines().nth(1).unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert!((row[1] - 0.05).abs() < 1e-12 && (row[2] - 0.05).abs() < 1e-12, "{row:?}");
    let o = utilmax(&["curves", "--market", &m, "--utility", "exp", "--from", "1", "--to", "0", "--step", "0.5"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "x,u_primal,u_dual,y_hat\n");
}

#[test]
fn outputs_are_byte_identical() {
    let m = market("trinomial.json");
    let args = ["solve", "--market", &m, "--utility", "exp:gamma=1", "--wealth", "0.3", "--seed", "7"];
    assert_eq!(stdout(&utilmax(&args)), stdout(&utilmax(&args)));
}

#[test]
fn polytope_and_entropy() {
    let m = market("trinomial.json");
    let o = utilmax(&["polytope", "--market", &m]);
    assert_eq!(o.status.code(), Some(0));
    let doc: Value = serde_json::from_str(&stdout(&o)).unwrap();
    // vertices of {2 q1 + q2 + 0.5 q3 = 1}: (0, 1, 0) and (1/3, 0, 2/3)
    let v = doc["vertices"].as_array().unwrap();
    assert_eq!(v.len(), 2);
    let o = utilmax(&["entropy", "--market", &m, "--utility", "exp", "--measure", "0,1,0"]);
    let doc: Value = serde_json::from_str(&stdout(&o)).unwrap();
    // KL of the point mass on the middle state: -ln 0.3
    let kl = doc["measures"][0]["kl"].as_f64().unwrap();
    assert!((kl + 0.3f64.ln()).abs() < 1e-12);
}

#[test]
fn orlicz_and_levy_commands() {
    let o = utilmax(&["norm", "--samples", &market("norm_sample.csv"), "--young", "power:p=2"]);
    assert_eq!(o.status.code(), Some(0));
    let doc: Value = serde_json::from_str(&stdout(&o)).unwrap();
    // L^2 norm: sqrt(E[X^2]) with weights 1/4, 1/4, 1/2
    let oracle = (0.25 * 1.0 + 0.25 * 4.0 + 0.5 * 0.25f64).sqrt();
    assert!((doc["norm"].as_f64().unwrap() - oracle).abs() < 1e-10);

    let o = utilmax(&["localize", "--samples", &market("paths.csv"), "--young", "cosh", "--set", "max=1.5", "--set", "all"]);
    assert_eq!(o.status.code(), Some(0));
    let doc: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(doc["holds"], Value::Bool(true));

    let o = utilmax(&["levy-check", "--family", "dexp:intensity=1,p_up=0.5,eta=2", "--moment", "exp=1"]);
    let doc: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(doc["finite"], Value::Bool(true));
    assert!((doc["integral"].as_f64().unwrap() - 2.0 * (-1.0f64).exp()).abs() < 1e-8);
    let o = utilmax(&["levy-check", "--family", "stable:alpha=1.5,scale=1", "--moment", "power=1.6"]);
    let doc: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(doc["finite"], Value::Bool(false));
}

#[test]
fn bad_flags_exit_2() {
    let m = market("binomial.json");
    assert_eq!(utilmax(&["solve", "--market", &m, "--utility", "nope", "--wealth", "0"]).status.code(), Some(2));
    assert_eq!(utilmax(&["solve", "--market", &m, "--utility", "exp"]).status.code(), Some(2));
    assert_eq!(utilmax(&["solve", "--market", &m, "--utility", "exp", "--wealth", "0", "--tol", "-1"]).status.code(), Some(2));
}
