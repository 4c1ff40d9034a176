use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn trinet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trinet")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).expect("utf-8 output")
}

fn json(args: &[&str]) -> Value {
    let o = trinet(args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_str(&stdout(&o)).expect("json output")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

/// Compares `actual` with a committed file; `UPDATE_GOLDEN=1` rewrites it.
fn check_golden(name: &str, actual: &str) {
    let path = golden(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        fs::write(&path, actual).unwrap();
        return;
    }
    let expected = fs::read_to_string(&path).unwrap_or_else(|_| panic!("missing golden file {name}; rerun with UPDATE_GOLDEN=1"));
    assert_eq!(actual, expected, "{name} differs from the golden file");
}

#[test]
fn enumerate_matches_golden_files() {
    for n in 3..=7 {
        let o = trinet(&["enumerate", "--n", &n.to_string()]);
        assert!(o.status.success());
        check_golden(&format!("enumerate_{n}.json"), &stdout(&o));
    }
}

#[test]
fn matrix_matches_golden_files() {
    for n in [3, 4] {
        let o = trinet(&["matrix", "--n", &n.to_string()]);
        assert!(o.status.success());
        check_golden(&format!("matrix_{n}.csv"), &stdout(&o));
    }
}

#[test]
fn enumerate_counts() {
    let six = json(&["enumerate", "--n", "6"]);
    assert_eq!(six["counts"], serde_json::json!({"correlators": 32, "linear": 10, "quadratic": 1, "outcomes": 33}));
    let three = json(&["enumerate", "--n", "3"]);
    assert_eq!(three["words"], serde_json::json!(["jj0", "jkl"]));
    let nine = json(&["enumerate", "--n", "9", "--rule", "segment-join"]);
    assert_eq!(nine["counts"]["correlators"], 702);
    assert_eq!(nine["counts"]["linear"], 395);
    assert_eq!(nine["counts"]["quadratic"], 14);
}

#[test]
fn invalid_sizes_are_usage_errors() {
    for args in [["enumerate", "--n", "2"], ["enumerate", "--n", "10"], ["bound", "--n", "x"]] {
        assert_eq!(code(&trinet(&args)), 2, "{args:?}");
    }
}

#[test]
fn bounds_of_small_polygons() {
    let six = json(&["bound", "--n", "6", "--mode", "single", "--direction", "max"]);
    assert!((six["bound"].as_f64().unwrap() - 0.414214).abs() < 1e-6);
    assert_eq!(six["status"], "converged");
    assert_eq!(six["constraint_counts"]["quadratic"], 1);
    let five = json(&["bound", "--n", "5"]);
    assert_eq!(five["exact"], "5/11");
    let min = json(&["bound", "--n", "4", "--direction", "min"]);
    assert!(min["bound"].as_f64().unwrap() <= -2.0 / 9.0);
}

#[test]
fn unconverged_runs_report_and_resume() {
    let dir = TempDir::new().unwrap();
    let cp = dir.path().join("state.json");
    let o = trinet(&["bound", "--n", "7", "--max-iter", "2", "--checkpoint", cp.to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    let partial: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(partial["status"], "not-converged");
    let done = json(&["bound", "--n", "7", "--resume", cp.to_str().unwrap()]);
    assert_eq!(done["status"], "converged");
    assert!((done["bound"].as_f64().unwrap() - 0.3931).abs() < 1e-3);
}

#[test]
fn certify_outputs() {
    let hex = json(&["certify", "--n", "6", "--format", "json"]);
    assert_eq!(hex["root"], "sqrt(2)-1");
    assert_eq!(hex["coefficients"], serde_json::json!(["1/256", "-1/128", "-1/256"]));
    assert_eq!(hex["active"].as_array().unwrap().len(), 22);
    assert_eq!(hex["cancelled"], 20);
    let five = trinet(&["certify", "--n", "5"]);
    assert!(stdout(&five).contains("root 5/11"));
    assert_eq!(code(&trinet(&["certify", "--n", "7"])), 4);
}

#[test]
fn hexagon_matrix_is_square() {
    let o = trinet(&["matrix", "--n", "6"]);
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 34);
    assert!(lines.iter().all(|l| l.split(',').count() == 34));
    assert!(lines[0].starts_with("outcome,1,"));
}

#[test]
fn finner_conversions() {
    let v = json(&["finner", "--e", "0.333333,0.666667"]);
    assert!(v["finner_margin"].as_f64().unwrap().abs() < 1e-6);
    for (key, want) in [("p111", 0.125), ("p112", 0.0), ("p123", 0.0208333)] {
        assert!((v[key].as_f64().unwrap() - want).abs() < 1e-6, "{key}");
    }
    let exact = json(&["finner", "--p", "1/8,0,1/48"]);
    assert_eq!(exact["saturated"], true);
    assert_eq!(exact["exact"]["e2"], "1/3");
    for bad in [vec!["finner", "--e", "0.1"], vec!["finner", "--p", "a,b,c"], vec!["finner", "--p", "1,1,1"], vec!["finner"]] {
        assert_eq!(code(&trinet(&bad)), 2, "{bad:?}");
    }
}

#[test]
fn no_saturating_opi_strategy_on_small_grids() {
    for k in ["1", "2", "4"] {
        let o = trinet(&["verify-theorem", "--k", k]);
        assert_eq!(code(&o), 0);
        assert_eq!(stdout(&o), "EMPTY\n");
    }
}

#[test]
fn scans_are_reproducible() {
    let dir = TempDir::new().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = trinet(&["scan", "--k", "3", "--samples", "200", "--seed", "11", "--out", out.to_str().unwrap()]);
        assert!(o.status.success());
        let manifest: Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join(format!("{name}.manifest.json"))).unwrap()).unwrap();
        (fs::read_to_string(out).unwrap(), manifest)
    };
    let (a, ma) = run("a.csv");
    let (b, mb) = run("b.csv");
    assert_eq!(a, b);
    assert_eq!(ma["output_digest"], mb["output_digest"]);
    assert_eq!(ma["input_digest"], mb["input_digest"]);
    assert_eq!(ma["seed"], 11);
    assert!(a.starts_with("k,strategy_hash,e2_avg,e3_avg,opi_dev,finner_margin\n"));
    assert_eq!(a.lines().count(), 201);
    for line in a.lines().skip(1) {
        let margin: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!(margin >= -1e-12);
    }
}

#[test]
fn bound_digests_ignore_timing() {
    let dir = TempDir::new().unwrap();
    let digest = |name: &str| {
        let out = dir.path().join(name);
        assert!(trinet(&["bound", "--n", "6", "--out", out.to_str().unwrap()]).status.success());
        let m: Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join(format!("{name}.manifest.json"))).unwrap()).unwrap();
        m["output_digest"].clone()
    };
    assert_eq!(digest("x.json"), digest("y.json"));
}

/// Bound ledger with a finished cumulative series, so the region and fit
/// commands need no solver runs.
fn write_ledger(dir: &Path) -> PathBuf {
    let path = dir.join("bounds.jsonl");
    let max = [1.0, 0.5, 5.0 / 11.0, 0.40404, 0.392037, 0.379197, 0.375051];
    let mut text = String::new();
    for (i, b) in max.iter().enumerate() {
        text.push_str(&format!("{{\"polygon\":{},\"mode\":\"cumulative\",\"direction\":\"max\",\"bound\":{b}}}\n", i + 3));
        text.push_str(&format!(
            "{{\"polygon\":{},\"mode\":\"cumulative\",\"direction\":\"min\",\"bound\":{}}}\n",
            i + 3,
            -1.0 / 3.0
        ));
    }
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn region_draws_the_plane() {
    let dir = TempDir::new().unwrap();
    let ledger = write_ledger(dir.path());
    let o = trinet(&["region", "--ledger", ledger.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.starts_with("kind,label,e2_start,e3_start,e2_end,e3_end\n"));
    assert!(text.contains("finner,p111=1/8,0.333333333,0.666666667,0.555555556,0.333333333"));
    let nine = text.lines().find(|l| l.starts_with("bound_max,n=9,")).expect("enneagon line");
    let e2: f64 = nine.split(',').nth(2).unwrap().parse().unwrap();
    assert!((e2 - 0.375).abs() < 1e-3);
    assert_eq!(text.lines().filter(|l| l.starts_with("positivity")).count(), 3);
    assert_eq!(text.lines().filter(|l| l.starts_with("bound_min")).count(), 7);
}

#[test]
fn fit_reads_the_ledger() {
    let dir = TempDir::new().unwrap();
    let ledger = write_ledger(dir.path());
    let f = json(&["fit", "--ledger", ledger.to_str().unwrap()]);
    assert_eq!(f["points"].as_array().unwrap().len(), 7);
    assert!(f["limit"].as_f64().unwrap().is_finite());
    assert_eq!(code(&trinet(&["fit", "--values", "1,2"])), 2);
}

#[test]
fn thread_variable_is_validated() {
    let o = Command::new(env!("CARGO_BIN_EXE_trinet"))
        .args(["enumerate", "--n", "3"])
        .env("TRINET_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
    let o =
        Command::new(env!("CARGO_BIN_EXE_trinet")).args(["enumerate", "--n", "3"]).env("TRINET_THREADS", "2").output().unwrap();
    assert!(o.status.success());
}
