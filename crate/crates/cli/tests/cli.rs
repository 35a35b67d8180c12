//! End-to-end runs of the `gfref` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(rel)
}

fn gfref(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gfref")).args(args).output().expect("binary runs")
}

fn ok_json(args: &[&str]) -> Value {
    let out = gfref(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn err_json(args: &[&str], code: i32) -> Value {
    let out = gfref(args);
    assert_eq!(out.status.code(), Some(code), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stderr).expect("stderr is JSON")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_rows(path: &Path) -> Vec<Vec<String>> {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    rdr.records().map(|r| r.unwrap().iter().map(String::from).collect()).collect()
}

#[test]
fn approx_prior_on_regular_design_matches_golden_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("prior.csv");
    let design = fixture("designs/regular_10x10.csv");
    ok_json(&["prior", "--data", s(&design), "--kind", "approx", "--nu", "0.5", "--m1", "12", "--m2", "12", "--delta", "0.133", "--out", s(&out)]);
    let got = read_rows(&out);
    let want = read_rows(&fixture("golden/prior_approx_regular_10x10.csv"));
    assert_eq!(got.len(), 200);
    assert_eq!(got.len(), want.len());
    for (g, w) in got.iter().zip(&want) {
        for (a, b) in g.iter().zip(w) {
            let (a, b): (f64, f64) = (a.parse().unwrap(), b.parse().unwrap());
            assert!((a - b).abs() <= 1e-9 * b.abs().max(1e-300), "{a} vs {b}");
        }
    }
}

#[test]
fn prior_reports_resolved_config_tuning_and_hash() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("p.csv");
    let v = ok_json(&["prior", "--data", s(&fixture("designs/hybrid_100.csv")), "--kind", "exact,approx,ig", "--normalize", "--grid-points", "60", "--out", s(&out)]);
    assert_eq!(v["command"], "prior");
    assert_eq!(v["config"]["normalize"], true);
    assert!(v["config"]["tuning"]["m1"].as_u64().unwrap() >= 4);
    let priors = v["result"]["priors"].as_array().unwrap();
    assert_eq!(priors.len(), 3);
    for p in priors {
        assert_eq!(p["sha256"].as_str().unwrap().len(), 64);
        assert!(p["normalization"].as_f64().unwrap() > 0.0);
    }
    let mut rdr = csv::Reader::from_path(&out).unwrap();
    let header: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header[0], "theta");
    assert!(header.contains(&"exact_ref_density".to_string()));
    assert!(header.contains(&"approx_ref_log_density".to_string()));
    assert!(header.contains(&"inverse_gamma_density".to_string()));
}

#[test]
fn fit_is_reproducible_and_traceable() {
    let dir = tempfile::tempdir().unwrap();
    let data = fixture("data/regular_10x10.csv");
    let run = |name: &str| {
        let out = dir.path().join(name);
        ok_json(&["fit", "--data", s(&data), "--prior", "approx", "--draws", "500", "--seed", "7", "--out-dir", s(&out)]);
        out
    };
    let (a, b) = (run("a"), run("b"));
    for f in ["draws.csv", "posterior_theta.csv", "prior.csv", "report.txt"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    let mut sa: Value = serde_json::from_slice(&std::fs::read(a.join("summary.json")).unwrap()).unwrap();
    let mut sb: Value = serde_json::from_slice(&std::fs::read(b.join("summary.json")).unwrap()).unwrap();
    // Only the output directory differs between the two runs.
    sa["config"]["out-dir"] = Value::Null;
    sb["config"]["out-dir"] = Value::Null;
    assert_eq!(sa, sb);
    let rate = sa["acceptance_rate"].as_f64().unwrap();
    assert!((0.5..=0.95).contains(&rate), "{rate}");
    assert_eq!(sa["prior_sha256"].as_str().unwrap().len(), 64);
    let header = std::fs::read_to_string(a.join("draws.csv")).unwrap();
    assert!(header.starts_with("beta_1,sigma2,theta"));
    assert_eq!(header.lines().count(), 501);
    let report = std::fs::read_to_string(a.join("report.txt")).unwrap();
    assert!(report.contains("posterior mode") && report.contains("HPD"));
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# reml settings\nnu = 1.5\nmethod = exact\n").unwrap();
    let data = fixture("data/regular_10x10.csv");
    let v = ok_json(&["--config", s(&cfg), "reml", "--data", s(&data)]);
    assert_eq!(v["config"]["nu"], 1.5);
    let v = ok_json(&["--config", s(&cfg), "reml", "--data", s(&data), "--nu", "0.5"]);
    assert_eq!(v["config"]["nu"], 0.5);
    assert!(v["result"]["fit"]["theta"].as_f64().unwrap() > 0.0);

    std::fs::write(&cfg, "nu = 1.5\nbogus_key = 3\n").unwrap();
    let e = err_json(&["--config", s(&cfg), "reml", "--data", s(&data)], 2);
    assert!(e["error"]["message"].as_str().unwrap().contains("bogus-key"));
}

#[test]
fn validation_failures_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let dup = dir.path().join("dup.csv");
    std::fs::write(&dup, "x,y,z\n0,0,1\n0.5,0.5,2\n0,0,3\n").unwrap();
    let e = err_json(&["reml", "--data", s(&dup)], 2);
    let msg = e["error"]["message"].as_str().unwrap();
    assert!(msg.contains(":4:") && msg.contains("line 2"), "{msg}");
    assert_eq!(e["error"]["kind"], "validation");

    err_json(&["fit", "--no-such-flag"], 2);
    err_json(&["reml"], 2);
    err_json(&["fit", "--data", s(&fixture("data/regular_10x10.csv")), "--prior", "flat"], 2);
    err_json(&["simulate", "--design", "regular:ten"], 2);
}

#[test]
fn numerical_failures_exit_with_code_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.csv");
    let e = err_json(
        &["prior", "--data", s(&fixture("designs/regular_10x10.csv")), "--kind", "exact", "--nu", "2.5", "--theta-min", "100", "--theta-max", "1000", "--out", s(&out)],
        3,
    );
    assert_eq!(e["error"]["kind"], "numerical");
}

#[test]
fn simulate_is_deterministic_and_readable_by_other_commands() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    for p in [&a, &b] {
        ok_json(&["simulate", "--design", "uniform:40:3", "--trend", "linear", "--theta", "0.3", "--seed", "5", "--out", s(p)]);
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let text = std::fs::read_to_string(&a).unwrap();
    assert!(text.starts_with("x,y,z,f2,f3\n"));
    assert_eq!(text.lines().count(), 41);

    let c = dir.path().join("c.csv");
    ok_json(&["simulate", "--design", s(&fixture("designs/incomplete_14x14.csv")), "--seed", "5", "--out", s(&c)]);
    assert_eq!(std::fs::read_to_string(&c).unwrap().lines().count(), 101);

    let v = ok_json(&["reml", "--data", s(&a)]);
    assert!(v["result"]["fit"]["sigma2"].as_f64().unwrap() > 0.0);
}

#[test]
fn smoothness_scan_and_semivariogram_write_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let data = fixture("data/regular_10x10.csv");
    let scan_csv = dir.path().join("scan.csv");
    let v = ok_json(&["select-nu", "--data", s(&data), "--nu-grid", "0.5,1.5", "--grid-points", "80", "--out", s(&scan_csv)]);
    let scan = &v["result"]["scan"];
    assert!(scan["argmax"].is_number());
    assert!(scan["log_c"].as_array().unwrap().iter().all(|c| c.as_f64().is_some_and(f64::is_finite)));
    assert_eq!(read_rows(&scan_csv).len(), 2);

    let sv_csv = dir.path().join("sv.csv");
    let v = ok_json(&["semivariogram", "--data", s(&data), "--bins", "10", "--out", s(&sv_csv)]);
    assert!(v["result"]["theta"].as_f64().unwrap() > 0.0);
    assert!(!read_rows(&sv_csv).is_empty());
}

#[test]
fn small_coverage_run_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cov");
    let v = ok_json(&["coverage", "--replicates", "4", "--draws", "300", "--priors", "ig,approx", "--seed", "9", "--out-dir", s(&out)]);
    let summaries = v["result"]["summaries"].as_array().unwrap();
    assert_eq!(summaries.len(), 3);
    assert!(out.join("report.csv").exists());
    let report: Value = serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["replicates"], 4);
}

#[test]
fn bench_writes_timings_and_honours_thread_setting() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bench.csv");
    let o = Command::new(env!("CARGO_BIN_EXE_gfref"))
        .args(["bench", "--n", "64", "--evaluations", "10", "--out", s(&out)])
        .env("GFREF_THREADS", "1")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["result"]["bench"]["ratio"].as_f64().unwrap() > 0.0);
    let rows = read_rows(&out);
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][0], "approximate");
    err_json(&["bench", "--n", "50"], 2);
}
