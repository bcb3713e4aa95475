use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn lel(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lel"))
        .current_dir(dir)
        .env("LEL_CACHE_DIR", dir.join("cache"))
        .args(args)
        .output()
        .expect("spawn lel")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = lel(dir, args);
    assert!(
        out.status.success(),
        "lel {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn files_with_suffix(dir: &Path, suffix: &str) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.to_string_lossy().ends_with(suffix))
        .collect();
    v.sort();
    v
}

#[test]
fn classify_reports_curve_position() {
    let tmp = TempDir::new().unwrap();
    let v = json(&ok(tmp.path(), &["classify", "8", "8", "11"]));
    assert_eq!(v["verdict"]["jl"], "AboveCurve");
    assert_eq!(v["code"], 2);
    assert!(v["scaling"]["k1"].is_number());
    let v = json(&ok(tmp.path(), &["classify", "3", "2", "11"]));
    assert_eq!(v["verdict"]["jl"], "BelowCurve");
    assert_eq!(v["code"], 1);
}

#[test]
fn classify_rejects_p_below_q() {
    let tmp = TempDir::new().unwrap();
    let out = lel(tmp.path(), &["classify", "2", "3", "11"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("p >= q"));
}

#[test]
fn unknown_config_key_is_named() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("lab.toml"), "tol_curve = 1e-9\nladder_levles = 3\n").unwrap();
    let out = lel(tmp.path(), &["--config", "lab.toml", "classify", "8", "8", "11"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("ladder_levles"));
}

#[test]
fn config_file_values_are_used() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("lab.toml"), "resolution = 20\nout_dir = \"from-config\"\n").unwrap();
    ok(tmp.path(), &["--config", "lab.toml", "scan", "11"]);
    let csv = files_with_suffix(&tmp.path().join("from-config"), ".csv");
    assert_eq!(csv.len(), 1);
    assert_eq!(fs::read_to_string(&csv[0]).unwrap().lines().count(), 401);
    // A flag beats the file.
    ok(tmp.path(), &["--config", "lab.toml", "scan", "11", "--resolution", "16", "--out", "flag"]);
    let csv = files_with_suffix(&tmp.path().join("flag"), ".csv");
    assert_eq!(fs::read_to_string(&csv[0]).unwrap().lines().count(), 257);
}

#[test]
fn missing_input_is_an_io_error() {
    let tmp = TempDir::new().unwrap();
    let out = lel(tmp.path(), &["compare", "nowhere.json"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nowhere.json"));
}

#[test]
fn single_cell_scan_equals_classify() {
    let tmp = TempDir::new().unwrap();
    for (p, q, n) in [("8", "8", "11"), ("3", "2", "11"), ("1.5", "1.2", "11")] {
        let code = json(&ok(tmp.path(), &["classify", p, q, n]))["code"].as_u64().unwrap();
        let (pc, qc): (f64, f64) = (p.parse().unwrap(), q.parse().unwrap());
        let (plo, phi) = ((pc - 0.5).to_string(), (pc + 0.5).to_string());
        let (qlo, qhi) = ((qc - 0.1).to_string(), (qc + 0.1).to_string());
        let out = ok(
            tmp.path(),
            &["scan", n, "--resolution", "1", "--p-window", &plo, &phi, "--q-window", &qlo, &qhi, "--no-cache"],
        );
        let header = json(&out);
        assert_eq!(header["cells"], 1);
        let mut counts = [0u64; 3];
        counts[code as usize] = 1;
        let got: Vec<u64> = header["counts"].as_array().unwrap().iter().map(|c| c.as_u64().unwrap()).collect();
        assert_eq!(got, counts, "({p}, {q})");
    }
}

#[test]
fn scan_header_carries_provenance() {
    let tmp = TempDir::new().unwrap();
    let h = json(&ok(tmp.path(), &["scan", "11", "--resolution", "32"]));
    assert_eq!(h["resolution"], 32);
    assert_eq!(h["cells"], 1024);
    assert_eq!(h["tool_version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(h["config_hash"].as_str().unwrap().len(), 64);
    let counts: u64 = h["counts"].as_array().unwrap().iter().map(|c| c.as_u64().unwrap()).sum();
    assert_eq!(counts, 1024);
}

#[test]
fn solve_then_compare_emits_crossings() {
    let tmp = TempDir::new().unwrap();
    let out = ok(tmp.path(), &["solve", "3", "3", "11", "--u0", "1", "--v0", "1", "--out", "o"]);
    assert_eq!(json(&out)["metadata"]["classification"]["kind"], "EntirePositive");
    let meta = files_with_suffix(&tmp.path().join("o"), ".json");
    assert_eq!(meta.len(), 1);
    assert!(meta[0].file_name().unwrap().to_string_lossy().starts_with("solve_p3_q3_N11_u1_v1_"));
    let rep = json(&ok(tmp.path(), &["compare", meta[0].to_str().unwrap(), "--out", "o"]));
    assert!(!rep["crossings_u"].as_array().unwrap().is_empty());
    assert_eq!(rep["ordered"], false);
    let crossings = files_with_suffix(&tmp.path().join("o"), ".crossings.csv");
    let text = fs::read_to_string(&crossings[0]).unwrap();
    assert!(text.starts_with("component,r\n"));
    assert!(text.lines().any(|l| l.starts_with("u,")));
}

#[test]
fn shooting_without_v0() {
    let tmp = TempDir::new().unwrap();
    let out = json(&ok(tmp.path(), &["solve", "5", "5", "11", "--bracket", "0.5", "1.5"]));
    assert_eq!(out["shot"]["v0"].as_f64(), Some(1.0));
    let out = lel(tmp.path(), &["solve", "3", "3", "11", "--bracket", "2", "3"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn eig_ladder_is_monotone() {
    let tmp = TempDir::new().unwrap();
    let rep = json(&ok(tmp.path(), &["eig", "8", "8", "11", "--ladder", "5", "--out", "o"]));
    assert_eq!(rep["verdict"], "SingularStable");
    let csv: Vec<PathBuf> = files_with_suffix(&tmp.path().join("o"), ".csv")
        .into_iter()
        .filter(|p| !p.to_string_lossy().ends_with(".profile.csv"))
        .collect();
    assert_eq!(csv.len(), 1);
    let text = fs::read_to_string(&csv[0]).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("k,M,lambda,residual,iterations"));
    let lambdas: Vec<f64> = lines.map(|l| l.split(',').nth(2).unwrap().parse().unwrap()).collect();
    assert_eq!(lambdas.len(), 5);
    assert!(lambdas.windows(2).all(|w| w[1] < w[0]), "{lambdas:?}");
}

#[test]
fn repeated_runs_and_cache_hits_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let args = |out: &'static str| ["eig", "12", "6", "11", "--ladder", "3", "--out", out];
    let fresh_a = ok(tmp.path(), &[&args("a")[..], &["--no-cache"]].concat());
    let fresh_b = ok(tmp.path(), &[&args("b")[..], &["--no-cache", "--jobs", "1"]].concat());
    let first = ok(tmp.path(), &args("c"));
    let hit = ok(tmp.path(), &args("d"));
    assert!(!String::from_utf8_lossy(&first.stderr).contains("cache hit"));
    assert!(String::from_utf8_lossy(&hit.stderr).contains("cache hit"));
    for o in [&fresh_b, &first, &hit] {
        assert_eq!(o.stdout, fresh_a.stdout);
    }
    let listing = |d: &str| -> Vec<(String, Vec<u8>)> {
        files_with_suffix(&tmp.path().join(d), "")
            .into_iter()
            .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
            .collect()
    };
    let a = listing("a");
    assert_eq!(a.len(), 3);
    for d in ["b", "c", "d"] {
        assert_eq!(listing(d), a, "{d}");
    }
    assert!(tmp.path().join("cache").is_dir());
}

#[test]
fn changed_tolerance_changes_the_file_name() {
    let tmp = TempDir::new().unwrap();
    ok(tmp.path(), &["scan", "11", "--resolution", "16", "--out", "o"]);
    ok(tmp.path(), &["scan", "11", "--resolution", "16", "--out", "o", "--tol-curve", "1e-6"]);
    assert_eq!(files_with_suffix(&tmp.path().join("o"), ".csv").len(), 2);
}

#[test]
fn curve_traces_the_diagonal_crossing() {
    let tmp = TempDir::new().unwrap();
    let s = json(&ok(tmp.path(), &["curve", "11", "--p-min", "4", "--p-max", "20", "--points", "9"]));
    assert!((s["diagonal"].as_f64().unwrap() - 6.9220246).abs() < 1e-6);
    let s = json(&ok(tmp.path(), &["curve", "10", "--points", "9"]));
    assert!(s["diagonal"].is_null());
    assert_eq!(s["roots"], 0);
}
