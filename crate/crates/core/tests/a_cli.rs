mod common;

use std::path::{Path, PathBuf};
use std::process::Command;

use tau_lab::cli::{run, EXIT_INPUT, EXIT_PASS, EXIT_RESIDUAL};
use tau_lab::opalgebra::c64;
use tau_lab::tauflow::Soliton;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn run_with(args: &[&str]) -> i32 {
    let mut argv = vec!["tau-lab"];
    argv.extend_from_slice(args);
    run(argv)
}

fn run_config(sub: &str, config: &Path, out: &Path, extra: &[&str]) -> i32 {
    let mut args = vec![sub, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    run_with(&args)
}

#[test]
fn trivial_trisecant_config_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("triv.json");
    assert_eq!(run_config("trisecant", &configs().join("triv.json"), &out, &[]), EXIT_PASS);
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap();
    assert_eq!(report["max_residual"].as_f64().unwrap(), 0.0);
    assert_eq!(report["entries"].as_array().unwrap().len(), 2);
}

/// Writes the closed-form grid as a CSV fixture, then compares the CLI output
/// with it line by line.
#[test]
fn tau_grid_matches_closed_form_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let sol = Soliton { p: c64(0.4, 0.0), q: c64(-0.3, 0.0), c: c64(0.8, 0.0) };
    let axis = [-0.2, -0.1, 0.0, 0.1, 0.2];
    let mut fixture = String::from("t1,t2,t3,fiber,re_tau,im_tau\n");
    for &t1 in &axis {
        for &t2 in &axis {
            for &t3 in &axis {
                let v = common::soliton_tau(&[sol], &[c64(t1, 0.0), c64(t2, 0.0), c64(t3, 0.0)], &[]);
                fixture.push_str(&format!("{t1},{t2},{t3},0,{},{}\n", v.re, v.im));
            }
        }
    }
    let oracle = dir.path().join("oracle.csv");
    std::fs::write(&oracle, &fixture).unwrap();

    let out = dir.path().join("tau.csv");
    assert_eq!(run_config("tau", &configs().join("soliton1.json"), &out, &[]), EXIT_PASS);
    let got = std::fs::read_to_string(&out).unwrap();
    let want = std::fs::read_to_string(&oracle).unwrap();
    let (got, want): (Vec<_>, Vec<_>) = (got.lines().collect(), want.lines().collect());
    assert_eq!(got.len(), 126);
    assert_eq!(got[0], want[0]);
    for (g, w) in got[1..].iter().zip(&want[1..]) {
        let g: Vec<f64> = g.split(',').map(|x| x.parse().unwrap()).collect();
        let w: Vec<f64> = w.split(',').map(|x| x.parse().unwrap()).collect();
        assert_eq!(g[..4], w[..4]);
        let (gv, wv) = (c64(g[4], g[5]), c64(w[4], w[5]));
        assert!(common::rel(gv, wv) <= 1e-8, "{g:?} vs {w:?}");
    }
}

#[test]
fn duplicated_fibers_give_identical_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("tau.csv");
    assert_eq!(run_config("tau", &configs().join("soliton1.json"), &out, &["--fibers", "2"]), EXIT_PASS);
    let text = std::fs::read_to_string(out).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 250);
    for pair in rows.chunks(2) {
        let a: Vec<&str> = pair[0].split(',').collect();
        let b: Vec<&str> = pair[1].split(',').collect();
        assert_eq!(a[..3], b[..3]);
        assert_eq!((a[3], b[3]), ("0", "1"));
        assert_eq!(a[4..], b[4..]);
    }
}

#[test]
fn every_sample_config_passes() {
    let dir = tempfile::tempdir().unwrap();
    for (sub, file) in [
        ("trisecant", "soliton2.json"),
        ("baker", "baker.json"),
        ("schwarzian", "schwarzian.json"),
        ("wick", "wick.json"),
        ("curvature", "curvature.json"),
    ] {
        let out = dir.path().join(format!("{file}.out"));
        assert_eq!(run_config(sub, &configs().join(file), &out, &[]), EXIT_PASS, "{sub} {file}");
        let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
        assert_eq!(report["passed"], serde_json::Value::Bool(true), "{sub}");
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    // residual failure: no Richardson ratio is exactly 4
    assert_eq!(run_config("curvature", &configs().join("curvature.json"), &out, &["--tol", "0"]), EXIT_RESIDUAL);

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"N": 4, "point": {"reference": {"m": 1}}, "quadruples": [], "extra": 1}"#).unwrap();
    assert_eq!(run_config("trisecant", &bad, &out, &[]), EXIT_INPUT);
    std::fs::write(&bad, r#"{"N": 4, "point": {"reference": {"m": 1, "n": 2}}, "quadruples": []}"#).unwrap();
    assert_eq!(run_config("trisecant", &bad, &out, &[]), EXIT_INPUT);
    std::fs::write(&bad, r#"{"N": 4, "point": {"solitons": [[{"p": [1.5, 0], "q": [0, 0], "c": [1, 0]}]]}, "grid": [[0.0]]}"#).unwrap();
    assert_eq!(run_config("tau", &bad, &out, &[]), EXIT_INPUT);
    assert_eq!(run_config("tau", &dir.path().join("missing.json"), &out, &[]), EXIT_INPUT);

    assert_eq!(run_with(&["trisecant"]), EXIT_INPUT);
    assert_eq!(run_with(&["nonsense"]), EXIT_INPUT);
    assert_eq!(run_with(&["selftest", "--fibers", "0"]), EXIT_INPUT);
    assert_eq!(run_with(&["selftest", "--seed", "x"]), EXIT_INPUT);
}

#[test]
fn selftest_is_byte_identical() {
    let bin = env!("CARGO_BIN_EXE_tau-lab");
    let once = Command::new(bin).args(["selftest", "--seed", "7"]).output().unwrap();
    let twice = Command::new(bin).args(["selftest", "--seed", "7"]).output().unwrap();
    assert_eq!(once.status.code(), Some(EXIT_PASS));
    assert_eq!(once.stdout, twice.stdout);
    let other = Command::new(bin).args(["selftest", "--seed", "8"]).output().unwrap();
    assert_ne!(once.stdout, other.stdout);

    let text = String::from_utf8(once.stdout).unwrap();
    for line in text.lines().filter(|l| l.contains("value=")) {
        assert!(line.contains(" fiber="), "{line}");
    }
}

#[test]
fn selftest_passes_over_seeds_and_fiber_counts() {
    let dir = tempfile::tempdir().unwrap();
    for seed in 0..6u64 {
        for fibers in ["1", "3"] {
            let out = dir.path().join(format!("s{seed}_{fibers}"));
            let s = seed.to_string();
            assert_eq!(run_with(&["selftest", "--seed", &s, "--fibers", fibers, "--out", out.to_str().unwrap()]), EXIT_PASS);
        }
    }
}
