use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const SPHERE: &str = "kind = \"sphere\"\nparams = { R = 1.0 }\ngrid = { nu = 16, nv = 32 }\n";

fn hanzawa(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hanzawa")).current_dir(dir).args(args).output().expect("binary runs")
}

fn setup() -> TempDir {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("sphere.cfg"), SPHERE).unwrap();
    d
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn curvature_of_concentric_sphere() {
    let d = setup();
    let out = hanzawa(d.path(), &["curvature", "--surface", "sphere.cfg", "--height", "const:0.1", "--out", "h.csv", "--grid-csv", "g.csv"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut rd = csv::Reader::from_path(d.path().join("h.csv")).unwrap();
    assert_eq!(rd.headers().unwrap().iter().collect::<Vec<_>>(), ["u", "v", "H_formula", "H_oracle", "abs_err"]);
    let mut n = 0;
    for r in rd.records() {
        let h: f64 = r.unwrap()[2].parse().unwrap();
        assert!((h + 1.0 / 0.55).abs() < 1e-12, "{h}");
        n += 1;
    }
    assert_eq!(n, 16 * 32);
    let mut g = csv::Reader::from_path(d.path().join("g.csv")).unwrap();
    assert_eq!(g.headers().unwrap().len(), 9);
}

#[test]
fn verify_identities_passes_and_is_deterministic() {
    let d = setup();
    let args = |out: &'static str| ["verify", "--suite", "identities", "--surface", "sphere.cfg", "--out", out];
    let a = hanzawa(d.path(), &args("a.json"));
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stderr));
    let b = hanzawa(d.path(), &args("b.json"));
    assert_eq!(b.status.code(), Some(0));
    let (ra, rb) = (json(&d.path().join("a.json")), json(&d.path().join("b.json")));
    assert_eq!(serde_json::to_string(&ra["body"]).unwrap(), serde_json::to_string(&rb["body"]).unwrap());
    assert_eq!(ra["body_sha256"], rb["body_sha256"]);
    let records = ra["body"]["data"]["records"].as_array().unwrap();
    assert_eq!(records.len(), 4);
    for r in records {
        assert_eq!(r["pass"], true);
        assert!(r["max_rel_err"].as_f64().unwrap() <= 1e-8);
        assert!(!r["paper_ref"].as_str().unwrap().is_empty());
        assert!(r.get("observed_order").is_some());
    }
    let rep = hanzawa(d.path(), &["report", "a.json", "b.json"]);
    assert_eq!(rep.status.code(), Some(0));
}

#[test]
fn tampered_report_is_rejected() {
    let d = setup();
    assert!(hanzawa(d.path(), &["verify", "--suite", "curvature", "--out", "r.json"]).status.success());
    let p = d.path().join("r.json");
    let text = std::fs::read_to_string(&p).unwrap().replacen("\"pass\": true", "\"pass\": false", 1);
    std::fs::write(&p, text).unwrap();
    let out = hanzawa(d.path(), &["report", "r.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("MISMATCH"));
}

#[test]
fn failing_check_exits_one_with_summary() {
    let d = setup();
    std::fs::write(d.path().join("strict.toml"), "[verify.tolerances]\n\"concentric_sphere_c0.1\" = 1e-300\n").unwrap();
    let out = hanzawa(d.path(), &["verify", "--config", "strict.toml", "--suite", "curvature", "--out", "r.json"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("1 of 3 checks failed") && err.contains("concentric_sphere_c0.1"), "{err}");
    let r = json(&d.path().join("r.json"));
    assert_eq!(r["body"]["data"]["failed"], 1);
}

#[test]
fn usage_and_config_errors_exit_two() {
    let d = setup();
    let out = hanzawa(d.path(), &["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));

    std::fs::write(d.path().join("bad.toml"), "[verify]\nseeds = [1, 2]\n\n[fluid]\nsigma = \"high\"\n").unwrap();
    let out = hanzawa(d.path(), &["verify", "--config", "bad.toml"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 5, column 9"), "{err}");

    std::fs::write(d.path().join("unknown.toml"), "[hanzawa]\ndelta = 0.2\n").unwrap();
    assert_eq!(hanzawa(d.path(), &["verify", "--config", "unknown.toml"]).status.code(), Some(2));

    std::fs::write(d.path().join("torus.cfg"), "kind = \"torus\"\nparams = { R = 2.0 }\n").unwrap();
    assert_eq!(hanzawa(d.path(), &["curvature", "--surface", "torus.cfg"]).status.code(), Some(2));

    std::fs::write(d.path().join("seeds.toml"), "[verify]\nseeds = []\n").unwrap();
    assert_eq!(hanzawa(d.path(), &["verify", "--config", "seeds.toml"]).status.code(), Some(2));
}

#[test]
fn norms_of_builtin_and_csv() {
    let d = setup();
    let out = hanzawa(d.path(), &["norms", "--func", "linear", "--norm", "L:2", "--grid", "257"]);
    assert!(out.status.success());
    let line = String::from_utf8(out.stdout).unwrap();
    let v: f64 = line.trim().split('\t').nth(1).unwrap().parse().unwrap();
    assert!((v - (1.0f64 / 3.0).sqrt()).abs() < 1e-4, "{line}");

    let mut w = csv::Writer::from_path(d.path().join("f.csv")).unwrap();
    w.write_record(["x", "f"]).unwrap();
    for i in 0..257 {
        let x = i as f64 / 256.0;
        w.write_record([x.to_string(), x.to_string()]).unwrap();
    }
    w.flush().unwrap();
    let out = hanzawa(d.path(), &["norms", "--csv", "f.csv", "--norm", "W:0.5:2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: f64 = String::from_utf8(out.stdout).unwrap().trim().split('\t').nth(1).unwrap().parse().unwrap();
    assert!(v > 1.0 && v < 2.0);

    assert_eq!(hanzawa(d.path(), &["norms", "--func", "linear", "--norm", "Q:7"]).status.code(), Some(2));
}

#[test]
fn evolve_writes_snapshots_and_trace() {
    let d = setup();
    std::fs::write(d.path().join("evo.toml"), "[evolution]\nt_final = 0.025\nsteps = 4\nmax_iter = 4\n\n[initial]\nh0 = \"harmonic\"\nh_amp = 0.004\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_hanzawa"))
        .current_dir(d.path())
        .env("HANZAWA_WORKERS", "2")
        .args(["evolve", "--config", "evo.toml", "--out-dir", "run"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let trace = json(&d.path().join("run/trace.json"));
    assert!(trace["body"]["data"]["contraction"].as_f64().unwrap() < 1.0);
    let mut h = csv::Reader::from_path(d.path().join("run/height.csv")).unwrap();
    assert_eq!(h.records().count(), 5 * 16 * 32);
    let mut b = csv::Reader::from_path(d.path().join("run/magnetic.csv")).unwrap();
    assert_eq!(b.headers().unwrap().len(), 8);
}

#[test]
fn height_csv_round_trip() {
    let d = setup();
    let mut w = csv::Writer::from_path(d.path().join("h.csv")).unwrap();
    w.write_record(["u", "v", "h", "dh_dt"]).unwrap();
    for j in 0..16 {
        for k in 0..32 {
            let u = (j as f64 + 0.5) * std::f64::consts::PI / 16.0;
            let v = k as f64 * 2.0 * std::f64::consts::PI / 32.0;
            w.write_record([u.to_string(), v.to_string(), "0.1".into(), "0".into()]).unwrap();
        }
    }
    w.flush().unwrap();
    let out = hanzawa(d.path(), &["curvature", "--surface", "sphere.cfg", "--height", "csv:h.csv", "--out", "c.csv"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut rd = csv::Reader::from_path(d.path().join("c.csv")).unwrap();
    for r in rd.records() {
        let h: f64 = r.unwrap()[2].parse().unwrap();
        assert!((h + 1.0 / 0.55).abs() < 1e-12);
    }
}
