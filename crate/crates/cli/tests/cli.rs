use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn gcdlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gcdlab")).args(args).output().expect("run gcdlab")
}

fn json_of(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("json on stdout")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("gcdlab_cli_{}_{name}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

// plain power iteration on the explicit matrix
fn lambda_oracle(alpha: f64, n: usize) -> f64 {
    let g: Vec<Vec<f64>> = (1..=n as u64)
        .map(|i| (1..=n as u64).map(|j| (gcd(i, j) as f64).powf(2.0 * alpha) / ((i * j) as f64).powf(alpha)).collect())
        .collect();
    let mut v = vec![1.0; n];
    let mut lam = 0.0;
    for _ in 0..5000 {
        let w: Vec<f64> = g.iter().map(|row| row.iter().zip(&v).map(|(a, b)| a * b).sum()).collect();
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        lam = w.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() / v.iter().map(|x| x * x).sum::<f64>();
        v = w.iter().map(|x| x / norm).collect();
    }
    lam
}

#[test]
fn eig_matches_explicit_matrix() {
    let out = gcdlab(&["eig", "--alpha", "0.75", "--n", "64", "--format", "json"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json_of(&out);
    assert_eq!(v["command"], "eig");
    let r = &v["result"];
    let lam = r["lambda"].as_f64().unwrap();
    assert!(r["residual"].as_f64().unwrap() < 1e-9);
    let ci = r["certified_interval"].as_array().unwrap();
    assert!(ci[0].as_f64().unwrap() <= ci[1].as_f64().unwrap());
    let oracle = lambda_oracle(0.75, 64);
    assert!((lam - oracle).abs() < 1e-8 * oracle, "{lam} vs {oracle}");
}

#[test]
fn franel_lists_all_pairs() {
    let out = gcdlab(&["franel", "--max", "30"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json_of(&out);
    let pairs = v["result"]["pairs"].as_array().unwrap();
    assert_eq!(pairs.len(), 465);
    for p in pairs {
        let (k, l) = (p["k"].as_u64().unwrap(), p["l"].as_u64().unwrap());
        let g = gcd(k, l);
        let (num, den) = (g * g, 12 * k * l);
        let h = gcd(num, den);
        assert_eq!(p["value"].as_str().unwrap(), format!("{}/{}", num / h, den / h));
    }
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(gcdlab(&["--no-such-flag"]).status.code(), Some(1));
    assert_eq!(gcdlab(&["eig", "--alpha", "0.75", "--n", "4", "--bogus"]).status.code(), Some(1));
    assert_eq!(gcdlab(&["eig", "--alpha", "1.2", "--n", "4"]).status.code(), Some(1));
    assert_eq!(gcdlab(&["eig", "--alpha", "0.75"]).status.code(), Some(1));
    assert_eq!(gcdlab(&["norm", "--alpha", "0.7", "--n", "3", "--coeffs", "1,2"]).status.code(), Some(1));
    assert_eq!(gcdlab(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(gcdlab(&["--help"]).status.code(), Some(0));
    assert_eq!(gcdlab(&["--version"]).status.code(), Some(0));
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = scratch("config");
    let cfg = dir.join("eig.json");
    std::fs::write(&cfg, r#"{"alpha": 0.6, "n": 10, "format": "json"}"#).unwrap();
    let out = gcdlab(&["eig", "--config", cfg.to_str().unwrap(), "--n", "12"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json_of(&out);
    assert_eq!(v["config"]["alpha"], 0.6);
    assert_eq!(v["config"]["n"], 12);
    assert_eq!(v["result"]["n"], 12);

    std::fs::write(&cfg, r#"{"alpha": 0.6, "n": 10, "typo": 1}"#).unwrap();
    assert_eq!(gcdlab(&["eig", "--config", cfg.to_str().unwrap()]).status.code(), Some(1));
    std::fs::write(&cfg, "not json").unwrap();
    assert_eq!(gcdlab(&["eig", "--config", cfg.to_str().unwrap()]).status.code(), Some(1));
    let _ = std::fs::remove_dir_all(dir);
}

#[test]
fn echoed_config_reproduces_output() {
    let dir = scratch("echo");
    let first = dir.join("first.json");
    let out = gcdlab(&["simulate", "--mode", "cesaro", "--samples", "5", "--n", "50", "--seed", "3", "--output", first.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let doc: Value = serde_json::from_slice(&std::fs::read(&first).unwrap()).unwrap();
    let cfg = dir.join("cfg.json");
    std::fs::write(&cfg, serde_json::to_string(&doc["config"]).unwrap()).unwrap();
    let second = dir.join("second.json");
    let out = gcdlab(&["simulate", "--config", cfg.to_str().unwrap(), "--output", second.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(std::fs::read(&first).unwrap(), std::fs::read(&second).unwrap());
    // a whole output document works as a config file too
    let third = dir.join("third.json");
    let out = gcdlab(&["simulate", "--config", first.to_str().unwrap(), "--output", third.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(std::fs::read(&first).unwrap(), std::fs::read(&third).unwrap());
    let _ = std::fs::remove_dir_all(dir);
}

#[test]
fn csv_with_config_sidecar() {
    let dir = scratch("csv");
    let path = dir.join("sigma.csv");
    let out = gcdlab(&["sigma", "--s", "-0.5", "--primorials", "4", "--format", "csv", "--output", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "k,sigma,divisor_count,gronwall_ratio");
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("2,1.7071067811865475,2,"));
    let side: Value = serde_json::from_slice(&std::fs::read(dir.join("sigma.csv.config.json")).unwrap()).unwrap();
    assert_eq!(side["config"]["format"], "csv");
    assert_eq!(side["config"]["primorials"], 4);
    let _ = std::fs::remove_dir_all(dir);
}

#[test]
fn gcdsum_and_norm_agree() {
    let g = json_of(&gcdlab(&["gcdsum", "--alpha", "0.7", "--dilations", "2,3,12", "--coeffs", "1,-0.5,2"]));
    let n = json_of(&gcdlab(&["norm", "--alpha", "0.7", "--dilations", "2,3,12", "--coeffs", "1,-0.5,2", "--method", "exact"]));
    let a = g["result"]["norm_squared"].as_f64().unwrap();
    let b = n["result"]["enclosures"][0]["lower"].as_f64().unwrap();
    assert!((a - b).abs() < 1e-12 * a);
    let all = json_of(&gcdlab(&["norm", "--alpha", "0.7", "--dilations", "2,3,12", "--coeffs", "1,-0.5,2"]));
    let e = all["result"]["enclosures"].as_array().unwrap();
    assert_eq!(e.len(), 3);
    let p = &e[1];
    assert!(p["lower"].as_f64().unwrap() <= a && a <= p["upper"].as_f64().unwrap());
}

#[test]
fn extremal_record_round_trips() {
    let dir = scratch("extremal");
    let rec = dir.join("th1.json");
    let out = gcdlab(&["extremal", "--kind", "th1", "--i-max", "6", "--check-identity", "--record", rec.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let v = json_of(&out);
    for b in v["result"]["blocks"].as_array().unwrap() {
        let d = b["identity"]["direct"].as_f64().unwrap();
        let c = b["identity"]["closed"].as_f64().unwrap();
        assert!((d - c).abs() < 1e-12 * c);
    }
    let text = std::fs::read_to_string(&rec).unwrap();
    assert!(gcdlab::extremal::Construction::from_json(&text).is_ok());
    let _ = std::fs::remove_dir_all(dir);
}

#[test]
fn verify_exit_status_tracks_criteria() {
    let ok = gcdlab(&["verify", "--suite", "primary", "--criteria", "1,7"]);
    assert_eq!(ok.status.code(), Some(0));
    let v = json_of(&ok);
    assert_eq!(v["result"]["passed"], true);
    let stderr = String::from_utf8_lossy(&ok.stderr);
    assert!(stderr.contains("criterion 1: PASS") && stderr.contains("criterion 7: PASS"));
    assert_eq!(gcdlab(&["verify", "--suite", "secondary"]).status.code(), Some(1));
    assert_eq!(gcdlab(&["verify", "--criteria", "12"]).status.code(), Some(1));
}

#[test]
fn threads_flag_keeps_output() {
    let a = gcdlab(&["--threads", "1", "simulate", "--mode", "sup", "--i-max", "5", "--samples", "300"]);
    let b = gcdlab(&["--threads", "3", "simulate", "--mode", "sup", "--i-max", "5", "--samples", "300"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(gcdlab(&["--threads", "0", "franel", "--max", "2"]).status.code(), Some(1));
}

#[test]
fn sieve_cache_directory() {
    let dir = scratch("sieve");
    let out = Command::new(env!("CARGO_BIN_EXE_gcdlab"))
        .env("GCDLAB_SIEVE_CACHE", &dir)
        .args(["sigma", "--s", "1", "--k", "12"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(std::fs::read_dir(&dir).unwrap().next().is_some());
    let v = json_of(&out);
    assert_eq!(v["result"]["rows"][0]["sigma"], 28.0);
    let _ = std::fs::remove_dir_all(dir);
}
