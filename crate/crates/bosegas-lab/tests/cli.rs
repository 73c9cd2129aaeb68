use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bosegas(args: &[&str], cache: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_bosegas"));
    cmd.args(args).env_remove("BOSEGAS_CACHE");
    if let Some(c) = cache {
        cmd.env("BOSEGAS_CACHE", c);
    }
    cmd.output().expect("binary runs")
}

fn run_ok(args: &[&str]) -> Output {
    let out = bosegas(args, None);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

#[test]
fn partition_columns_and_sentinel() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("p");
    run_ok(&["partition", "--geometry", "torus:3", "--beta", "1", "--L-list", "8,12,16", "--rho", "critical", "--out", out.to_str().unwrap()]);
    let csv = fs::read_to_string(out.join("results.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "L,logZ,local_slope");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].ends_with(",NA"));
    for line in &lines[2..] {
        for cell in line.split(',') {
            assert!(cell.parse::<f64>().unwrap().is_finite());
        }
    }
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "partition");
    assert_eq!(manifest["config"]["geometry"], "torus:3");
    assert!(manifest["rng_algorithm"].as_str().unwrap().contains("ChaCha20"));
}

#[test]
fn floats_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t");
    run_ok(&["trace", "--geometry", "box:2:neumann", "--t-list", "0.01,0.1,1", "--out", out.to_str().unwrap()]);
    let csv = fs::read_to_string(out.join("results.csv")).unwrap();
    let z: f64 = csv.lines().nth(2).unwrap().split(',').nth(1).unwrap().parse().unwrap();
    let exact = bosegas::spectral::heat_trace(&"box:2:neumann".parse().unwrap(), 0.1).unwrap();
    assert_eq!(z.to_bits(), exact.to_bits());
}

#[test]
fn same_seed_gives_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        run_ok(&["sample", "--L-list", "10", "--samples", "50", "--seed", seed, "--out", out.to_str().unwrap()]);
        fs::read(out.join("results.csv")).unwrap()
    };
    let a = run("a", "7");
    let b = run("b", "7");
    let c = run("c", "8");
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn manifest_replay_reproduces_csv() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    run_ok(&["pd", "--L-list", "8", "--samples", "200", "--seed", "3", "--out", first.to_str().unwrap()]);
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(first.join("manifest.json")).unwrap()).unwrap();
    let config = dir.path().join("replay.json");
    fs::write(&config, serde_json::to_vec(&manifest["config"]).unwrap()).unwrap();
    let second = dir.path().join("second");
    run_ok(&["pd", "--config", config.to_str().unwrap(), "--out", second.to_str().unwrap()]);
    assert_eq!(fs::read(first.join("results.csv")).unwrap(), fs::read(second.join("results.csv")).unwrap());
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("c.json");
    fs::write(&config, r#"{"geometry": "box:3:dirichlet", "L_list": [8, 10], "seed": 1}"#).unwrap();
    let out = dir.path().join("o");
    run_ok(&["weights", "--config", config.to_str().unwrap(), "--L-list", "6", "--out", out.to_str().unwrap()]);
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["geometry"], "box:3:dirichlet");
    assert_eq!(manifest["config"]["L_list"], serde_json::json!([6.0]));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    let out = out.to_str().unwrap();
    let code = |args: &[&str]| bosegas(args, None).status.code();
    assert_eq!(code(&["trace", "--geometry", "sphere:3", "--out", out]), Some(2));
    assert_eq!(code(&["pmf", "--beta", "-1", "--out", out]), Some(2));
    let config = dir.path().join("bad.json");
    fs::write(&config, r#"{"geometry": "torus:3", "seeed": 1}"#).unwrap();
    assert_eq!(code(&["pmf", "--config", config.to_str().unwrap(), "--out", out]), Some(2));
    // 30 particles cannot be split into loops of length 7
    assert_eq!(code(&["sample", "--L-list", "8", "--window-range", "7,7", "--out", out]), Some(3));
    assert_eq!(code(&["local-clt", "--geometry", "torus:4", "--L-list", "8", "--out", out]), Some(3));
}

#[test]
fn cache_bit_flip_is_detected() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache");
    let out = dir.path().join("w");
    let out = out.to_str().unwrap();
    let list = || String::from_utf8(bosegas(&["cache", "list"], Some(&cache)).stdout).unwrap();
    assert_eq!(list(), "");
    for l in ["8", "10"] {
        assert!(bosegas(&["weights", "--L-list", l, "--out", out], Some(&cache)).status.success());
    }
    let first = fs::read(dir.path().join("w/results.csv")).unwrap();
    assert!(bosegas(&["weights", "--L-list", "10", "--out", out], Some(&cache)).status.success());
    assert_eq!(fs::read(dir.path().join("w/results.csv")).unwrap(), first);

    let hashes: Vec<String> = list().lines().map(String::from).collect();
    assert_eq!(hashes.len(), 2);
    let victim = cache.join(format!("{}.f64le", hashes[1]));
    let mut bytes = fs::read(&victim).unwrap();
    bytes[3] ^= 0x10;
    fs::write(&victim, bytes).unwrap();

    let verify = bosegas(&["cache", "verify"], Some(&cache));
    assert_eq!(verify.status.code(), Some(5));
    let report = String::from_utf8(verify.stdout).unwrap();
    let flagged: Vec<&str> = report.lines().filter(|l| l.contains("corrupt")).collect();
    assert_eq!(flagged.len(), 1);
    assert!(flagged[0].starts_with(&hashes[1]));

    let reload = |l: &str| bosegas(&["weights", "--L-list", l, "--out", out], Some(&cache)).status.code();
    let codes = [reload("8"), reload("10")];
    assert!(codes.contains(&Some(5)) && codes.contains(&Some(0)));
}

#[test]
fn schema_command_prints_json() {
    let out = run_ok(&["schema"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["additionalProperties"], false);
}
