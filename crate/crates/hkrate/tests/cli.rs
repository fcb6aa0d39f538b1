//! Runs the binary: repeated runs must write identical files, and every
//! JSON document carries the tool version and a config hash.

use std::path::{Path, PathBuf};
use std::process::Command;

fn hkrate(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_hkrate")).args(args).output().unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("hkrate-cli-test-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

const RUNS: &[&[&str]] = &[
    &["simulate", "--model", "cauchy1d", "-T", "256", "--seed", "7", "--replicas", "3"],
    &["simulate", "--model", "stable:1.5,3", "-T", "64", "--seed", "7", "--scheme", "uniform:0.5"],
    &["classify", "--test", "generic", "--f", "1/(t*ln(t)^2)"],
    &["classify", "--test", "kolmogorov", "--g", "lil:3", "--dim", "3"],
];

#[test]
fn repeated_runs_write_identical_files() {
    for (i, args) in RUNS.iter().enumerate() {
        for format in ["json", "csv"] {
            let outs: Vec<Vec<u8>> = (0..2)
                .map(|k| {
                    let path = scratch(&format!("run{i}-{k}.{format}"));
                    let mut full = args.to_vec();
                    let p = path.to_str().unwrap();
                    full.extend(["--format", format, "--out", p]);
                    let out = hkrate(&full);
                    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
                    std::fs::read(&path).unwrap()
                })
                .collect();
            assert!(!outs[0].is_empty());
            assert_eq!(outs[0], outs[1], "{args:?} as {format}");
        }
    }
}

#[test]
fn documents_carry_version_and_config_hash() {
    let path_a = scratch("hash-a.json");
    let path_b = scratch("hash-b.json");
    let path_c = scratch("hash-c.json");
    let base = ["simulate", "--model", "cauchy1d", "-T", "64"];
    let run = |seed: &str, path: &Path| {
        let mut args = base.to_vec();
        args.extend(["--seed", seed, "--out", path.to_str().unwrap()]);
        assert!(hkrate(&args).status.success());
        read_json(path)
    };
    let (a, b, c) = (run("1", &path_a), run("1", &path_b), run("2", &path_c));
    assert_eq!(a["tool"], "hkrate");
    assert_eq!(a["tool_version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(a["command"], "simulate");
    let hash = a["config_hash"].as_str().unwrap();
    assert_eq!(hash.len(), 64);
    assert!(hash.chars().all(|c| c.is_ascii_hexdigit()));
    // the output location is not part of the configuration
    assert_eq!(a["config_hash"], b["config_hash"]);
    assert_ne!(a["config_hash"], c["config_hash"]);
    assert!(a["config"]["args"].get("out").is_none());
}

#[test]
fn csv_rows_carry_the_hash() {
    let json = scratch("csv-hash.json");
    let csv = scratch("csv-hash.csv");
    let args = ["classify", "--test", "generic", "--f", "t^-2"];
    for (format, path) in [("json", &json), ("csv", &csv)] {
        let mut full = args.to_vec();
        full.extend(["--format", format, "--out", path.to_str().unwrap()]);
        assert!(hkrate(&full).status.success());
    }
    let hash = read_json(&json)["config_hash"].as_str().unwrap().to_string();
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("config_hash,calibration_version"));
    for line in lines {
        assert!(line.starts_with(&hash), "{line}");
    }
}

#[test]
fn exit_codes() {
    assert_eq!(hkrate(&["classify", "--test", "generic", "--f", "t^-2"]).status.code(), Some(0));
    // a triple-log integrand sits exactly on the boundary and abstains
    let out = hkrate(&["classify", "--test", "generic", "--f", "1/(t*ln(t)*ln(ln(t))*ln(ln(ln(t))))"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(hkrate(&["classify", "--test", "nonsense"]).status.code(), Some(1));
    assert_eq!(hkrate(&["bounds", "--model", "cauchy1d", "--quantity", "green", "--calibration", "/nonexistent.toml"]).status.code(), Some(1));
}
