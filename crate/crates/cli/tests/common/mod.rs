#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(name)
}

pub fn midway(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_midway")).args(args).output().expect("binary runs")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

pub fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub fn planted_args() -> Vec<String> {
    vec![
        "--data".into(),
        fixture("planted_stratum.csv").display().to_string(),
        "--schema".into(),
        fixture("planted_stratum.schema.json").display().to_string(),
    ]
}

/// Writes a multicentre generator config to `dir` and returns its path.
pub fn multicentre_config(dir: &Path, cfg: &serde_json::Value) -> String {
    let path = dir.join("multicentre.json");
    std::fs::write(&path, cfg.to_string()).unwrap();
    path.display().to_string()
}

/// Simulates a multicentre dataset into `dir/sim` and returns the data and
/// schema paths.
pub fn simulate_multicentre(dir: &Path, cfg: &serde_json::Value, seed: u64) -> (String, String) {
    let config = multicentre_config(dir, cfg);
    let out = dir.join("sim");
    let o = midway(&[
        "simulate",
        "--multicentre",
        &config,
        "--seed",
        &seed.to_string(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    (out.join("data.csv").display().to_string(), out.join("schema.json").display().to_string())
}
