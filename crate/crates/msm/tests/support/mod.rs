#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

pub struct Run {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

pub fn msm<I, S>(args: I) -> Run
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    let out = Command::new(env!("CARGO_BIN_EXE_msm"))
        .args(args)
        .output()
        .expect("msm binary runs");
    Run {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

pub fn ok<I, S>(args: I) -> Run
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    let r = msm(args);
    assert_eq!(r.code, 0, "stderr: {}", r.stderr);
    r
}

pub fn write(path: &Path, body: &str) -> PathBuf {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).unwrap();
    }
    fs::write(path, body).unwrap();
    path.to_path_buf()
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Ten actions, one covariate and one discriminative key action `a9`
/// much more common among correct respondents.
pub const E2E_DESIGN: &str = r#"{
  "respondents": 120, "states": 10, "covariates": 1, "keys": 1,
  "kappa": [[1,1,1,1,1,1,1,1,1,1],[1,1.5,1,1,1,1,1,1,1,1]],
  "gamma": [[1,1,1,0.5,0.4,0.3,0.2,0.15,0.1,0.1],[1,1,1,0.5,0.4,0.3,0.2,0.15,0.1,0.1]],
  "alpha": [0.2], "beta1": [0.3], "beta2": [0.4], "beta3": [0],
  "tau": {"by_group": {"mean": [0.8, 1.2], "log_sd": 0.2}},
  "key_presence": [[0.2, 0.9]],
  "max_events": 12, "seed": 5
}"#;

/// Fifty respondents, three actions, key action `a2`.
pub const TINY_DESIGN: &str = r#"{
  "respondents": 50, "states": 3, "covariates": 1, "keys": 1,
  "kappa": [[1,1,1],[1,1.3,1]],
  "gamma": [[1,0.8,0.3],[1,0.8,0.3]],
  "alpha": [0.2], "beta1": [0.2], "beta2": [0.3], "beta3": [0],
  "tau": {"by_group": {"mean": [1.0, 1.0], "log_sd": 0.2}},
  "key_presence": [[0.4, 0.6]],
  "max_events": 10, "seed": 3
}"#;

pub const SHORT_FIT: &str = r#"{"mcmc": {"n_iter": 4000, "burn_in": 2000, "adapt_until": 2000, "thin": 2}}"#;

/// Simulates `design` into `dir/sim`.
pub fn simulate(dir: &Path, design: &str) -> PathBuf {
    let file = write(&dir.join("design.json"), design);
    let sim = dir.join("sim");
    ok(["simulate", p(&file), "--out", p(&sim)]);
    sim
}

pub fn data_args(sim: &Path) -> Vec<String> {
    vec![
        "--events".into(),
        p(&sim.join("events.csv")).into(),
        "--labels".into(),
        p(&sim.join("labels.csv")).into(),
        "--covariates".into(),
        p(&sim.join("covariates.csv")).into(),
    ]
}

/// CSV header line, skipping `#` comments.
pub fn header(path: &Path) -> String {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .find(|l| !l.starts_with('#'))
        .unwrap()
        .to_string()
}

/// Rows of a CSV file (comments skipped) as maps from column to cell.
pub fn rows(path: &Path) -> Vec<std::collections::BTreeMap<String, String>> {
    let text = fs::read_to_string(path).unwrap();
    let body: String = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| format!("{l}\n"))
        .collect();
    let mut rdr = csv::Reader::from_reader(body.as_bytes());
    let h = rdr.headers().unwrap().clone();
    rdr.records()
        .map(|r| {
            h.iter()
                .zip(r.unwrap().iter())
                .map(|(a, b)| (a.to_string(), b.to_string()))
                .collect()
        })
        .collect()
}

/// Manifest without its timestamps.
pub fn stable_manifest(path: &Path) -> serde_json::Value {
    let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    let o = v.as_object_mut().unwrap();
    o.remove("started_unix");
    o.remove("finished_unix");
    v
}

/// Runs a command twice into the same output directory and asserts the
/// two runs wrote byte-identical files (manifests up to timestamps).
pub fn assert_rerun_identical(args: &[String], out: &Path) {
    ok(args);
    let first = out.with_extension("first");
    fs::rename(out, &first).unwrap();
    ok(args);
    assert_same_outputs(&first, out);
    fs::remove_dir_all(&first).unwrap();
}

/// Asserts two output directories hold byte-identical files, manifests
/// compared without timestamps.
pub fn assert_same_outputs(a: &Path, b: &Path) {
    let mut names: Vec<_> = fs::read_dir(a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    let mut other: Vec<_> = fs::read_dir(b).unwrap().map(|e| e.unwrap().file_name()).collect();
    other.sort();
    assert_eq!(names, other);
    for n in names {
        let (x, y) = (a.join(&n), b.join(&n));
        if n == "manifest.json" {
            assert_eq!(stable_manifest(&x), stable_manifest(&y));
        } else if x.is_file() {
            assert!(
                fs::read(&x).unwrap() == fs::read(&y).unwrap(),
                "{} differs",
                n.to_string_lossy()
            );
        }
    }
}
