//! End-to-end runs of the `sbridge` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;
use tempfile::TempDir;

use sbridge_cli::config::{parse, to_toml};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sbridge"))
}

fn shipped_configs() -> Vec<PathBuf> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "toml"))
        .collect();
    out.sort();
    out
}

/// Exit code and parsed stdout.
fn sbridge(args: &[&str]) -> (i32, Value) {
    let out = bin().args(args).output().unwrap();
    let stdout = String::from_utf8(out.stdout).unwrap();
    let json = serde_json::from_str(&stdout).unwrap_or_else(|e| panic!("{e}: {stdout}"));
    (out.status.code().unwrap(), json)
}

fn write_config(dir: &TempDir, name: &str, text: &str) -> String {
    let path = dir.path().join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn read_json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

const BRIDGE: &str = r#"
experiment = "classic-bridge"

[grid]
x_min = -8.0
x_max = 8.0
n_points = 201

[time]
t0 = 0.0
t1 = 1.0
n_steps = 10

[solver]
tol = 1e-10

[output]
times = [0.0, 0.5, 1.0]

[rho0]
kind = "csv"
path = "rho0.csv"

[rho1]
kind = "gaussian"
mean = 1.0
var = 0.1
"#;

fn bridge_dir() -> TempDir {
    let dir = TempDir::new().unwrap();
    let mut csv = String::from("x,value\n");
    for i in 0..=120 {
        let x = -6.0 + 0.1 * i as f64;
        csv.push_str(&format!("{x},{}\n", (-(x + 1.0) * (x + 1.0) / 0.2).exp()));
    }
    fs::write(dir.path().join("rho0.csv"), csv).unwrap();
    dir
}

#[test]
fn shipped_configs_validate_and_round_trip() {
    let configs = shipped_configs();
    assert!(configs.len() >= 6);
    for path in configs {
        let (code, report) = sbridge(&["validate", path.to_str().unwrap()]);
        assert_eq!(code, 0, "{}: {report}", path.display());
        assert_eq!(report["issues"], Value::Array(vec![]));
        let cfg = parse(&fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(parse(&to_toml(&cfg)).unwrap(), cfg, "{}", path.display());
    }
}

#[test]
fn validate_names_the_offending_field() {
    let dir = bridge_dir();
    let cfg = write_config(&dir, "two.toml", &BRIDGE.replace("n_points = 201", "n_points = 2"));
    let (code, report) = sbridge(&["validate", &cfg]);
    assert_eq!(code, 2);
    assert_eq!(report["valid"], false);
    assert_eq!(report["issues"][0]["field"], "grid.n_points");
}

#[test]
fn validate_reports_missing_files_with_their_path() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.toml", BRIDGE);
    let (code, report) = sbridge(&["validate", &cfg]);
    assert_eq!(code, 2);
    let issue = &report["issues"][0];
    assert_eq!(issue["field"], "rho0.path");
    let expected = dir.path().join("rho0.csv");
    assert!(issue["message"].as_str().unwrap().contains(expected.to_str().unwrap()), "{issue}");
}

#[test]
fn parse_errors_carry_a_line() {
    let dir = bridge_dir();
    let cfg = write_config(&dir, "c.toml", &BRIDGE.replace("t1 = 1.0", "t1 = one"));
    let (code, report) = sbridge(&["validate", &cfg]);
    assert_eq!(code, 2);
    assert_eq!(report["issues"][0]["line"], 11);
    let (code, err) = sbridge(&["run", &cfg]);
    assert_eq!(code, 2);
    assert_eq!(err["kind"], "config");
}

#[test]
fn classic_bridge_run_writes_the_artifact_layout() {
    let dir = bridge_dir();
    let cfg = write_config(&dir, "c.toml", BRIDGE);
    let out = dir.path().join("out");
    let (code, summary) = sbridge(&["run", &cfg, "--output-dir", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{summary}");
    let manifest = read_json(out.join("manifest.json"));
    assert_eq!(manifest["experiment"], "classic-bridge");
    assert!(manifest["results"]["residual"].as_f64().unwrap() < 1e-8);
    assert_eq!(manifest["problem_hash"].as_str().unwrap().len(), 64);
    assert!(manifest["timings"]["compute_ms"].as_f64().is_some());
    for t in ["0.000000", "0.500000", "1.000000"] {
        let csv = fs::read_to_string(out.join(format!("fields/density_t{t}.csv"))).unwrap();
        assert!(csv.starts_with("x,value\n"));
        assert_eq!(csv.lines().count(), 202);
    }
    let report = read_json(out.join("reports/bridge.json"));
    for m in report["mass_profile"].as_array().unwrap() {
        assert!((m["mass"].as_f64().unwrap() - 1.0).abs() < 1e-6, "{m}");
    }
    // The manifest is enough to redo the run, input files included.
    let again = dir.path().join("again");
    let (code, _) = sbridge(&[
        "run",
        out.join("manifest.json").to_str().unwrap(),
        "--output-dir",
        again.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    assert_eq!(
        fs::read(out.join("fields/density_t0.500000.csv")).unwrap(),
        fs::read(again.join("fields/density_t0.500000.csv")).unwrap()
    );
    assert_eq!(read_json(again.join("manifest.json"))["problem_hash"], manifest["problem_hash"]);
}

#[test]
fn solver_failure_exits_with_three() {
    let dir = bridge_dir();
    let text = BRIDGE.replace("tol = 1e-10", "tol = 1e-14\nmax_iter = 1");
    let cfg = write_config(&dir, "c.toml", &text);
    let (code, err) = sbridge(&["run", &cfg, "--output-dir", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(code, 3);
    assert_eq!(err["status"], "error");
    assert_eq!(err["kind"], "numerical");
}

const COLLAPSE: &str = r#"
experiment = "collapse"
region = [[-10.0, 10.0]]

[grid]
x_min = -10.0
x_max = 10.0
n_points = 201

[time]
t0 = 0.0
t1 = 0.5
n_steps = 50

[psi0]
kind = "packet"
center = 0.0
width = 1.0
wavenumber = 1.0
"#;

#[test]
fn collapse_on_the_whole_domain_is_certain() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.toml", COLLAPSE);
    let out = dir.path().join("out");
    let (code, _) = sbridge(&["run", &cfg, "--output-dir", out.to_str().unwrap()]);
    assert_eq!(code, 0);
    let report = read_json(out.join("reports/collapse.json"));
    assert!((report["p1"].as_f64().unwrap() - 1.0).abs() < 1e-14);
    let csv = fs::read_to_string(out.join("fields/collapsed_state.csv")).unwrap();
    assert!(csv.starts_with("x,re,im\n"));
}

const IDENTITY: &str = r#"
experiment = "quantum-bridge"

[grid]
x_min = -12.0
x_max = 12.0
n_points = 201

[time]
t0 = 0.0
t1 = 1.0
n_steps = 100

[psi0]
kind = "packet"
center = 0.0
width = 1.0
wavenumber = 0.5

[rho1]
kind = "terminal"
"#;

#[test]
fn quantum_identity_case_is_flagged() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.toml", IDENTITY);
    let out = dir.path().join("out");
    let (code, summary) = sbridge(&["run", &cfg, "--output-dir", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{summary}");
    let manifest = read_json(out.join("manifest.json"));
    assert_eq!(manifest["results"]["identity_case"], true);
    assert!(manifest["results"]["max_abs_diff"].as_f64().unwrap() < 1e-10);
    let wf = read_json(out.join("reports/wavefunction.json"));
    assert_eq!(wf["norms"].as_array().unwrap().len(), 101);
}

const SAMPLE: &str = r#"
experiment = "sample"
seed = 5

[grid]
x_min = -8.0
x_max = 8.0
n_points = 161

[time]
t0 = 0.0
t1 = 1.0
n_steps = 20

[sampling]
n_paths = 500
record_every = 5
export_paths = true

[rho0]
kind = "gaussian"
mean = 0.0
var = 0.2

[drift]
slope = -1.0
"#;

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for sub in ["fields", "reports"] {
        let mut entries: Vec<_> = fs::read_dir(dir.join(sub)).unwrap().map(|e| e.unwrap().path()).collect();
        entries.sort();
        for p in entries {
            out.push((p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap()));
        }
    }
    out
}

#[test]
fn seeded_runs_are_byte_identical_and_seed_overrides_apply() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.toml", SAMPLE);
    let run = |name: &str, extra: &[&str]| {
        let out = dir.path().join(name);
        let mut args = vec!["run", &cfg, "--output-dir", out.to_str().unwrap()];
        args.extend_from_slice(extra);
        let (code, s) = sbridge(&args);
        assert_eq!(code, 0, "{s}");
        out
    };
    let a = run("a", &[]);
    let b = run("b", &[]);
    let c = run("c", &["--seed", "6"]);
    assert_eq!(tree(&a), tree(&b));
    assert_ne!(tree(&a), tree(&c));
    assert_eq!(read_json(c.join("manifest.json"))["seed"], 6);

    let paths = fs::read_to_string(a.join("fields/paths.csv")).unwrap();
    assert!(paths.starts_with("path,t,x\n"));
    assert_eq!(paths.lines().count(), 1 + 500 * 5);
    let gen = read_json(a.join("reports/generator_x2.json"));
    assert!(gen["std_error"].as_f64().unwrap() > 0.0);
}

#[test]
fn unknown_keys_are_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.toml", &SAMPLE.replace("seed = 5", "seed = 5\nsede = 6"));
    let (code, report) = sbridge(&["validate", &cfg]);
    assert_eq!(code, 2);
    assert!(report["issues"][0]["message"].as_str().unwrap().contains("sede"), "{report}");
}
