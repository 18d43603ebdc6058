//! Artifact directory writer.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use sbridge::io::{fmt_f64, write_complex, write_field};
use sbridge::sde::PathEnsemble;

use crate::config::{to_toml, Marginal, RunConfig, WaveState};
use crate::experiments::{FieldData, Outcome};
use crate::RunError;

pub const TOOL: &str = "sbridge";

#[derive(Debug, Clone, Serialize)]
pub struct Timings {
    pub compute_ms: f64,
    pub write_ms: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub core_version: &'static str,
    pub experiment: &'static str,
    /// SHA-256 of the problem: config minus seed and output location, plus
    /// the bytes of every input file.
    pub problem_hash: String,
    pub seed: u64,
    pub config: RunConfig,
    pub results: Value,
    /// Paths relative to the run directory, sorted.
    pub artifacts: Vec<String>,
    pub timings: Timings,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn problem_hash(cfg: &RunConfig) -> Result<String, RunError> {
    let mut canonical = cfg.clone();
    canonical.seed = 0;
    canonical.output_dir = PathBuf::new();
    let mut h = Sha256::new();
    h.update(to_toml(&canonical).as_bytes());
    let mut inputs: Vec<&Path> = [&cfg.rho0, &cfg.rho1, &cfg.prior]
        .into_iter()
        .flatten()
        .filter_map(|m| match m {
            Marginal::Csv { path } => Some(path.as_path()),
            _ => None,
        })
        .collect();
    if let Some(WaveState::Csv { path }) = &cfg.psi0 {
        inputs.push(path);
    }
    for p in inputs {
        let bytes = fs::read(p).map_err(|e| RunError::io(format!("cannot read {}", p.display()), e))?;
        h.update(bytes);
    }
    Ok(hex(&h.finalize()))
}

fn create(path: &Path) -> Result<BufWriter<File>, RunError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| RunError::io(format!("cannot create {}", path.display()), e))
}

fn io_at(path: &Path) -> impl Fn(std::io::Error) -> RunError + '_ {
    move |e| RunError::io(format!("cannot write {}", path.display()), e)
}

/// One row per path per stored time: `path,t,x`.
pub fn write_paths<W: Write>(mut w: W, ens: &PathEnsemble) -> std::io::Result<()> {
    writeln!(w, "path,t,x")?;
    let times = ens.times();
    for (p, row) in ens.paths().enumerate() {
        for (t, x) in times.iter().zip(row) {
            writeln!(w, "{p},{},{}", fmt_f64(*t), fmt_f64(*x))?;
        }
    }
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), RunError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| RunError::io(path.display().to_string(), e.into()))?;
    writeln!(w).and_then(|_| w.flush()).map_err(io_at(path))
}

/// Write `fields/`, `reports/` and return the relative paths written.
pub fn write_outcome(dir: &Path, outcome: &Outcome) -> Result<Vec<String>, RunError> {
    let fields = dir.join("fields");
    let reports = dir.join("reports");
    for d in [&fields, &reports] {
        fs::create_dir_all(d).map_err(|e| RunError::io(format!("cannot create {}", d.display()), e))?;
    }
    let mut written = Vec::new();
    for (name, data) in &outcome.fields {
        let path = fields.join(format!("{name}.csv"));
        let mut w = create(&path)?;
        match data {
            FieldData::Real(f) => write_field(&mut w, f),
            FieldData::Complex(f) => write_complex(&mut w, f),
        }
        .and_then(|_| w.flush())
        .map_err(io_at(&path))?;
        written.push(format!("fields/{name}.csv"));
    }
    if let Some(ens) = &outcome.paths {
        let path = fields.join("paths.csv");
        let mut w = create(&path)?;
        write_paths(&mut w, ens).and_then(|_| w.flush()).map_err(io_at(&path))?;
        written.push("fields/paths.csv".into());
    }
    for (name, value) in &outcome.reports {
        write_json(&reports.join(format!("{name}.json")), value)?;
        written.push(format!("reports/{name}.json"));
    }
    written.sort();
    Ok(written)
}

pub fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<PathBuf, RunError> {
    let path = dir.join("manifest.json");
    write_json(&path, manifest)?;
    Ok(path)
}

/// Read the config embedded in a manifest.
pub fn config_from_manifest(text: &str) -> Result<RunConfig, String> {
    let v: Value = serde_json::from_str(text).map_err(|e| format!("line {}: {e}", e.line()))?;
    let cfg = v.get("config").ok_or("manifest has no `config` entry")?;
    serde_json::from_value(cfg.clone()).map_err(|e| format!("config: {e}"))
}
