//! Batch front end for `sbridge`: a TOML config goes in, a self-describing
//! artifact directory comes out.
//!
//! ```text
//! out/
//!   manifest.json      config echo, versions, problem hash, seed, timings
//!   fields/*.csv       x,value or x,re,im at 17 significant digits
//!   reports/*.json     residuals, entropies, diagnostics
//! ```
//!
//! Everything under `fields/` and `reports/` is a pure function of the
//! config and seed. Wall-clock timings live only in the manifest.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod app;
pub mod config;
pub mod experiments;
pub mod manifest;

use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use thiserror::Error;

use config::Issue;
use sbridge::io::CsvError;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid configuration: {}", join(.0))]
    Config(Vec<Issue>),

    #[error("{}: {source}", path.display())]
    Input { path: PathBuf, source: CsvError },

    #[error(transparent)]
    Numerical(#[from] sbridge::Error),

    #[error("{context}: {source}")]
    Io { context: String, source: std::io::Error },
}

fn join(issues: &[Issue]) -> String {
    issues.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

impl RunError {
    pub(crate) fn missing(field: &str) -> Self {
        RunError::Config(vec![Issue {
            field: field.into(),
            message: "missing".into(),
            line: None,
        }])
    }

    pub(crate) fn input(path: &Path, source: CsvError) -> Self {
        RunError::Input {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        RunError::Io {
            context: context.into(),
            source,
        }
    }

    /// Bad input is 2, anything that fails while computing or writing is 3.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) | RunError::Input { .. } => EXIT_CONFIG,
            RunError::Numerical(_) | RunError::Io { .. } => EXIT_RUNTIME,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            RunError::Config(_) => "config",
            RunError::Input { .. } => "input",
            RunError::Numerical(_) => "numerical",
            RunError::Io { .. } => "io",
        }
    }

    /// The error document printed on failure.
    pub fn to_json(&self) -> Value {
        let mut v = json!({
            "status": "error",
            "kind": self.kind(),
            "exit_code": self.exit_code(),
            "message": self.to_string(),
        });
        if let RunError::Config(issues) = self {
            v["issues"] = json!(issues);
        }
        v
    }
}
