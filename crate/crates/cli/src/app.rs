//! Command-line entry points.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde_json::json;

use crate::config::{self, Issue, RunConfig};
use crate::experiments::run_experiment;
use crate::manifest::{config_from_manifest, problem_hash, write_manifest, write_outcome, Manifest, Timings, TOOL};
use crate::{RunError, EXIT_CONFIG, EXIT_OK};

#[derive(Debug, Parser)]
#[command(name = "sbridge", version, about = "Classical and quantum Schrödinger bridges on a 1-D grid")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an experiment and write its artifact directory.
    Run {
        /// TOML config, or a `manifest.json` from an earlier run.
        config: PathBuf,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Check a config without running it.
    Validate { config: PathBuf },
}

/// Load a TOML config or the config embedded in a manifest.
pub fn load_config(path: &Path) -> Result<RunConfig, Vec<Issue>> {
    if path.extension().is_some_and(|e| e == "json") {
        let text = std::fs::read_to_string(path).map_err(|e| {
            vec![Issue {
                field: "<file>".into(),
                message: format!("cannot read {}: {e}", path.display()),
                line: None,
            }]
        })?;
        return config_from_manifest(&text).map_err(|message| {
            vec![Issue {
                field: "<manifest>".into(),
                message,
                line: None,
            }]
        });
    }
    config::load(path)
}

/// Run a checked config and write its artifacts.
pub fn run(cfg: &RunConfig) -> Result<Manifest, RunError> {
    let issues = cfg.check();
    if !issues.is_empty() {
        return Err(RunError::Config(issues));
    }
    let hash = problem_hash(cfg)?;
    let start = Instant::now();
    let outcome = run_experiment(cfg)?;
    let compute_ms = start.elapsed().as_secs_f64() * 1e3;
    let start = Instant::now();
    let dir = &cfg.output_dir;
    let artifacts = write_outcome(dir, &outcome)?;
    let write_ms = start.elapsed().as_secs_f64() * 1e3;
    let manifest = Manifest {
        tool: TOOL,
        version: env!("CARGO_PKG_VERSION"),
        core_version: sbridge::VERSION,
        experiment: cfg.experiment.name(),
        problem_hash: hash,
        seed: cfg.seed,
        config: cfg.clone(),
        results: outcome.summary,
        artifacts,
        timings: Timings { compute_ms, write_ms },
    };
    write_manifest(dir, &manifest)?;
    Ok(manifest)
}

fn print_json(v: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("json values serialize"));
}

/// Execute a parsed command line; returns the process exit code.
pub fn execute(cli: Cli) -> i32 {
    match cli.command {
        Command::Validate { config } => {
            let issues = match load_config(&config) {
                Ok(cfg) => cfg.check(),
                Err(issues) => issues,
            };
            print_json(&json!({
                "config": config,
                "valid": issues.is_empty(),
                "issues": issues,
            }));
            if issues.is_empty() {
                EXIT_OK
            } else {
                EXIT_CONFIG
            }
        }
        Command::Run { config, output_dir, seed } => {
            let result = load_config(&config).map_err(RunError::Config).and_then(|mut cfg| {
                if let Some(dir) = output_dir {
                    cfg.output_dir = dir;
                }
                if let Some(seed) = seed {
                    cfg.seed = seed;
                }
                run(&cfg)
            });
            match result {
                Ok(m) => {
                    print_json(&json!({
                        "status": "ok",
                        "experiment": m.experiment,
                        "output_dir": m.config.output_dir,
                        "results": m.results,
                    }));
                    EXIT_OK
                }
                Err(e) => {
                    log::error!("{e}");
                    print_json(&e.to_json());
                    e.exit_code()
                }
            }
        }
    }
}
