//! Run configuration: one TOML file per experiment.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    ClassicBridge,
    HalfBridge,
    QuantumBridge,
    Collapse,
    Sample,
    Entropy,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::ClassicBridge => "classic-bridge",
            Experiment::HalfBridge => "half-bridge",
            Experiment::QuantumBridge => "quantum-bridge",
            Experiment::Collapse => "collapse",
            Experiment::Sample => "sample",
            Experiment::Entropy => "entropy",
        }
    }

    fn is_quantum(self) -> bool {
        matches!(self, Experiment::QuantumBridge | Experiment::Collapse)
    }

    fn samples_paths(self) -> bool {
        matches!(self, Experiment::HalfBridge | Experiment::Sample | Experiment::Entropy)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub n_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSpec {
    pub t0: f64,
    pub t1: f64,
    pub n_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Physics {
    pub sigma2: f64,
    pub hbar: f64,
    pub m: f64,
}

impl Default for Physics {
    fn default() -> Self {
        Self {
            sigma2: 1.0,
            hbar: 1.0,
            m: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSpec {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverSpec {
    fn default() -> Self {
        Self {
            tol: sbridge::bridge::DEFAULT_TOL,
            max_iter: sbridge::bridge::DEFAULT_MAX_ITER,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingSpec {
    pub n_paths: usize,
    /// Keep every k-th Euler step in the stored ensemble.
    pub record_every: usize,
    /// Write every stored position to `fields/paths.csv`.
    pub export_paths: bool,
}

impl Default for SamplingSpec {
    fn default() -> Self {
        Self {
            n_paths: 10_000,
            record_every: 1,
            export_paths: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    /// Times at which fields are written; empty means 11 equispaced times.
    pub times: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Component {
    pub weight: f64,
    pub mean: f64,
    pub var: f64,
}

/// A density on the run grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Marginal {
    Gaussian { mean: f64, var: f64 },
    /// Uniform on `[a, b]`.
    Indicator { a: f64, b: f64 },
    Mixture { components: Vec<Component> },
    /// `x,value` table, linearly interpolated onto the grid.
    Csv { path: PathBuf },
    /// `|psi(t1)|^2` of the evolved state (quantum bridge only).
    Terminal,
    /// Post-measurement density `χ_D |psi(t1)|^2 / p1` (quantum bridge only).
    Collapsed { region: Vec<[f64; 2]> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum WaveState {
    Packet {
        center: f64,
        width: f64,
        #[serde(default)]
        wavenumber: f64,
    },
    /// `x,re,im` table on exactly the run grid.
    Csv { path: PathBuf },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Potential {
    #[default]
    Free,
    Harmonic { omega: f64 },
}

/// `b(x, t) = slope * x + offset`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinearDrift {
    pub slope: f64,
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Experiment,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub grid: GridSpec,
    pub time: TimeSpec,
    #[serde(default)]
    pub physics: Physics,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub sampling: SamplingSpec,
    #[serde(default)]
    pub output: OutputSpec,
    /// Initial density (classic bridge, sampling, entropy model Q).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho0: Option<Marginal>,
    /// Terminal density (classic, half and quantum bridge).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho1: Option<Marginal>,
    /// Initial density of the reference process (half bridge, entropy model P).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<Marginal>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi0: Option<WaveState>,
    #[serde(default)]
    pub potential: Potential,
    /// Measurement region for collapse, a union of closed finite intervals.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<Vec<[f64; 2]>>,
    /// Forward drift of the sampled model.
    #[serde(default)]
    pub drift: LinearDrift,
    /// Forward drift of the reference model (entropy).
    #[serde(default)]
    pub prior_drift: LinearDrift,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("sbridge-out")
}

/// One problem found while checking a configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Issue {
    pub field: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub line: Option<usize>,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}: {}", self.field, self.message),
            None => write!(f, "{}: {}", self.field, self.message),
        }
    }
}

fn issue(field: impl Into<String>, message: impl Into<String>) -> Issue {
    Issue {
        field: field.into(),
        message: message.into(),
        line: None,
    }
}

/// Upper bounds that keep a run on one desktop.
pub const MAX_POINTS: usize = 20_001;
pub const MAX_STEPS: usize = 1_000_000;
pub const MAX_PATHS: usize = 10_000_000;
/// Largest stored ensemble, in positions (8 bytes each).
pub const MAX_STORED_POSITIONS: usize = 200_000_000;

/// Parse TOML text. Errors carry the offending line when known.
pub fn parse(text: &str) -> Result<RunConfig, Issue> {
    toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
        Issue {
            field: "<parse>".into(),
            message: e.message().to_string(),
            line,
        }
    })
}

pub fn to_toml(cfg: &RunConfig) -> String {
    toml::to_string(cfg).expect("configs serialize")
}

impl RunConfig {
    /// Rewrite relative CSV paths against `base` so the config can be rerun
    /// from anywhere.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for m in [&mut self.rho0, &mut self.rho1, &mut self.prior].into_iter().flatten() {
            if let Marginal::Csv { path } = m {
                fix(path);
            }
        }
        if let Some(WaveState::Csv { path }) = &mut self.psi0 {
            fix(path);
        }
    }

    /// Steps between stored states, for experiments that only keep some.
    fn stored_stride(&self) -> Option<usize> {
        match self.experiment {
            Experiment::QuantumBridge => Some(1),
            Experiment::HalfBridge | Experiment::Sample | Experiment::Entropy => {
                Some(self.sampling.record_every.max(1))
            }
            _ => None,
        }
    }

    /// Output times. The default is 11 equispaced times on `[t0, t1]`, or
    /// the closest spread of stored times when fewer than 10 intervals are
    /// stored.
    pub fn output_times(&self) -> Vec<f64> {
        if !self.output.times.is_empty() {
            return self.output.times.clone();
        }
        let (t0, t1) = (self.time.t0, self.time.t1);
        if t1 == t0 {
            return vec![t0];
        }
        let stored = match self.stored_stride() {
            Some(stride) if stride > 0 => self.time.n_steps / stride,
            _ => 10,
        };
        if stored == 0 || stored.is_multiple_of(10) {
            return sbridge::sde::uniform_times(t0, t1, 10);
        }
        let all = sbridge::sde::uniform_times(t0, t1, stored);
        let mut idx: Vec<usize> = (0..=10).map(|j| (j * stored + 5) / 10).collect();
        idx.dedup();
        idx.into_iter().map(|k| all[k]).collect()
    }

    pub fn step(&self) -> f64 {
        (self.time.t1 - self.time.t0) / self.time.n_steps as f64
    }

    /// Index of `t` on the stored time grid (every `stride` steps).
    pub fn stored_index(&self, t: f64, stride: usize) -> Option<usize> {
        let dt = self.step() * stride as f64;
        if dt == 0.0 {
            return (t == self.time.t0).then_some(0);
        }
        let k = ((t - self.time.t0) / dt).round();
        let stored = self.time.n_steps / stride;
        (k >= 0.0 && k as usize <= stored && (self.time.t0 + k * dt - t).abs() <= 1e-9 * (1.0 + t.abs()))
            .then_some(k as usize)
    }

    /// Every range, existence and consistency problem; empty when runnable.
    pub fn check(&self) -> Vec<Issue> {
        let mut out = Vec::new();
        let g = &self.grid;
        if !(g.x_min.is_finite() && g.x_max.is_finite() && g.x_min < g.x_max) {
            out.push(issue("grid.x_min", format!("need finite x_min < x_max, got [{}, {}]", g.x_min, g.x_max)));
        }
        if g.n_points < 3 || g.n_points > MAX_POINTS {
            out.push(issue("grid.n_points", format!("must be in 3..={MAX_POINTS}, got {}", g.n_points)));
        }
        let t = &self.time;
        let zero_length_ok = self.experiment == Experiment::Collapse;
        if !(t.t0.is_finite() && t.t1.is_finite()) || t.t1 < t.t0 || (t.t1 == t.t0 && !zero_length_ok) {
            out.push(issue("time.t1", format!("need t0 < t1, got [{}, {}]", t.t0, t.t1)));
        }
        if t.n_steps < 1 || t.n_steps > MAX_STEPS {
            out.push(issue("time.n_steps", format!("must be in 1..={MAX_STEPS}, got {}", t.n_steps)));
        }
        let p = &self.physics;
        let relevant = if self.experiment.is_quantum() {
            [("physics.hbar", p.hbar), ("physics.m", p.m)].to_vec()
        } else {
            [("physics.sigma2", p.sigma2)].to_vec()
        };
        for (name, v) in relevant {
            if !(v > 0.0 && v.is_finite()) {
                out.push(issue(name, format!("must be positive, got {v}")));
            }
        }
        if self.experiment == Experiment::ClassicBridge {
            if !(self.solver.tol > 0.0) {
                out.push(issue("solver.tol", format!("must be positive, got {}", self.solver.tol)));
            }
            if self.solver.max_iter == 0 {
                out.push(issue("solver.max_iter", "must be at least 1"));
            }
        }
        if self.experiment.samples_paths() {
            self.check_sampling(&mut out);
        }
        self.check_inputs(&mut out);
        self.check_output_times(&mut out);
        out
    }

    fn check_sampling(&self, out: &mut Vec<Issue>) {
        let s = &self.sampling;
        if s.n_paths == 0 || s.n_paths > MAX_PATHS {
            out.push(issue("sampling.n_paths", format!("must be in 1..={MAX_PATHS}, got {}", s.n_paths)));
        }
        if s.record_every == 0 || !self.time.n_steps.is_multiple_of(s.record_every) {
            out.push(issue(
                "sampling.record_every",
                format!("must divide time.n_steps = {}, got {}", self.time.n_steps, s.record_every),
            ));
        } else {
            let stored = (self.time.n_steps / s.record_every + 1).saturating_mul(s.n_paths);
            if stored > MAX_STORED_POSITIONS {
                out.push(issue(
                    "sampling.record_every",
                    format!("ensemble would store {stored} positions (limit {MAX_STORED_POSITIONS})"),
                ));
            }
        }
    }

    fn check_inputs(&self, out: &mut Vec<Issue>) {
        let need = |out: &mut Vec<Issue>, present: bool, field: &str| {
            if !present {
                out.push(issue(field, format!("required for experiment `{}`", self.experiment.name())));
            }
        };
        match self.experiment {
            Experiment::ClassicBridge => {
                need(out, self.rho0.is_some(), "rho0");
                need(out, self.rho1.is_some(), "rho1");
            }
            Experiment::HalfBridge => {
                need(out, self.prior.is_some(), "prior");
                need(out, self.rho1.is_some(), "rho1");
            }
            Experiment::QuantumBridge => {
                need(out, self.psi0.is_some(), "psi0");
                need(out, self.rho1.is_some(), "rho1");
            }
            Experiment::Collapse => {
                need(out, self.psi0.is_some(), "psi0");
                need(out, self.region.is_some(), "region");
            }
            Experiment::Sample => need(out, self.rho0.is_some(), "rho0"),
            Experiment::Entropy => {
                for (field, m) in [("rho0", &self.rho0), ("prior", &self.prior)] {
                    match m {
                        Some(Marginal::Gaussian { .. }) | None => need(out, m.is_some(), field),
                        Some(_) => out.push(issue(
                            format!("{field}.kind"),
                            "entropy runs need Gaussian marginals so that backward drifts are known",
                        )),
                    }
                }
            }
        }
        for (field, m) in [("rho0", &self.rho0), ("rho1", &self.rho1), ("prior", &self.prior)] {
            if let Some(m) = m {
                self.check_marginal(field, m, out);
            }
        }
        if let Some(psi) = &self.psi0 {
            match psi {
                WaveState::Packet { width, center, wavenumber } => {
                    if !(*width > 0.0) {
                        out.push(issue("psi0.width", format!("must be positive, got {width}")));
                    }
                    if !center.is_finite() || !wavenumber.is_finite() {
                        out.push(issue("psi0", "center and wavenumber must be finite"));
                    }
                }
                WaveState::Csv { path } => check_file("psi0.path", path, out),
            }
        }
        if let Potential::Harmonic { omega } = self.potential {
            if !(omega > 0.0 && omega.is_finite()) {
                out.push(issue("potential.omega", format!("must be positive, got {omega}")));
            }
        }
        if let Some(region) = &self.region {
            check_region("region", region, out);
        }
        for (name, d) in [("drift", &self.drift), ("prior_drift", &self.prior_drift)] {
            if !(d.slope.is_finite() && d.offset.is_finite()) {
                out.push(issue(name, "slope and offset must be finite"));
            }
        }
    }

    fn check_marginal(&self, field: &str, m: &Marginal, out: &mut Vec<Issue>) {
        let quantum_only = |out: &mut Vec<Issue>| {
            if self.experiment != Experiment::QuantumBridge || field != "rho1" {
                out.push(issue(format!("{field}.kind"), "only valid for rho1 of a quantum-bridge run"));
            }
        };
        match m {
            Marginal::Gaussian { mean, var } => {
                if !(*var > 0.0 && var.is_finite()) {
                    out.push(issue(format!("{field}.var"), format!("must be positive, got {var}")));
                }
                if !mean.is_finite() {
                    out.push(issue(format!("{field}.mean"), "must be finite"));
                }
            }
            Marginal::Indicator { a, b } => {
                if !(a < b) {
                    out.push(issue(format!("{field}.b"), format!("need a < b, got [{a}, {b}]")));
                } else if *b < self.grid.x_min || *a > self.grid.x_max {
                    out.push(issue(format!("{field}.a"), "interval misses the grid"));
                }
            }
            Marginal::Mixture { components } => {
                if components.is_empty() {
                    out.push(issue(format!("{field}.components"), "needs at least one component"));
                }
                for (i, c) in components.iter().enumerate() {
                    if !(c.weight > 0.0 && c.weight.is_finite()) {
                        out.push(issue(format!("{field}.components[{i}].weight"), "must be positive"));
                    }
                    if !(c.var > 0.0 && c.var.is_finite()) {
                        out.push(issue(format!("{field}.components[{i}].var"), "must be positive"));
                    }
                }
            }
            Marginal::Csv { path } => check_file(&format!("{field}.path"), path, out),
            Marginal::Terminal => quantum_only(out),
            Marginal::Collapsed { region } => {
                quantum_only(out);
                check_region(&format!("{field}.region"), region, out);
            }
        }
    }

    fn check_output_times(&self, out: &mut Vec<Issue>) {
        let times = self.output_times();
        let stride = self.stored_stride();
        for (i, &t) in times.iter().enumerate() {
            let field = format!("output.times[{i}]");
            if !(t >= self.time.t0 && t <= self.time.t1) {
                out.push(issue(field, format!("{t} lies outside [{}, {}]", self.time.t0, self.time.t1)));
            } else if let Some(stride) = stride {
                if self.time.n_steps > 0 && self.stored_index(t, stride).is_none() {
                    out.push(issue(field, format!("{t} is not a stored time (every {stride} steps)")));
                }
            }
        }
        let mut sorted = times.clone();
        sorted.sort_by(f64::total_cmp);
        if sorted.windows(2).any(|w| w[1] - w[0] < 1e-6) {
            out.push(issue("output.times", "times must be distinct (at least 1e-6 apart)"));
        }
    }
}

fn check_file(field: &str, path: &Path, out: &mut Vec<Issue>) {
    if !path.is_file() {
        out.push(issue(field, format!("file not found: {}", path.display())));
    }
}

fn check_region(field: &str, region: &[[f64; 2]], out: &mut Vec<Issue>) {
    if region.is_empty() {
        out.push(issue(field, "needs at least one interval"));
    }
    for (i, [a, b]) in region.iter().enumerate() {
        if !(a < b && a.is_finite() && b.is_finite()) {
            out.push(issue(format!("{field}[{i}]"), format!("need finite a < b, got [{a}, {b}]")));
        }
    }
}

/// Read, parse, resolve and check a config file.
pub fn load(path: &Path) -> Result<RunConfig, Vec<Issue>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| vec![issue("<file>", format!("cannot read {}: {e}", path.display()))])?;
    let mut cfg = parse(&text).map_err(|i| vec![i])?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let base = if base.as_os_str().is_empty() { PathBuf::from(".") } else { base };
    cfg.resolve_paths(&base);
    Ok(cfg)
}
