//! The six runnable experiments. Each turns a checked [`RunConfig`] into
//! fields and JSON reports; writing them to disk is left to the caller.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;
use std::sync::Arc;

use serde_json::{json, Value};

use sbridge::bridge::{half_bridge, mass_profile, solve_schrodinger_system, BridgeProblem};
use sbridge::entropy::{kl_divergence, path_entropy_backward, path_entropy_forward};
use sbridge::grid::{gradient, normalize};
use sbridge::io::{read_complex, read_field, resample_density};
use sbridge::kernels::TransitionKernel;
use sbridge::quantum::{
    boundary_mass, collapse, collapsed_density, drift_fields, evolve, finite_action, hjb_residual,
    quantum_bridge, wave_packet, QuantumModel, Region, WavefunctionPath,
};
use sbridge::sde::{
    drift_energy, empirical_density, generator_check, uniform_times, Drift, FieldDrift, PathEnsemble,
    Sampler,
};
use sbridge::{ComplexField, DensityField, Grid1D, ScalarField};

use crate::config::{Experiment, LinearDrift, Marginal, Potential, RunConfig, WaveState};
use crate::RunError;

/// Most time slices of a precomputed drift field.
const MAX_DRIFT_SNAPSHOTS: usize = 1000;

#[derive(Debug, Clone)]
pub enum FieldData {
    Real(ScalarField),
    Complex(ComplexField),
}

impl From<ScalarField> for FieldData {
    fn from(f: ScalarField) -> Self {
        FieldData::Real(f)
    }
}

impl From<DensityField> for FieldData {
    fn from(d: DensityField) -> Self {
        FieldData::Real(d.into_scalar())
    }
}

impl From<ComplexField> for FieldData {
    fn from(f: ComplexField) -> Self {
        FieldData::Complex(f)
    }
}

/// Everything an experiment produces.
#[derive(Debug, Default)]
pub struct Outcome {
    /// Headline numbers, echoed into the manifest.
    pub summary: Value,
    /// `fields/<name>.csv`.
    pub fields: Vec<(String, FieldData)>,
    /// `reports/<name>.json`.
    pub reports: Vec<(String, Value)>,
    /// Exported to `fields/paths.csv` when requested.
    pub paths: Option<PathEnsemble>,
}

impl Outcome {
    fn field(&mut self, name: String, data: impl Into<FieldData>) {
        self.fields.push((name, data.into()));
    }

    fn report(&mut self, name: &str, value: Value) {
        self.reports.push((name.to_string(), value));
    }
}

/// File-name tag for a time, e.g. `t0.250000`.
pub fn time_tag(t: f64) -> String {
    format!("t{t:.6}")
}

pub fn run_experiment(cfg: &RunConfig) -> Result<Outcome, RunError> {
    let grid = Grid1D::new(cfg.grid.x_min, cfg.grid.x_max, cfg.grid.n_points)?;
    match cfg.experiment {
        Experiment::ClassicBridge => classic_bridge(cfg, grid),
        Experiment::HalfBridge => half_bridge_run(cfg, grid),
        Experiment::QuantumBridge => quantum_bridge_run(cfg, grid),
        Experiment::Collapse => collapse_run(cfg, grid),
        Experiment::Sample => sample_run(cfg, grid),
        Experiment::Entropy => entropy_run(cfg, grid),
    }
}

fn required<'a, T>(v: &'a Option<T>, field: &str) -> Result<&'a T, RunError> {
    v.as_ref().ok_or_else(|| RunError::missing(field))
}

fn open(path: &Path) -> Result<BufReader<File>, RunError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| RunError::io(format!("cannot open {}", path.display()), e))
}

fn gaussian_pdf(x: f64, mean: f64, var: f64) -> f64 {
    (-(x - mean).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

/// Density on `grid` for an analytic or tabulated marginal.
pub fn build_marginal(m: &Marginal, grid: Grid1D, field: &str) -> Result<DensityField, RunError> {
    let d = match m {
        Marginal::Gaussian { mean, var } => DensityField::gaussian(grid, *mean, *var)?,
        Marginal::Indicator { a, b } => {
            DensityField::from_fn(grid, |x| if *a <= x && x <= *b { 1.0 } else { 0.0 })?
        }
        Marginal::Mixture { components } => DensityField::from_fn(grid, |x| {
            components.iter().map(|c| c.weight * gaussian_pdf(x, c.mean, c.var)).sum()
        })?,
        Marginal::Csv { path } => {
            let table = read_field(open(path)?).map_err(|e| RunError::input(path, e))?;
            resample_density(&table, grid)?
        }
        Marginal::Terminal | Marginal::Collapsed { .. } => {
            return Err(RunError::Config(vec![crate::config::Issue {
                field: format!("{field}.kind"),
                message: "only valid for rho1 of a quantum-bridge run".into(),
                line: None,
            }]))
        }
    };
    Ok(d)
}

fn build_state(w: &WaveState, grid: Grid1D) -> Result<ComplexField, RunError> {
    match w {
        WaveState::Packet { center, width, wavenumber } => Ok(wave_packet(grid, *center, *width, *wavenumber)?),
        WaveState::Csv { path } => {
            let psi = read_complex(open(path)?).map_err(|e| RunError::input(path, e))?;
            if *psi.grid() != grid {
                return Err(RunError::Config(vec![crate::config::Issue {
                    field: "psi0.path".into(),
                    message: format!("{} is not sampled on the run grid", path.display()),
                    line: None,
                }]));
            }
            Ok(psi.normalized()?)
        }
    }
}

fn build_model(cfg: &RunConfig, grid: Grid1D) -> Result<QuantumModel, RunError> {
    let (hbar, m) = (cfg.physics.hbar, cfg.physics.m);
    Ok(match cfg.potential {
        Potential::Free => QuantumModel::free(grid, hbar, m)?,
        Potential::Harmonic { omega } => QuantumModel::harmonic(grid, hbar, m, omega)?,
    })
}

fn region(intervals: &[[f64; 2]]) -> Result<Region, RunError> {
    Ok(Region::new(intervals.iter().map(|[a, b]| (*a, *b)).collect())?)
}

fn linear(d: &LinearDrift) -> impl Drift + Copy {
    let (a, b) = (d.slope, d.offset);
    move |x: f64, _t: f64| a * x + b
}

fn moments_json(ens: &PathEnsemble) -> Value {
    let m = ens.moments();
    json!({
        "n_paths": ens.n_paths(),
        "seed": ens.seed(),
        "direction": ens.direction(),
        "sigma2": ens.sigma2(),
        "clamped_fraction": ens.clamped_fraction(),
        "times": ens.times(),
        "mean": m.iter().map(|p| p.0).collect::<Vec<_>>(),
        "variance": m.iter().map(|p| p.1).collect::<Vec<_>>(),
    })
}

fn sampler(cfg: &RunConfig, grid: Grid1D, sigma2: f64, seed: u64) -> Sampler {
    Sampler::new(grid, sigma2, cfg.sampling.n_paths, seed).record_every(cfg.sampling.record_every)
}

fn step_times(cfg: &RunConfig) -> Vec<f64> {
    uniform_times(cfg.time.t0, cfg.time.t1, cfg.time.n_steps)
}

fn histograms(out: &mut Outcome, cfg: &RunConfig, ens: &PathEnsemble, grid: &Grid1D) -> Result<(), RunError> {
    for t in cfg.output_times() {
        out.field(format!("empirical_density_{}", time_tag(t)), empirical_density(ens, t, grid)?);
    }
    Ok(())
}

fn classic_bridge(cfg: &RunConfig, grid: Grid1D) -> Result<Outcome, RunError> {
    let rho0 = build_marginal(required(&cfg.rho0, "rho0")?, grid, "rho0")?;
    let rho1 = build_marginal(required(&cfg.rho1, "rho1")?, grid, "rho1")?;
    let (t0, t1, sigma2) = (cfg.time.t0, cfg.time.t1, cfg.physics.sigma2);
    let kernel = TransitionKernel::heat(grid, t0, t1, sigma2)?;
    kernel.check_truncation(&rho0)?;
    let problem = BridgeProblem::new(&rho0, &rho1, kernel)?;
    let sol = solve_schrodinger_system(&problem, cfg.solver.tol, cfg.solver.max_iter)?;

    let mut out = Outcome::default();
    let mut masses = Vec::new();
    for t in cfg.output_times() {
        let tag = time_tag(t);
        let d = sol.density_at(t)?;
        masses.push(json!({ "t": t, "mass": d.mass() }));
        out.field(format!("density_{tag}"), d);
        out.field(format!("drift_{tag}"), sol.drift_at(t)?);
        out.field(format!("backward_drift_{tag}"), sol.backward_drift_at(t)?);
    }
    out.field("log_phi1".into(), ScalarField::new(grid, sol.log_phi1().to_vec())?);
    out.field("log_phihat0".into(), ScalarField::new(grid, sol.log_phihat0().to_vec())?);

    let profile: Vec<Value> = mass_profile(&sol, 10)?
        .into_iter()
        .map(|(t, m)| json!({ "t": t, "mass": m }))
        .collect();
    // Reference: the Wiener process started from the (floored) initial marginal.
    let entropy = sol.relative_entropy(sol.problem().rho0())?;
    let summary = json!({
        "tolerance": cfg.solver.tol,
        "iterations": sol.iterations(),
        "residual": sol.residual(),
        "gauge_log": sol.gauge_log(),
        "relative_entropy": entropy,
    });
    out.report(
        "bridge",
        json!({
            "tolerance": cfg.solver.tol,
            "max_iter": cfg.solver.max_iter,
            "iterations": sol.iterations(),
            "residual": sol.residual(),
            "residual_history": sol.residual_history(),
            "gauge_log": sol.gauge_log(),
            "relative_entropy": entropy,
            "mass_profile": profile,
            "output_masses": masses,
        }),
    );
    out.summary = summary;
    Ok(out)
}

/// `-sigma2 ∇ log p_t` for the Wiener law started from `p0`.
fn reference_backward_drift(p0: &DensityField, times: &[f64], sigma2: f64) -> Result<FieldDrift, RunError> {
    let g = *p0.grid();
    let t0 = times[0];
    let mut fields = Vec::with_capacity(times.len());
    for &t in times {
        let p_t = if t == t0 {
            p0.as_scalar().clone()
        } else {
            TransitionKernel::heat(g, t0, t, sigma2)?.forward(p0.as_scalar())?
        };
        let log_p = p_t.map(|v| v.max(f64::MIN_POSITIVE).ln());
        fields.push(gradient(&log_p).map(|d| -sigma2 * d));
    }
    Ok(FieldDrift::new(times.to_vec(), fields)?)
}

/// Largest divisor of `n_steps` not above the snapshot cap, so that every
/// snapshot lands on a step time.
fn snapshot_count(n_steps: usize) -> usize {
    (1..=n_steps.min(MAX_DRIFT_SNAPSHOTS))
        .rev()
        .find(|d| n_steps.is_multiple_of(*d))
        .unwrap_or(1)
}

fn half_bridge_run(cfg: &RunConfig, grid: Grid1D) -> Result<Outcome, RunError> {
    let p0 = build_marginal(required(&cfg.prior, "prior")?, grid, "prior")?;
    let rho1 = build_marginal(required(&cfg.rho1, "rho1")?, grid, "rho1")?;
    let (t0, t1, sigma2) = (cfg.time.t0, cfg.time.t1, cfg.physics.sigma2);
    let kernel = TransitionKernel::heat(grid, t0, t1, sigma2)?;
    kernel.check_truncation(&p0)?;
    let p1 = normalize(&kernel.forward(p0.as_scalar())?)?;

    let snapshots = uniform_times(t0, t1, snapshot_count(cfg.time.n_steps));
    let gamma: Arc<dyn Drift> = Arc::new(reference_backward_drift(&p0, &snapshots, sigma2)?);
    let hb = half_bridge(gamma.clone(), &rho1, &p1)?;
    let times = step_times(cfg);
    let ens = hb.sample(&sampler(cfg, grid, sigma2, cfg.seed), &times)?;
    let report = path_entropy_backward(&rho1, &p1, gamma.as_ref(), gamma.as_ref(), &ens, sigma2)?;

    let mut out = Outcome::default();
    out.field("prior_terminal".into(), p1);
    out.field("rho1".into(), rho1);
    histograms(&mut out, cfg, &ens, &grid)?;
    out.summary = json!({
        "optimal_value": hb.optimal_value(),
        "entropy_total": report.total,
        "kinetic_term": report.kinetic_term,
        "mc_std_error": report.mc_std_error,
        "clamped_fraction": ens.clamped_fraction(),
    });
    out.report(
        "half_bridge",
        json!({ "optimal_value": hb.optimal_value(), "entropy": report }),
    );
    out.report("ensemble", moments_json(&ens));
    if cfg.sampling.export_paths {
        out.paths = Some(ens);
    }
    Ok(out)
}

fn wavefunction_report(path: &WavefunctionPath, masked: usize) -> Value {
    let model = path.model();
    json!({
        "hbar": model.hbar(),
        "m": model.mass(),
        "times": path.times(),
        "norms": path.norms(),
        "max_boundary_mass": path.max_boundary_mass(),
        "masked_drift_points": masked,
        "finite_action": finite_action(path),
    })
}

fn quantum_bridge_run(cfg: &RunConfig, grid: Grid1D) -> Result<Outcome, RunError> {
    let model = build_model(cfg, grid)?;
    let psi0 = build_state(required(&cfg.psi0, "psi0")?, grid)?;
    let path = evolve(&psi0, &model, cfg.time.t0, cfg.time.t1, cfg.time.n_steps)?;
    let last = path.last();
    let rho1 = match required(&cfg.rho1, "rho1")? {
        Marginal::Terminal => path.density(path.len() - 1)?,
        Marginal::Collapsed { region: r } => collapsed_density(last, &region(r)?)?,
        m => build_marginal(m, grid, "rho1")?,
    };
    let tilde = quantum_bridge(&path, &rho1)?;
    let hjb = hjb_residual(&path, &tilde)?;
    let rho_end = path.density(path.len() - 1)?;
    let identity = rho1
        .values()
        .iter()
        .zip(rho_end.values())
        .all(|(a, b)| (a - b).abs() <= 1e-12 * rho_end.max());
    let max_diff = path.max_abs_diff(&tilde)?;
    let (_, _, masked) = drift_fields(&path)?;
    let (_, _, masked_tilde) = drift_fields(&tilde)?;

    let mut out = Outcome::default();
    for t in cfg.output_times() {
        let tag = time_tag(t);
        let k = path.time_index(t)?;
        out.field(format!("psi_{tag}"), path.states()[k].clone());
        out.field(format!("psi_bridge_{tag}"), tilde.states()[k].clone());
        out.field(format!("density_bridge_{tag}"), tilde.density(k)?);
    }
    out.summary = json!({
        "identity_case": identity,
        "max_abs_diff": max_diff,
        "hjb_weighted_l2": hjb.weighted_l2,
        "hjb_l2": hjb.l2,
        "terminal_error": hjb.terminal_error,
        "max_boundary_mass": path.max_boundary_mass().max(tilde.max_boundary_mass()),
    });
    out.report("wavefunction", wavefunction_report(&path, masked));
    out.report("wavefunction_bridge", wavefunction_report(&tilde, masked_tilde));
    out.report(
        "quantum_bridge",
        json!({
            "identity_case": identity,
            "max_abs_diff": max_diff,
            "hjb": hjb,
            "terminal_boundary_mass": boundary_mass(tilde.last()),
        }),
    );
    Ok(out)
}

fn collapse_run(cfg: &RunConfig, grid: Grid1D) -> Result<Outcome, RunError> {
    let model = build_model(cfg, grid)?;
    let psi0 = build_state(required(&cfg.psi0, "psi0")?, grid)?;
    let d = region(required(&cfg.region, "region")?)?;
    let path = evolve(&psi0, &model, cfg.time.t0, cfg.time.t1, cfg.time.n_steps)?;
    let psi1 = path.last();
    let (state, p1) = collapse(psi1, &d)?;
    let rho1 = collapsed_density(psi1, &d)?;
    let tilde = quantum_bridge(&path, &rho1)?;
    let bridge_gap = state.max_abs_diff(tilde.last())?;
    let outside = (0..grid.len())
        .filter(|&i| !d.contains(grid.x(i)))
        .map(|i| state.values()[i].norm())
        .fold(0.0, f64::max);
    let norm_error = (state.norm() - 1.0).abs();

    let mut out = Outcome::default();
    out.field(format!("psi_{}", time_tag(cfg.time.t1)), psi1.clone());
    out.field("collapsed_state".into(), state);
    out.field("collapsed_density".into(), rho1);
    out.summary = json!({
        "p1": p1,
        "norm_error": norm_error,
        "max_outside_region": outside,
        "bridge_terminal_gap": bridge_gap,
    });
    out.report(
        "collapse",
        json!({
            "region": d.intervals(),
            "p1": p1,
            "norm_error": norm_error,
            "max_outside_region": outside,
            "bridge_terminal_gap": bridge_gap,
        }),
    );
    Ok(out)
}

fn sample_run(cfg: &RunConfig, grid: Grid1D) -> Result<Outcome, RunError> {
    let rho0 = build_marginal(required(&cfg.rho0, "rho0")?, grid, "rho0")?;
    let sigma2 = cfg.physics.sigma2;
    let beta = linear(&cfg.drift);
    let times = step_times(cfg);
    let ens = sampler(cfg, grid, sigma2, cfg.seed).forward(&beta, &rho0, &times)?;
    let gen = generator_check(&grid.sample(|x| x * x), &ens, &beta, sigma2)?;
    let energy = drift_energy(&ens, &beta);

    let mut out = Outcome::default();
    histograms(&mut out, cfg, &ens, &grid)?;
    out.summary = json!({
        "clamped_fraction": ens.clamped_fraction(),
        "drift_energy": energy,
        "generator_discrepancy": gen.discrepancy,
        "generator_std_error": gen.std_error,
    });
    let mut stats = moments_json(&ens);
    stats["drift_energy"] = json!(energy);
    out.report("ensemble", stats);
    out.report("generator_x2", json!(gen));
    if cfg.sampling.export_paths {
        out.paths = Some(ens);
    }
    Ok(out)
}

/// Mean and variance of `dx = (a x + b) dt + sigma dW` at elapsed time `s`.
pub fn linear_moments(a: f64, b: f64, sigma2: f64, m0: f64, v0: f64, s: f64) -> (f64, f64) {
    if a == 0.0 {
        return (m0 + b * s, v0 + sigma2 * s);
    }
    let e = (a * s).exp();
    (m0 * e + b / a * (e - 1.0), v0 * e * e + sigma2 * (e * e - 1.0) / (2.0 * a))
}

/// Closed-form `H(Q, P)` for two linear-drift models with Gaussian starts.
fn linear_path_entropy(q: &LinearModel, p: &LinearModel, sigma2: f64, t0: f64, t1: f64) -> f64 {
    let (da, db) = (q.a - p.a, q.b - p.b);
    let integrand = |t: f64| {
        let (m, v) = linear_moments(q.a, q.b, sigma2, q.m0, q.v0, t - t0);
        (da * da * (v + m * m) + 2.0 * da * db * m + db * db) / (2.0 * sigma2)
    };
    // Composite Simpson; the integrand is smooth.
    let n = 2000;
    let h = (t1 - t0) / n as f64;
    let inner: f64 = (1..n)
        .map(|k| (if k % 2 == 1 { 4.0 } else { 2.0 }) * integrand(t0 + k as f64 * h))
        .sum();
    let kinetic = h / 3.0 * (integrand(t0) + inner + integrand(t1));
    let kl0 = 0.5 * (q.v0 / p.v0 + (q.m0 - p.m0).powi(2) / p.v0 - 1.0 + (p.v0 / q.v0).ln());
    kl0 + kinetic
}

#[derive(Debug, Clone, Copy)]
struct LinearModel {
    a: f64,
    b: f64,
    m0: f64,
    v0: f64,
}

impl LinearModel {
    fn new(drift: &LinearDrift, start: &Marginal) -> Self {
        let (m0, v0) = match start {
            Marginal::Gaussian { mean, var } => (*mean, *var),
            _ => unreachable!("entropy configs are checked for Gaussian marginals"),
        };
        Self {
            a: drift.slope,
            b: drift.offset,
            m0,
            v0,
        }
    }

    /// `beta - sigma2 ∇ log rho_t` with the Gaussian marginal law.
    fn backward_drift(self, sigma2: f64, t0: f64) -> impl Drift + Copy {
        move |x: f64, t: f64| {
            let (m, v) = linear_moments(self.a, self.b, sigma2, self.m0, self.v0, t - t0);
            self.a * x + self.b + sigma2 * (x - m) / v
        }
    }

    fn terminal(self, grid: Grid1D, sigma2: f64, duration: f64) -> Result<DensityField, RunError> {
        let (m, v) = linear_moments(self.a, self.b, sigma2, self.m0, self.v0, duration);
        Ok(DensityField::gaussian(grid, m, v)?)
    }
}

fn entropy_run(cfg: &RunConfig, grid: Grid1D) -> Result<Outcome, RunError> {
    let q_start = required(&cfg.rho0, "rho0")?;
    let p_start = required(&cfg.prior, "prior")?;
    let q = LinearModel::new(&cfg.drift, q_start);
    let p = LinearModel::new(&cfg.prior_drift, p_start);
    let (t0, t1, sigma2) = (cfg.time.t0, cfg.time.t1, cfg.physics.sigma2);
    let q0 = build_marginal(q_start, grid, "rho0")?;
    let p0 = build_marginal(p_start, grid, "prior")?;
    let q1 = q.terminal(grid, sigma2, t1 - t0)?;
    let p1 = p.terminal(grid, sigma2, t1 - t0)?;

    let beta_q = linear(&cfg.drift);
    let beta_p = linear(&cfg.prior_drift);
    let times = step_times(cfg);
    let ens = sampler(cfg, grid, sigma2, cfg.seed).forward(&beta_q, &q0, &times)?;
    let fwd = path_entropy_forward(&q0, &p0, &beta_q, &beta_p, &ens, sigma2)?;
    let bwd = path_entropy_backward(
        &q1,
        &p1,
        &q.backward_drift(sigma2, t0),
        &p.backward_drift(sigma2, t0),
        &ens,
        sigma2,
    )?;
    let exact = linear_path_entropy(&q, &p, sigma2, t0, t1);
    let combined_se = fwd.mc_std_error + bwd.mc_std_error;
    let gap = (fwd.total - bwd.total).abs();

    let mut out = Outcome::default();
    histograms(&mut out, cfg, &ens, &grid)?;
    out.summary = json!({
        "forward_total": fwd.total,
        "backward_total": bwd.total,
        "closed_form": exact,
        "gap": gap,
        "combined_std_error": combined_se,
    });
    out.report(
        "entropy",
        json!({
            "forward": fwd,
            "backward": bwd,
            "closed_form": exact,
            "terminal_kl": kl_divergence(&q1, &p1)?,
            "gap": gap,
            "combined_std_error": combined_se,
        }),
    );
    out.report("ensemble", moments_json(&ens));
    if cfg.sampling.export_paths {
        out.paths = Some(ens);
    }
    Ok(out)
}
