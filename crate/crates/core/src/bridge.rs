//! Schrödinger bridges between two marginals over a Wiener reference.
//!
//! The potentials solve
//!
//! ```text
//! phi(t, x)    = ∫ p(t, x, t1, y) phi(t1, y) dy          (p-harmonic)
//! phihat(t, x) = ∫ p(t0, y, t, x) phihat(t0, y) dy       (p-coharmonic)
//! phi(t0) phihat(t0) = rho0,   phi(t1) phihat(t1) = rho1
//! ```
//!
//! and are found by alternating rescaling (Fortet / Sinkhorn / IPF). Only
//! `phi(., t1)` and `phihat(., t0)` are stored, as logarithms; every other
//! time slice is reconstructed by propagating them with fresh heat kernels.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::entropy::kl_divergence;
use crate::error::{Error, Result};
use crate::grid::{gradient, integrate, same_grid, DensityField, Grid1D, ScalarField};
use crate::kernels::TransitionKernel;
use crate::sde::{Drift, FieldDrift, Initial, PathEnsemble, Sampler};

/// Marginals are raised to this fraction of their peak before taking logs.
pub const DENSITY_FLOOR: f64 = 1e-30;
pub const DEFAULT_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_ITER: usize = 5000;

/// Tolerance on the unit mass of a reconstructed bridge density.
const MASS_TOLERANCE: f64 = 1e-6;

#[derive(Clone)]
pub struct BridgeProblem {
    rho0: DensityField,
    rho1: DensityField,
    kernel: TransitionKernel,
    prior_drift: Option<Arc<dyn Drift>>,
}

impl fmt::Debug for BridgeProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BridgeProblem")
            .field("t0", &self.kernel.start())
            .field("t1", &self.kernel.end())
            .field("sigma2", &self.kernel.sigma2())
            .field("n_points", &self.kernel.grid().len())
            .field("prior_drift", &self.prior_drift.is_some())
            .finish()
    }
}

impl BridgeProblem {
    /// Floors both marginals at `DENSITY_FLOOR * max` and renormalizes.
    pub fn new(rho0: &DensityField, rho1: &DensityField, kernel: TransitionKernel) -> Result<Self> {
        same_grid(rho0.grid(), kernel.grid())?;
        same_grid(rho1.grid(), kernel.grid())?;
        Ok(Self {
            rho0: rho0.floored(DENSITY_FLOOR)?,
            rho1: rho1.floored(DENSITY_FLOOR)?,
            kernel,
            prior_drift: None,
        })
    }

    /// Forward drift of the reference process, zero (Wiener) when unset.
    pub fn with_prior_drift(mut self, drift: Arc<dyn Drift>) -> Self {
        self.prior_drift = Some(drift);
        self
    }

    pub fn rho0(&self) -> &DensityField {
        &self.rho0
    }

    pub fn rho1(&self) -> &DensityField {
        &self.rho1
    }

    pub fn kernel(&self) -> &TransitionKernel {
        &self.kernel
    }

    pub fn grid(&self) -> &Grid1D {
        self.kernel.grid()
    }

    pub fn t0(&self) -> f64 {
        self.kernel.start()
    }

    pub fn t1(&self) -> f64 {
        self.kernel.end()
    }

    pub fn sigma2(&self) -> Option<f64> {
        self.kernel.sigma2()
    }
}

/// Log-domain propagation, abstracted so that the scaling loop also runs on
/// bare matrices.
trait LogPropagator {
    fn forward_log(&self, log_f: &[f64]) -> Vec<f64>;
    fn backward_log(&self, log_g: &[f64]) -> Vec<f64>;
}

impl LogPropagator for TransitionKernel {
    fn forward_log(&self, log_f: &[f64]) -> Vec<f64> {
        TransitionKernel::forward_log(self, log_f)
    }

    fn backward_log(&self, log_g: &[f64]) -> Vec<f64> {
        TransitionKernel::backward_log(self, log_g)
    }
}

struct DenseLogKernel {
    n: usize,
    log_matrix: Vec<f64>,
    log_adjoint: Vec<f64>,
}

impl DenseLogKernel {
    fn new(matrix: &[f64], weights: &[f64]) -> Self {
        let n = weights.len();
        let log_matrix: Vec<f64> = matrix.iter().map(|v| v.ln()).collect();
        let mut log_adjoint = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                log_adjoint[j * n + i] = log_matrix[i * n + j] + weights[i].ln() - weights[j].ln();
            }
        }
        Self {
            n,
            log_matrix,
            log_adjoint,
        }
    }

    fn apply(rows: &[f64], n: usize, v: &[f64]) -> Vec<f64> {
        rows.chunks(n)
            .map(|row| {
                let m = row.iter().zip(v).map(|(a, b)| a + b).fold(f64::NEG_INFINITY, f64::max);
                if !m.is_finite() {
                    return m;
                }
                m + row.iter().zip(v).map(|(a, b)| (a + b - m).exp()).sum::<f64>().ln()
            })
            .collect()
    }
}

impl LogPropagator for DenseLogKernel {
    fn forward_log(&self, log_f: &[f64]) -> Vec<f64> {
        Self::apply(&self.log_matrix, self.n, log_f)
    }

    fn backward_log(&self, log_g: &[f64]) -> Vec<f64> {
        Self::apply(&self.log_adjoint, self.n, log_g)
    }
}

/// Raw result of the alternating scaling.
#[derive(Debug, Clone, Serialize)]
pub struct Scaling {
    /// `ln phi(., t1)`.
    pub log_phi1: Vec<f64>,
    /// `ln phihat(., t0)`.
    pub log_phihat0: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    /// `max(L1 error at t0, L1 error at t1)` after every sweep.
    pub history: Vec<f64>,
}

fn weighted_l1(log_a: &[f64], log_b: &[f64], target: &[f64], weights: &[f64]) -> f64 {
    log_a
        .iter()
        .zip(log_b)
        .zip(target.iter().zip(weights))
        .map(|((a, b), (r, w))| w * ((a + b).exp() - r).abs())
        .sum()
}

fn sinkhorn<P: LogPropagator>(
    kernel: &P,
    weights: &[f64],
    rho0: &[f64],
    rho1: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<Scaling> {
    let log_rho0: Vec<f64> = rho0.iter().map(|v| v.ln()).collect();
    let log_rho1: Vec<f64> = rho1.iter().map(|v| v.ln()).collect();
    let mut log_phihat0 = log_rho0.clone();
    let mut log_phihat1 = kernel.forward_log(&log_phihat0);
    let mut log_phi1 = vec![0.0; rho1.len()];
    let mut history = Vec::new();
    let mut residual = f64::INFINITY;
    for iteration in 1..=max_iter {
        for (p, (r, h)) in log_phi1.iter_mut().zip(log_rho1.iter().zip(&log_phihat1)) {
            *p = r - h;
        }
        let log_phi0 = kernel.backward_log(&log_phi1);
        for (p, (r, h)) in log_phihat0.iter_mut().zip(log_rho0.iter().zip(&log_phi0)) {
            *p = r - h;
        }
        log_phihat1 = kernel.forward_log(&log_phihat0);
        if log_phihat0.iter().chain(&log_phihat1).chain(&log_phi1).any(|v| !v.is_finite()) {
            return Err(Error::NonOverlappingSupport { iteration });
        }
        let r0 = weighted_l1(&log_phi0, &log_phihat0, rho0, weights);
        let r1 = weighted_l1(&log_phi1, &log_phihat1, rho1, weights);
        residual = r0.max(r1);
        history.push(residual);
        if residual < tol {
            return Ok(Scaling {
                log_phi1,
                log_phihat0,
                iterations: iteration,
                residual,
                history,
            });
        }
    }
    Err(Error::NoConvergence { max_iter, residual })
}

/// Scale a folded kernel matrix (`matrix[i*n + j]`, quadrature weights
/// `weights`) to the marginals `rho0` (columns) and `rho1` (rows).
pub fn scale_marginals(
    matrix: &[f64],
    weights: &[f64],
    rho0: &[f64],
    rho1: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<Scaling> {
    let n = weights.len();
    if matrix.len() != n * n || rho0.len() != n || rho1.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: rho0.len().max(rho1.len()),
        });
    }
    sinkhorn(&DenseLogKernel::new(matrix, weights), weights, rho0, rho1, tol, max_iter)
}

#[derive(Debug, Clone)]
pub struct BridgeSolution {
    problem: BridgeProblem,
    log_phi1: Vec<f64>,
    log_phihat0: Vec<f64>,
    iterations: usize,
    residual: f64,
    history: Vec<f64>,
    gauge_log: f64,
}

/// Solve Schrödinger's system by log-domain Sinkhorn iteration.
pub fn solve_schrodinger_system(p: &BridgeProblem, tol: f64, max_iter: usize) -> Result<BridgeSolution> {
    let weights = p.grid().weights();
    let s = sinkhorn(&p.kernel, &weights, p.rho0.values(), p.rho1.values(), tol, max_iter)?;
    let mut sol = BridgeSolution {
        problem: p.clone(),
        log_phi1: s.log_phi1,
        log_phihat0: s.log_phihat0,
        iterations: s.iterations,
        residual: s.residual,
        history: s.history,
        gauge_log: 0.0,
    };
    sol.fix_gauge();
    Ok(sol)
}

fn mean_over_grid(g: &Grid1D, v: &[f64]) -> f64 {
    (0..g.len()).map(|i| g.weight(i) * v[i]).sum::<f64>() / g.width()
}

impl BridgeSolution {
    /// Rescale `(c phi, phihat / c)` so that `ln phi(t1)` and `ln phihat(t1)`
    /// have equal grid means.
    fn fix_gauge(&mut self) {
        let g = *self.problem.grid();
        let log_phihat1 = self.problem.kernel.forward_log(&self.log_phihat0);
        let shift = 0.5 * (mean_over_grid(&g, &log_phihat1) - mean_over_grid(&g, &self.log_phi1));
        self.apply_gauge(shift);
        self.gauge_log += shift;
    }

    /// Multiply `phi` by `e^shift` and divide `phihat` by it. Observables
    /// are unchanged.
    pub fn apply_gauge(&mut self, shift: f64) {
        self.log_phi1.iter_mut().for_each(|v| *v += shift);
        self.log_phihat0.iter_mut().for_each(|v| *v -= shift);
    }

    pub fn problem(&self) -> &BridgeProblem {
        &self.problem
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn residual_history(&self) -> &[f64] {
        &self.history
    }

    /// Total log-rescaling applied to `phi` by gauge fixing.
    pub fn gauge_log(&self) -> f64 {
        self.gauge_log
    }

    pub fn log_phi1(&self) -> &[f64] {
        &self.log_phi1
    }

    pub fn log_phihat0(&self) -> &[f64] {
        &self.log_phihat0
    }

    pub fn phi1(&self) -> ScalarField {
        self.exp_field(&self.log_phi1)
    }

    pub fn phihat0(&self) -> ScalarField {
        self.exp_field(&self.log_phihat0)
    }

    fn exp_field(&self, logs: &[f64]) -> ScalarField {
        ScalarField::new(*self.problem.grid(), logs.iter().map(|v| v.exp()).collect())
            .expect("exponentials of finite potentials are finite")
    }

    fn check_time(&self, t: f64) -> Result<()> {
        let (t0, t1) = (self.problem.t0(), self.problem.t1());
        if t < t0 || t > t1 {
            return Err(Error::InvalidInterval { s: t0, t });
        }
        Ok(())
    }

    fn heat(&self, s: f64, t: f64) -> Result<TransitionKernel> {
        let sigma2 = self.problem.sigma2().ok_or(Error::InvalidParameter {
            name: "kernel",
            reason: "intermediate times need a Wiener reference kernel".into(),
        })?;
        TransitionKernel::heat(*self.problem.grid(), s, t, sigma2)
    }

    /// `ln phi(., t)`, building the kernel over `[t, t1]` when needed.
    pub fn log_phi_at(&self, t: f64) -> Result<Vec<f64>> {
        self.check_time(t)?;
        if t == self.problem.t1() {
            return Ok(self.log_phi1.clone());
        }
        if t == self.problem.t0() {
            return Ok(self.problem.kernel.backward_log(&self.log_phi1));
        }
        Ok(self.heat(t, self.problem.t1())?.backward_log(&self.log_phi1))
    }

    /// `ln phihat(., t)`, building the kernel over `[t0, t]` when needed.
    pub fn log_phihat_at(&self, t: f64) -> Result<Vec<f64>> {
        self.check_time(t)?;
        if t == self.problem.t0() {
            return Ok(self.log_phihat0.clone());
        }
        if t == self.problem.t1() {
            return Ok(self.problem.kernel.forward_log(&self.log_phihat0));
        }
        Ok(self.heat(self.problem.t0(), t)?.forward_log(&self.log_phihat0))
    }

    /// `rho(., t) = phi(., t) phihat(., t)`, not renormalized.
    pub fn density_at(&self, t: f64) -> Result<DensityField> {
        density_from_logs(self.problem.grid(), &self.log_phi_at(t)?, &self.log_phihat_at(t)?, t)
    }

    /// Forward drift `b_P + sigma2 * grad ln phi(., t)`.
    pub fn drift_at(&self, t: f64) -> Result<ScalarField> {
        self.drift_from_log_phi(t, &self.log_phi_at(t)?)
    }

    /// Backward drift `b_P - sigma2 * grad ln phihat(., t)` (Wiener reference).
    pub fn backward_drift_at(&self, t: f64) -> Result<ScalarField> {
        let sigma2 = self.sigma2()?;
        let log_phihat = self.log_phihat_at(t)?;
        let score = log_gradient(self.problem.grid(), &log_phihat)?;
        let g = *self.problem.grid();
        let values = (0..g.len())
            .map(|i| self.prior_drift(g.x(i), t) - sigma2 * score.values()[i])
            .collect();
        ScalarField::new(g, values)
    }

    /// Forward drift sampled at `times`, ready for the path sampler.
    pub fn forward_drift_field(&self, times: &[f64]) -> Result<FieldDrift> {
        let fields = times.iter().map(|&t| self.drift_at(t)).collect::<Result<Vec<_>>>()?;
        FieldDrift::new(times.to_vec(), fields)
    }

    pub fn backward_drift_field(&self, times: &[f64]) -> Result<FieldDrift> {
        let fields = times.iter().map(|&t| self.backward_drift_at(t)).collect::<Result<Vec<_>>>()?;
        FieldDrift::new(times.to_vec(), fields)
    }

    fn sigma2(&self) -> Result<f64> {
        self.problem.sigma2().ok_or(Error::InvalidParameter {
            name: "kernel",
            reason: "drifts need the diffusion coefficient of a Wiener kernel".into(),
        })
    }

    fn prior_drift(&self, x: f64, t: f64) -> f64 {
        self.problem.prior_drift.as_ref().map_or(0.0, |b| b.eval(x, t))
    }

    fn drift_from_log_phi(&self, t: f64, log_phi: &[f64]) -> Result<ScalarField> {
        let sigma2 = self.sigma2()?;
        let g = *self.problem.grid();
        let score = log_gradient(&g, log_phi)?;
        let values = (0..g.len())
            .map(|i| self.prior_drift(g.x(i), t) + sigma2 * score.values()[i])
            .collect();
        ScalarField::new(g, values)
    }

    /// Relative entropy of the bridge with respect to the reference started
    /// from `p0`, from the static coupling:
    /// `∫ rho0 ln(phihat0 / p0) + ∫ rho1 ln phi1`.
    pub fn relative_entropy(&self, p0: &DensityField) -> Result<f64> {
        let g = *self.problem.grid();
        same_grid(&g, p0.grid())?;
        let rho0 = self.problem.rho0.values();
        let rho1 = self.problem.rho1.values();
        let mut h = 0.0;
        for i in 0..g.len() {
            let w = g.weight(i);
            if rho0[i] > 0.0 {
                if !(p0.values()[i] > 0.0) {
                    return Err(Error::InfiniteEntropy);
                }
                h += w * rho0[i] * (self.log_phihat0[i] - p0.values()[i].ln());
            }
            h += w * rho1[i] * self.log_phi1[i];
        }
        Ok(h)
    }
}

fn log_gradient(g: &Grid1D, log_values: &[f64]) -> Result<ScalarField> {
    if let Some(index) = log_values.iter().position(|v| !v.is_finite()) {
        return Err(Error::DegeneratePotential { index });
    }
    Ok(gradient(&ScalarField::new(*g, log_values.to_vec())?))
}

fn density_from_logs(g: &Grid1D, log_phi: &[f64], log_phihat: &[f64], t: f64) -> Result<DensityField> {
    let values = log_phi.iter().zip(log_phihat).map(|(a, b)| (a + b).exp()).collect();
    let d = DensityField::from_unnormalized(*g, values)?;
    let mass = d.mass();
    if (mass - 1.0).abs() > MASS_TOLERANCE {
        log::warn!("bridge density at t={t} has mass {mass:.9}");
    }
    Ok(d)
}

fn check_partition(sol: &BridgeSolution, t: f64, k_t0t: Option<&TransitionKernel>, k_tt1: Option<&TransitionKernel>) -> Result<()> {
    let tol = 1e-12 * (1.0 + t.abs());
    if let Some(k) = k_t0t {
        same_grid(k.grid(), sol.problem.grid())?;
        if (k.start() - sol.problem.t0()).abs() > tol || (k.end() - t).abs() > tol {
            return Err(Error::TimeMismatch {
                left_end: k.end(),
                right_start: t,
            });
        }
    }
    if let Some(k) = k_tt1 {
        same_grid(k.grid(), sol.problem.grid())?;
        if (k.start() - t).abs() > tol || (k.end() - sol.problem.t1()).abs() > tol {
            return Err(Error::TimeMismatch {
                left_end: t,
                right_start: k.start(),
            });
        }
    }
    Ok(())
}

/// Bridge density at `t` from caller-supplied kernels over `[t0, t]` and
/// `[t, t1]`. Pass `None` for a degenerate interval (`t == t0` or `t == t1`).
pub fn bridge_density(
    sol: &BridgeSolution,
    t: f64,
    k_t0t: Option<&TransitionKernel>,
    k_tt1: Option<&TransitionKernel>,
) -> Result<DensityField> {
    check_partition(sol, t, k_t0t, k_tt1)?;
    let log_phihat = match k_t0t {
        Some(k) => k.forward_log(&sol.log_phihat0),
        None if t == sol.problem.t0() => sol.log_phihat0.clone(),
        None => return Err(Error::TimeMismatch { left_end: sol.problem.t0(), right_start: t }),
    };
    let log_phi = match k_tt1 {
        Some(k) => k.backward_log(&sol.log_phi1),
        None if t == sol.problem.t1() => sol.log_phi1.clone(),
        None => return Err(Error::TimeMismatch { left_end: t, right_start: sol.problem.t1() }),
    };
    density_from_logs(sol.problem.grid(), &log_phi, &log_phihat, t)
}

/// Forward drift of the bridge at `t` from a caller-supplied kernel over `[t, t1]`.
pub fn bridge_drift(sol: &BridgeSolution, t: f64, k_tt1: Option<&TransitionKernel>) -> Result<ScalarField> {
    check_partition(sol, t, None, k_tt1)?;
    let log_phi = match k_tt1 {
        Some(k) => k.backward_log(&sol.log_phi1),
        None if t == sol.problem.t1() => sol.log_phi1.clone(),
        None => return Err(Error::TimeMismatch { left_end: t, right_start: sol.problem.t1() }),
    };
    sol.drift_from_log_phi(t, &log_phi)
}

/// The bridge from `rho1` to `rho0`: potentials swap roles. Needs a
/// reversible (symmetric) reference kernel.
pub fn time_reverse(sol: &BridgeSolution) -> Result<BridgeSolution> {
    let p = &sol.problem;
    if !p.kernel.is_symmetric(1e-12) {
        return Err(Error::AsymmetricKernel);
    }
    let problem = BridgeProblem {
        rho0: p.rho1.clone(),
        rho1: p.rho0.clone(),
        kernel: p.kernel.clone(),
        prior_drift: p.prior_drift.clone(),
    };
    let log_phi1 = sol.log_phihat0.clone();
    let log_phihat0 = sol.log_phi1.clone();
    let weights = p.grid().weights();
    let log_phi0 = problem.kernel.backward_log(&log_phi1);
    let log_phihat1 = problem.kernel.forward_log(&log_phihat0);
    let residual = weighted_l1(&log_phi0, &log_phihat0, problem.rho0.values(), &weights)
        .max(weighted_l1(&log_phi1, &log_phihat1, problem.rho1.values(), &weights));
    let mut out = BridgeSolution {
        problem,
        log_phi1,
        log_phihat0,
        iterations: sol.iterations,
        residual,
        history: sol.history.clone(),
        gauge_log: 0.0,
    };
    out.fix_gauge();
    Ok(out)
}

/// Solution of the one-marginal problem: the reference backward drift is
/// kept and the terminal law is replaced by the observed one.
#[derive(Clone)]
pub struct HalfBridge {
    backward_drift: Arc<dyn Drift>,
    terminal: DensityField,
    optimal_value: f64,
}

impl fmt::Debug for HalfBridge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HalfBridge")
            .field("optimal_value", &self.optimal_value)
            .finish_non_exhaustive()
    }
}

impl HalfBridge {
    pub fn backward_drift(&self) -> &Arc<dyn Drift> {
        &self.backward_drift
    }

    pub fn terminal(&self) -> &DensityField {
        &self.terminal
    }

    /// `H(Q*, P) = H(rho1, p(t1))`.
    pub fn optimal_value(&self) -> f64 {
        self.optimal_value
    }

    /// Reverse-time ensemble of the optimal model.
    pub fn sample(&self, sampler: &Sampler, times: &[f64]) -> Result<PathEnsemble> {
        sampler.backward(self.backward_drift.as_ref(), Initial::Density(&self.terminal), times)
    }
}

pub fn half_bridge(
    prior_backward_drift: Arc<dyn Drift>,
    rho1: &DensityField,
    prior_terminal: &DensityField,
) -> Result<HalfBridge> {
    let optimal_value = match kl_divergence(rho1, prior_terminal) {
        Ok(v) if v.is_finite() => v,
        Ok(_) | Err(Error::SupportViolation { .. }) => return Err(Error::InfiniteEntropy),
        Err(e) => return Err(e),
    };
    Ok(HalfBridge {
        backward_drift: prior_backward_drift,
        terminal: rho1.clone(),
        optimal_value,
    })
}

/// `∫ rho dx` for each of `n + 1` equispaced times, a quick factorization check.
pub fn mass_profile(sol: &BridgeSolution, n: usize) -> Result<Vec<(f64, f64)>> {
    let (t0, t1) = (sol.problem.t0(), sol.problem.t1());
    (0..=n)
        .map(|k| {
            let t = if k == n { t1 } else { t0 + (t1 - t0) * k as f64 / n as f64 };
            Ok((t, integrate(sol.density_at(t)?.as_scalar())))
        })
        .collect()
}
