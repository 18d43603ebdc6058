//! Time-dependent Schrödinger equation on a Dirichlet box, Nelson drifts,
//! the quantum bridge and the collapse of the wavefunction.
//!
//! The wave equation is
//!
//! ```text
//! dpsi/dt = (i hbar / 2m) Δpsi - (i / hbar) V psi
//! ```
//!
//! discretized with the three-point Laplacian on interior points and stepped
//! with the Cayley (Crank-Nicolson) map, which is unitary and exactly
//! reversible. Wall values are held at zero.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::sde::{uniform_times, FieldDrift};
use crate::grid::{
    first_difference, gradient, gradient_complex, normalize, same_grid, ComplexField, DensityField, Grid1D, ScalarField,
};

/// Points with `|psi|^2` at or below this fraction of the peak count as nodes.
pub const NODE_FLOOR: f64 = 1e-12;
/// Largest probability tolerated in the wall bands before reflections matter.
pub const BOUNDARY_MASS_LIMIT: f64 = 1e-10;
/// Fraction of grid points at each end that make up a wall band.
pub const BOUNDARY_BAND: f64 = 0.02;
/// Tolerance on the unit norm of every stored state.
pub const NORM_TOLERANCE: f64 = 1e-8;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantumModel {
    hbar: f64,
    m: f64,
    potential: ScalarField,
}

impl QuantumModel {
    pub fn new(hbar: f64, m: f64, potential: ScalarField) -> Result<Self> {
        for (name, v) in [("hbar", hbar), ("m", m)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be positive, got {v}"),
                });
            }
        }
        Ok(Self { hbar, m, potential })
    }

    pub fn free(grid: Grid1D, hbar: f64, m: f64) -> Result<Self> {
        Self::new(hbar, m, ScalarField::constant(grid, 0.0))
    }

    /// `V(x) = m omega^2 x^2 / 2`.
    pub fn harmonic(grid: Grid1D, hbar: f64, m: f64, omega: f64) -> Result<Self> {
        Self::new(hbar, m, grid.sample(|x| 0.5 * m * omega * omega * x * x))
    }

    pub fn grid(&self) -> &Grid1D {
        self.potential.grid()
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn mass(&self) -> f64 {
        self.m
    }

    pub fn potential(&self) -> &ScalarField {
        &self.potential
    }

    /// Diffusion coefficient `hbar / m` of the Nelson process.
    pub fn sigma2(&self) -> f64 {
        self.hbar / self.m
    }

    /// `H psi = -(hbar^2 / 2m) Δpsi + V psi` with the same Dirichlet
    /// Laplacian the stepper uses.
    pub fn hamiltonian(&self, psi: &ComplexField) -> Result<ComplexField> {
        same_grid(psi.grid(), self.grid())?;
        let g = self.grid();
        let n = g.len();
        let h2 = g.spacing() * g.spacing();
        let k = self.hbar * self.hbar / (2.0 * self.m * h2);
        let v = psi.values();
        let mut out = vec![Complex64::new(0.0, 0.0); n];
        for i in 1..n - 1 {
            out[i] = -(v[i + 1] - v[i] * 2.0 + v[i - 1]) * k + v[i] * self.potential.values()[i];
        }
        ComplexField::new(*g, out)
    }

    /// `<psi, H psi> / <psi, psi>`.
    pub fn energy(&self, psi: &ComplexField) -> Result<f64> {
        Ok(psi.inner(&self.hamiltonian(psi)?)?.re / psi.norm_sq())
    }
}

/// Gaussian packet `exp(-(x - x0)^2 / (4 s^2) + i k x)`, zeroed on the walls
/// and normalized on the grid, so `|psi|^2` is close to `N(x0, s^2)`.
pub fn wave_packet(grid: Grid1D, center: f64, width: f64, wavenumber: f64) -> Result<ComplexField> {
    if !(width > 0.0) {
        return Err(Error::InvalidParameter {
            name: "width",
            reason: format!("must be positive, got {width}"),
        });
    }
    let n = grid.len();
    let mut psi = grid.sample_complex(|x| {
        Complex64::from_polar((-(x - center).powi(2) / (4.0 * width * width)).exp(), wavenumber * x)
    });
    psi.values_mut()[0] = Complex64::new(0.0, 0.0);
    psi.values_mut()[n - 1] = Complex64::new(0.0, 0.0);
    psi.normalized()
}

/// Probability in the wall bands.
pub fn boundary_mass(psi: &ComplexField) -> f64 {
    let g = psi.grid();
    let n = g.len();
    let band = ((BOUNDARY_BAND * n as f64).ceil() as usize).max(2).min(n / 2);
    let v = psi.values();
    (0..band).chain(n - band..n).map(|i| g.weight(i) * v[i].norm_sqr()).sum()
}

/// Prefactored Cayley step `(I - A dt/2) psi' = (I + A dt/2) psi`.
#[derive(Debug, Clone)]
pub struct CrankNicolson {
    dt: f64,
    /// Off-diagonal of the right-hand matrix; the left one is its negative.
    off_rhs: Complex64,
    diag_rhs: Vec<Complex64>,
    c_prime: Vec<Complex64>,
    denom: Vec<Complex64>,
}

impl CrankNicolson {
    pub fn new(model: &QuantumModel, dt: f64) -> Result<Self> {
        if !(dt.abs() > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidParameter {
                name: "dt",
                reason: format!("must be nonzero and finite, got {dt}"),
            });
        }
        let g = model.grid();
        let n = g.len();
        let h2 = g.spacing() * g.spacing();
        let hbar = model.hbar;
        let kin = hbar / (2.0 * model.m * h2);
        // A psi_i = i kin (psi_{i+1} - 2 psi_i + psi_{i-1}) - (i / hbar) V_i psi_i
        let a_off = I * kin;
        let a_diag: Vec<Complex64> = (1..n - 1)
            .map(|i| -I * (2.0 * kin + model.potential.values()[i] / hbar))
            .collect();
        let half = 0.5 * dt;
        let off_lhs = -a_off * half;
        let diag_lhs: Vec<Complex64> = a_diag.iter().map(|a| 1.0 - a * half).collect();
        let diag_rhs: Vec<Complex64> = a_diag.iter().map(|a| 1.0 + a * half).collect();
        let m = diag_lhs.len();
        let mut c_prime = Vec::with_capacity(m);
        let mut denom = Vec::with_capacity(m);
        for row in 0..m {
            let d = if row == 0 {
                diag_lhs[0]
            } else {
                diag_lhs[row] - off_lhs * c_prime[row - 1]
            };
            if !(d.norm() > f64::MIN_POSITIVE) {
                return Err(Error::SingularSolve { row: row + 1 });
            }
            denom.push(d);
            c_prime.push(off_lhs / d);
        }
        Ok(Self {
            dt,
            off_rhs: a_off * half,
            diag_rhs,
            c_prime,
            denom,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Advance by `dt` in place. Wall values are set to zero.
    pub fn step_in_place(&self, psi: &mut [Complex64]) {
        let n = psi.len();
        let m = n - 2;
        let off_lhs = -self.off_rhs;
        // Right-hand side, then forward sweep, reusing one buffer.
        let mut d = Vec::with_capacity(m);
        for r in 0..m {
            let i = r + 1;
            let mut v = self.diag_rhs[r] * psi[i];
            if i > 1 {
                v += self.off_rhs * psi[i - 1];
            }
            if i < n - 2 {
                v += self.off_rhs * psi[i + 1];
            }
            d.push(v);
        }
        d[0] /= self.denom[0];
        for r in 1..m {
            d[r] = (d[r] - off_lhs * d[r - 1]) / self.denom[r];
        }
        for r in (0..m - 1).rev() {
            d[r] = d[r] - self.c_prime[r] * d[r + 1];
        }
        psi[0] = Complex64::new(0.0, 0.0);
        psi[n - 1] = Complex64::new(0.0, 0.0);
        psi[1..n - 1].copy_from_slice(&d);
    }
}

/// One Crank-Nicolson step; negative `dt` runs the equation backward.
pub fn crank_nicolson_step(psi: &ComplexField, model: &QuantumModel, dt: f64) -> Result<ComplexField> {
    same_grid(psi.grid(), model.grid())?;
    let stepper = CrankNicolson::new(model, dt)?;
    let mut out = psi.clone();
    stepper.step_in_place(out.values_mut());
    Ok(out)
}

/// States at increasing times under one model.
#[derive(Debug, Clone, Serialize)]
pub struct WavefunctionPath {
    times: Vec<f64>,
    #[serde(skip)]
    states: Vec<ComplexField>,
    model: QuantumModel,
    max_boundary_mass: f64,
}

impl WavefunctionPath {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[ComplexField] {
        &self.states
    }

    pub fn model(&self) -> &QuantumModel {
        &self.model
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn first(&self) -> &ComplexField {
        &self.states[0]
    }

    pub fn last(&self) -> &ComplexField {
        self.states.last().expect("paths hold at least one state")
    }

    /// Largest wall-band probability seen along the path.
    pub fn max_boundary_mass(&self) -> f64 {
        self.max_boundary_mass
    }

    pub fn time_index(&self, t: f64) -> Result<usize> {
        let tol = 1e-9 * (1.0 + t.abs());
        self.times
            .iter()
            .position(|&s| (s - t).abs() <= tol)
            .ok_or(Error::TimeNotStored { t })
    }

    pub fn state_at(&self, t: f64) -> Result<&ComplexField> {
        Ok(&self.states[self.time_index(t)?])
    }

    pub fn density(&self, k: usize) -> Result<DensityField> {
        normalize(&self.states[k].modulus_sq())
    }

    pub fn norms(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.norm()).collect()
    }

    /// Largest pointwise `|a - b|` over all stored times.
    pub fn max_abs_diff(&self, other: &WavefunctionPath) -> Result<f64> {
        if self.times.len() != other.times.len() {
            return Err(Error::LengthMismatch {
                expected: self.times.len(),
                got: other.times.len(),
            });
        }
        let mut worst: f64 = 0.0;
        for (a, b) in self.states.iter().zip(&other.states) {
            worst = worst.max(a.max_abs_diff(b)?);
        }
        Ok(worst)
    }

    /// Time step if the stored times are equispaced.
    fn uniform_step(&self) -> Result<f64> {
        let n = self.times.len();
        if n < 2 {
            return Err(Error::InvalidParameter {
                name: "path",
                reason: "needs at least two stored times".into(),
            });
        }
        let dt = (self.times[n - 1] - self.times[0]) / (n - 1) as f64;
        if self.times.windows(2).any(|w| ((w[1] - w[0]) - dt).abs() > 1e-9 * dt.abs()) {
            return Err(Error::InvalidParameter {
                name: "path",
                reason: "stored times are not equispaced".into(),
            });
        }
        Ok(dt)
    }
}

fn check_unit_norm(psi: &ComplexField) -> Result<()> {
    let norm = psi.norm();
    if (norm - 1.0).abs() > NORM_TOLERANCE {
        return Err(Error::InvalidParameter {
            name: "psi",
            reason: format!("state must have unit norm, got {norm}"),
        });
    }
    Ok(())
}

/// Propagate from `t_from` to `t_to` (either order) in `n_steps` equal steps,
/// storing every state. A zero-length interval returns the input alone.
pub fn evolve(psi: &ComplexField, model: &QuantumModel, t_from: f64, t_to: f64, n_steps: usize) -> Result<WavefunctionPath> {
    same_grid(psi.grid(), model.grid())?;
    check_unit_norm(psi)?;
    if n_steps == 0 {
        return Err(Error::InvalidParameter {
            name: "n_steps",
            reason: "must be at least 1".into(),
        });
    }
    if !t_from.is_finite() || !t_to.is_finite() {
        return Err(Error::InvalidInterval { s: t_from, t: t_to });
    }
    if t_from == t_to {
        return Ok(WavefunctionPath {
            times: vec![t_from],
            states: vec![psi.clone()],
            model: model.clone(),
            max_boundary_mass: boundary_mass(psi),
        });
    }
    let dt = (t_to - t_from) / n_steps as f64;
    let stepper = CrankNicolson::new(model, dt)?;
    let mut states = Vec::with_capacity(n_steps + 1);
    let mut current = psi.clone();
    let mut max_boundary = boundary_mass(&current);
    states.push(current.clone());
    for k in 1..=n_steps {
        stepper.step_in_place(current.values_mut());
        let b = boundary_mass(&current);
        if b > BOUNDARY_MASS_LIMIT && max_boundary <= BOUNDARY_MASS_LIMIT {
            log::warn!("wall band holds {b:e} of the probability at step {k}; widen the domain");
        }
        max_boundary = max_boundary.max(b);
        states.push(current.clone());
    }
    if dt < 0.0 {
        states.reverse();
    }
    Ok(WavefunctionPath {
        times: uniform_times(t_from.min(t_to), t_from.max(t_to), n_steps),
        states,
        model: model.clone(),
        max_boundary_mass: max_boundary,
    })
}

/// Nelson drifts of one state. Points flagged in `mask` (false) are nodes or
/// next to one; every drift is set to zero there.
#[derive(Debug, Clone, Serialize)]
pub struct DriftDecomposition {
    pub v: ScalarField,
    pub u: ScalarField,
    pub beta: ScalarField,
    pub gamma: ScalarField,
    pub vq_re: ScalarField,
    pub vq_im: ScalarField,
    pub mask: Vec<bool>,
}

impl DriftDecomposition {
    pub fn masked_count(&self) -> usize {
        self.mask.iter().filter(|ok| !**ok).count()
    }
}

/// True where `|psi|^2` and both neighbours clear the node floor.
pub fn node_mask(rho: &[f64]) -> Vec<bool> {
    let floor = NODE_FLOOR * rho.iter().cloned().fold(0.0, f64::max);
    let n = rho.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(n - 1);
            (lo..=hi).all(|j| rho[j] > floor)
        })
        .collect()
}

fn log_density(rho: &[f64], g: Grid1D) -> ScalarField {
    ScalarField::new(g, rho.iter().map(|v| v.max(f64::MIN_POSITIVE).ln()).collect())
        .expect("log of a clamped density is finite")
}

/// `u = (hbar / 2m) ∇ln rho`, `v = (hbar / m) Im(∇psi / psi)`, computed
/// without extracting a phase.
pub fn drifts(psi: &ComplexField, model: &QuantumModel) -> Result<DriftDecomposition> {
    same_grid(psi.grid(), model.grid())?;
    let g = *psi.grid();
    let rho = psi.modulus_sq();
    let mask = node_mask(rho.values());
    let score = gradient(&log_density(rho.values(), g));
    let dpsi = gradient_complex(psi);
    let c = model.hbar / model.m;
    let n = g.len();
    let mut u = vec![0.0; n];
    let mut v = vec![0.0; n];
    for i in 0..n {
        if mask[i] {
            u[i] = 0.5 * c * score.values()[i];
            v[i] = c * (dpsi.values()[i] / psi.values()[i]).im;
        }
    }
    let field = |values: Vec<f64>| ScalarField::new(g, values);
    let beta = field(v.iter().zip(&u).map(|(a, b)| a + b).collect())?;
    let gamma = field(v.iter().zip(&u).map(|(a, b)| a - b).collect())?;
    let vq_im = field(u.iter().map(|b| -b).collect())?;
    let v = field(v)?;
    let u = field(u)?;
    Ok(DriftDecomposition {
        vq_re: v.clone(),
        vq_im,
        v,
        u,
        beta,
        gamma,
        mask,
    })
}

/// Nelson's forward drift written as `(hbar / m) ∇(Re ln psi + Im ln psi)`,
/// with `∇Re ln psi = ∇ln|psi|` and `∇Im ln psi = Im(∇psi / psi)`.
pub fn nelson_drift(psi: &ComplexField, model: &QuantumModel) -> Result<ScalarField> {
    same_grid(psi.grid(), model.grid())?;
    let g = *psi.grid();
    let rho = psi.modulus_sq();
    let mask = node_mask(rho.values());
    let log_modulus = ScalarField::new(g, rho.values().iter().map(|v| 0.5 * v.max(f64::MIN_POSITIVE).ln()).collect())?;
    let re = gradient(&log_modulus);
    let dpsi = gradient_complex(psi);
    let c = model.hbar / model.m;
    let values = (0..g.len())
        .map(|i| {
            if mask[i] {
                c * (re.values()[i] + (dpsi.values()[i] / psi.values()[i]).im)
            } else {
                0.0
            }
        })
        .collect();
    ScalarField::new(g, values)
}

/// Forward (`beta`) and backward (`gamma`) Nelson drifts at every stored
/// time of `path`, plus the total number of masked grid points.
pub fn drift_fields(path: &WavefunctionPath) -> Result<(FieldDrift, FieldDrift, usize)> {
    let mut betas = Vec::with_capacity(path.len());
    let mut gammas = Vec::with_capacity(path.len());
    let mut masked = 0;
    for s in &path.states {
        let d = drifts(s, &path.model)?;
        masked += d.masked_count();
        betas.push(d.beta);
        gammas.push(d.gamma);
    }
    Ok((
        FieldDrift::new(path.times.clone(), betas)?,
        FieldDrift::new(path.times.clone(), gammas)?,
        masked,
    ))
}

/// Replace the terminal amplitude by `sqrt(rho1)` keeping the phase, then
/// solve the same equation backward over the times of `path`.
pub fn quantum_bridge(path: &WavefunctionPath, rho1: &DensityField) -> Result<WavefunctionPath> {
    let model = path.model();
    same_grid(rho1.grid(), model.grid())?;
    let mass = rho1.mass();
    if (mass - 1.0).abs() > NORM_TOLERANCE {
        return Err(Error::InvalidParameter {
            name: "rho1",
            reason: format!("target density has mass {mass}"),
        });
    }
    let terminal = bridge_terminal(path.last(), rho1)?;
    if path.len() == 1 {
        return Ok(WavefunctionPath {
            times: path.times.clone(),
            states: vec![terminal.clone()],
            model: model.clone(),
            max_boundary_mass: boundary_mass(&terminal),
        });
    }
    let dt = path.uniform_step()?;
    let stepper = CrankNicolson::new(model, -dt)?;
    let n = path.len();
    let mut states = Vec::with_capacity(n);
    let mut current = terminal;
    let mut max_boundary = boundary_mass(&current);
    states.push(current.clone());
    for _ in 1..n {
        stepper.step_in_place(current.values_mut());
        max_boundary = max_boundary.max(boundary_mass(&current));
        states.push(current.clone());
    }
    states.reverse();
    Ok(WavefunctionPath {
        times: path.times.clone(),
        states,
        model: model.clone(),
        max_boundary_mass: max_boundary,
    })
}

/// `sqrt(rho1 / |psi|^2) psi`, zero where `psi` vanishes.
fn bridge_terminal(psi: &ComplexField, rho1: &DensityField) -> Result<ComplexField> {
    let g = *psi.grid();
    let rho = psi.modulus_sq();
    // A small but resolved |psi|^2 is fine; only a target that would need
    // the amplitude rescaled by more than 1e6 counts as outside the support.
    let floor1 = NODE_FLOOR * rho1.max();
    let mut out = Vec::with_capacity(g.len());
    for i in 0..g.len() {
        let (r, r1) = (rho.values()[i], rho1.values()[i]);
        if r1 > floor1 && !(r > NODE_FLOOR * r1) {
            return Err(Error::SupportViolation { x: g.x(i) });
        }
        out.push(if r > 0.0 { psi.values()[i] * (r1 / r).sqrt() } else { Complex64::new(0.0, 0.0) });
    }
    ComplexField::new(g, out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HjbReport {
    /// `sqrt(Σ dt dx |R|^2)` over the evaluation set. Far-tail points,
    /// where `psi` is tiny and difference errors are largest, dominate it.
    pub l2: f64,
    /// Same norm with each point weighted by `|psi|^2`, the measure under
    /// which the Nelson process actually visits the grid.
    pub weighted_l2: f64,
    pub max_abs: f64,
    /// `max |phi(t1) - ln(rho1 / rho) / 2|`.
    pub terminal_error: f64,
    pub evaluated: usize,
    pub masked: usize,
}

/// Discrete residual of the equation satisfied by `phi = ln(psi~ / psi)`:
///
/// ```text
/// dphi/dt + v_q ∇phi - (i hbar / 2m) Δphi - (i hbar / 2m) ∇phi·∇phi = 0
/// ```
///
/// with `v_q = -i (hbar / m) ∇psi / psi`. Differences of `phi` are taken as
/// logarithms of local ratios, so no branch of the complex log is ever
/// chosen globally.
pub fn hjb_residual(path: &WavefunctionPath, tilde: &WavefunctionPath) -> Result<HjbReport> {
    let model = path.model();
    same_grid(model.grid(), tilde.model().grid())?;
    if path.times.len() != tilde.times.len() || path.times.iter().zip(&tilde.times).any(|(a, b)| a != b) {
        return Err(Error::InvalidParameter {
            name: "tilde",
            reason: "paths must share their time grid".into(),
        });
    }
    let g = *model.grid();
    let n = g.len();
    let h = g.spacing();
    let k_len = path.len();
    let c = model.hbar / (2.0 * model.m);
    let ratio = |k: usize| -> Vec<Complex64> {
        path.states[k]
            .values()
            .iter()
            .zip(tilde.states[k].values())
            .map(|(a, b)| b / a)
            .collect()
    };
    let valid = |k: usize| -> Vec<bool> {
        let a = node_mask(path.states[k].modulus_sq().values());
        let b = node_mask(tilde.states[k].modulus_sq().values());
        a.iter().zip(&b).map(|(x, y)| *x && *y).collect()
    };

    // Terminal condition.
    let last = k_len - 1;
    let r_last = ratio(last);
    let v_last = valid(last);
    let mut terminal_error: f64 = 0.0;
    for i in 0..n {
        if v_last[i] {
            let rho = path.states[last].values()[i].norm_sqr();
            let rho1 = tilde.states[last].values()[i].norm_sqr();
            let expected = 0.5 * (rho1 / rho).ln();
            terminal_error = terminal_error.max((r_last[i].ln() - expected).norm());
        }
    }

    let mut sum = 0.0;
    let mut weighted = 0.0;
    let mut max_abs: f64 = 0.0;
    let mut evaluated = 0;
    let mut masked = 0;
    if k_len >= 3 {
        let dt = path.uniform_step()?;
        let mut prev = (ratio(0), valid(0));
        let mut cur = (ratio(1), valid(1));
        for k in 1..k_len - 1 {
            let next = (ratio(k + 1), valid(k + 1));
            let psi = path.states[k].values();
            let dpsi = first_difference(psi, h);
            let r = &cur.0;
            for i in 1..n - 1 {
                if !(cur.1[i] && prev.1[i] && next.1[i]) {
                    masked += 1;
                    continue;
                }
                let phi_t = (next.0[i] / prev.0[i]).ln() / (2.0 * dt);
                let phi_x = (r[i + 1] / r[i - 1]).ln() / (2.0 * h);
                let phi_xx = ((r[i + 1] / r[i]).ln() - (r[i] / r[i - 1]).ln()) / (h * h);
                let vq = -I * 2.0 * c * dpsi[i] / psi[i];
                let res = phi_t + vq * phi_x - I * c * phi_xx - I * c * phi_x * phi_x;
                let a2 = res.norm_sqr();
                sum += a2;
                weighted += a2 * psi[i].norm_sqr();
                max_abs = max_abs.max(a2.sqrt());
                evaluated += 1;
            }
            prev = cur;
            cur = next;
        }
        let cell = dt.abs() * h;
        sum *= cell;
        weighted *= cell;
    }
    Ok(HjbReport {
        l2: sum.sqrt(),
        weighted_l2: weighted.sqrt(),
        max_abs,
        terminal_error,
        evaluated,
        masked,
    })
}

/// Finite union of closed intervals; infinite ends are allowed.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct Region {
    intervals: Vec<(f64, f64)>,
}

impl Region {
    pub fn new(intervals: Vec<(f64, f64)>) -> Result<Self> {
        if intervals.is_empty() {
            return Err(Error::InvalidParameter {
                name: "region",
                reason: "needs at least one interval".into(),
            });
        }
        if let Some((a, b)) = intervals.iter().find(|(a, b)| !(a < b) || a.is_nan() || b.is_nan()) {
            return Err(Error::InvalidParameter {
                name: "region",
                reason: format!("interval [{a}, {b}] is empty"),
            });
        }
        Ok(Self { intervals })
    }

    pub fn interval(a: f64, b: f64) -> Result<Self> {
        Self::new(vec![(a, b)])
    }

    pub fn everywhere() -> Self {
        Self {
            intervals: vec![(f64::NEG_INFINITY, f64::INFINITY)],
        }
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    pub fn contains(&self, x: f64) -> bool {
        self.intervals.iter().any(|&(a, b)| a <= x && x <= b)
    }
}

/// Restrict `psi` to `region` and renormalize. Returns the new state and the
/// probability `p1` of the region, the grid sum of `|psi|^2` over the points
/// inside it.
pub fn collapse(psi: &ComplexField, region: &Region) -> Result<(ComplexField, f64)> {
    let g = *psi.grid();
    let mut restricted = psi.clone();
    for (i, v) in restricted.values_mut().iter_mut().enumerate() {
        if !region.contains(g.x(i)) {
            *v = Complex64::new(0.0, 0.0);
        }
    }
    let p1 = restricted.norm_sq() / psi.norm_sq();
    if !(p1 > 0.0) {
        return Err(Error::ZeroProbabilityRegion);
    }
    let out = restricted.normalized()?;
    Ok((out, p1))
}

/// Post-measurement density `χ_D |psi|^2 / p1`.
pub fn collapsed_density(psi: &ComplexField, region: &Region) -> Result<DensityField> {
    let (state, _) = collapse(psi, region)?;
    DensityField::from_unnormalized(*psi.grid(), state.modulus_sq().into_values())
}

/// `‖∇psi‖²`.
pub fn gradient_norm_sq(psi: &ComplexField) -> f64 {
    gradient_complex(psi).norm_sq()
}

/// Trapezoid rule in time of `‖∇psi(t)‖²` along the path.
pub fn finite_action(path: &WavefunctionPath) -> f64 {
    let g: Vec<f64> = path.states.iter().map(gradient_norm_sq).collect();
    path.times
        .windows(2)
        .zip(g.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sde::duality_check;
    use approx::assert_abs_diff_eq;
    use statrs::function::erf::erf;

    fn free_setup(n: usize, half_width: f64) -> (QuantumModel, ComplexField) {
        let g = Grid1D::new(-half_width, half_width, n).unwrap();
        (QuantumModel::free(g, 1.0, 1.0).unwrap(), wave_packet(g, 0.0, 1.0, 0.0).unwrap())
    }

    #[test]
    fn step_preserves_norm_and_reverses() {
        let g = Grid1D::new(-10.0, 10.0, 401).unwrap();
        let model = QuantumModel::harmonic(g, 1.0, 1.0, 0.7).unwrap();
        let psi = wave_packet(g, 0.5, 0.8, 1.5).unwrap();
        let fwd = crank_nicolson_step(&psi, &model, 0.01).unwrap();
        assert!((fwd.norm() - psi.norm()).abs() < 1e-12);
        let back = crank_nicolson_step(&fwd, &model, -0.01).unwrap();
        assert!(back.max_abs_diff(&psi).unwrap() < 1e-12);
        assert!(CrankNicolson::new(&model, 0.0).is_err());
    }

    #[test]
    fn free_packet_spreads_by_the_closed_form() {
        let (model, psi) = free_setup(401, 10.0);
        let path = evolve(&psi, &model, 0.0, 1.0, 400).unwrap();
        let width2 = path.density(400).unwrap().variance();
        let exact = 1.0 + (1.0f64 / 2.0).powi(2);
        assert_abs_diff_eq!(exact, 1.25, epsilon = 0.0);
        assert!((width2 - exact).abs() < 1e-3, "{width2}");
        for norm in path.norms() {
            assert!((norm - 1.0).abs() < 1e-8);
        }
        assert!(path.max_boundary_mass() < BOUNDARY_MASS_LIMIT);
    }

    #[test]
    fn box_mode_picks_up_its_phase() {
        let l = std::f64::consts::PI;
        let g = Grid1D::new(0.0, l, 401).unwrap();
        let model = QuantumModel::free(g, 1.0, 1.0).unwrap();
        let k = 2.0;
        let mode = g.sample_complex(|x| Complex64::new((2.0 / l).sqrt() * (k * x).sin(), 0.0));
        let psi = mode.normalized().unwrap();
        let t = 1.0;
        let path = evolve(&psi, &model, 0.0, t, 1000).unwrap();
        let e = k * k / 2.0;
        let analytic = psi.scaled(Complex64::from_polar(1.0, -e * t));
        let overlap = analytic.inner(path.last()).unwrap();
        assert!(overlap.norm() > 1.0 - 1e-6);
        // The phase itself agrees to the dispersion error of the grid.
        assert!((overlap.arg()).abs() < 1e-4, "{}", overlap.arg());
        // ‖∇psi‖² = k² for the sine mode.
        assert!((gradient_norm_sq(&psi) - k * k).abs() < 1e-3);
    }

    #[test]
    fn zero_duration_and_round_trip() {
        let (model, psi) = free_setup(201, 10.0);
        let same = evolve(&psi, &model, 0.3, 0.3, 5).unwrap();
        assert_eq!(same.len(), 1);
        assert_eq!(same.last(), &psi);
        let fwd = evolve(&psi, &model, 0.0, 0.7, 70).unwrap();
        let back = evolve(fwd.last(), &model, 0.7, 0.0, 70).unwrap();
        assert_eq!(back.times(), fwd.times());
        assert!(back.first().max_abs_diff(&psi).unwrap() < 1e-10);
        assert!(evolve(&psi, &model, 0.0, 1.0, 0).is_err());
        assert!(evolve(&psi.scaled(Complex64::new(2.0, 0.0)), &model, 0.0, 1.0, 5).is_err());
    }

    #[test]
    fn energy_is_conserved_in_a_trap() {
        let g = Grid1D::new(-10.0, 10.0, 401).unwrap();
        let model = QuantumModel::harmonic(g, 1.0, 1.0, 1.0).unwrap();
        let psi = wave_packet(g, 1.5, 0.6, 0.5).unwrap();
        let path = evolve(&psi, &model, 0.0, 3.0, 300).unwrap();
        let e0 = model.energy(path.first()).unwrap();
        for s in path.states() {
            assert!(((model.energy(s).unwrap() - e0) / e0).abs() < 1e-6);
        }
    }

    #[test]
    fn gaussian_drifts_match_hand_derivatives() {
        let (model, psi) = free_setup(401, 10.0);
        let d = drifts(&psi, &model).unwrap();
        let g = model.grid();
        for i in 0..g.len() {
            let x = g.x(i);
            if x.abs() < 4.0 {
                assert!(d.v.values()[i].abs() < 1e-12);
                // u = -hbar x / (2 m s^2), exact for a quadratic log-density
                // up to the wall truncation of the normalization.
                assert_abs_diff_eq!(d.u.values()[i], -x / 2.0, epsilon = 1e-9);
                assert_eq!(d.beta.values()[i], d.v.values()[i] + d.u.values()[i]);
                assert_eq!(d.gamma.values()[i], d.v.values()[i] - d.u.values()[i]);
                assert_eq!(d.vq_im.values()[i], -d.u.values()[i]);
            }
        }
    }

    #[test]
    fn plane_wave_has_constant_current() {
        let g = Grid1D::new(-20.0, 20.0, 2001).unwrap();
        let model = QuantumModel::free(g, 1.0, 2.0).unwrap();
        let k = 1.3;
        let psi = g
            .sample_complex(|x| Complex64::from_polar((-(x / 12.0).powi(8)).exp(), k * x))
            .normalized()
            .unwrap();
        let d = drifts(&psi, &model).unwrap();
        for i in 0..g.len() {
            if g.x(i).abs() < 5.0 {
                // Central differences of e^{ikx} give sin(kh)/h.
                assert!((d.v.values()[i] - k / 2.0).abs() < 1e-3);
                assert!(d.u.values()[i].abs() < 1e-3);
            }
        }
    }

    #[test]
    fn nelson_identity_and_duality() {
        let g = Grid1D::new(-10.0, 10.0, 401).unwrap();
        let model = QuantumModel::harmonic(g, 1.0, 1.0, 0.5).unwrap();
        let psi0 = wave_packet(g, -1.0, 0.9, 2.0).unwrap();
        let psi = evolve(&psi0, &model, 0.0, 0.8, 80).unwrap().last().clone();
        let d = drifts(&psi, &model).unwrap();
        let eq_n = nelson_drift(&psi, &model).unwrap();
        let rho = psi.modulus_sq();
        let cut = 1e-6 * rho.max_abs();
        let dpsi = gradient_complex(&psi);
        for i in 0..g.len() {
            if rho.values()[i] > cut {
                assert!((eq_n.values()[i] - d.beta.values()[i]).abs() < 1e-10);
                let v = model.sigma2() * (dpsi.values()[i] / psi.values()[i]).im;
                assert!((d.vq_re.values()[i] - v).abs() < 1e-10);
            }
        }
        let density = DensityField::from_unnormalized(g, rho.into_values()).unwrap();
        let beta = FieldDrift::stationary(d.beta.clone());
        let gamma = FieldDrift::stationary(d.gamma.clone());
        assert!(duality_check(&beta, &gamma, &density, 0.0, model.sigma2()) < 1e-10);
    }

    #[test]
    fn nodes_are_masked() {
        let g = Grid1D::new(0.0, 1.0, 101).unwrap();
        let model = QuantumModel::free(g, 1.0, 1.0).unwrap();
        // Second box mode has a node at x = 1/2 as well as the walls.
        let psi = g
            .sample_complex(|x| Complex64::new((2.0 * std::f64::consts::PI * x).sin(), 0.0))
            .normalized()
            .unwrap();
        let d = drifts(&psi, &model).unwrap();
        assert!(!d.mask[0] && !d.mask[100]);
        assert!(!d.mask[49] && !d.mask[50] && !d.mask[51]);
        assert!(d.mask[25]);
        assert!(d.beta.values().iter().all(|v| v.is_finite()));
        assert_eq!(d.masked_count(), 7);
    }

    #[test]
    fn bridge_to_own_marginal_is_identity() {
        let (model, psi) = free_setup(401, 10.0);
        let path = evolve(&psi, &model, 0.0, 1.0, 200).unwrap();
        let rho1 = path.density(200).unwrap();
        let tilde = quantum_bridge(&path, &rho1).unwrap();
        assert!(tilde.last().max_abs_diff(path.last()).unwrap() < 1e-12);
        assert!(tilde.max_abs_diff(&path).unwrap() < 1e-10);
        let report = hjb_residual(&path, &tilde).unwrap();
        assert!(report.weighted_l2 < 1e-12 && report.terminal_error < 1e-12, "{report:?}");
    }

    #[test]
    fn bridge_is_unitary_and_idempotent() {
        let (model, psi) = free_setup(401, 10.0);
        let path = evolve(&psi, &model, 0.0, 1.0, 200).unwrap();
        let target = DensityField::gaussian(*model.grid(), 0.5, 1.0).unwrap();
        let tilde = quantum_bridge(&path, &target).unwrap();
        for norm in tilde.norms() {
            assert!((norm - 1.0).abs() < 1e-8);
        }
        let again = quantum_bridge(&tilde, &tilde.density(tilde.len() - 1).unwrap()).unwrap();
        assert!(again.max_abs_diff(&tilde).unwrap() < 1e-10);
        let report = hjb_residual(&path, &tilde).unwrap();
        assert!(report.terminal_error < 1e-12, "{report:?}");
    }

    #[test]
    fn bridge_rejects_unreachable_target() {
        let g = Grid1D::new(-10.0, 10.0, 201).unwrap();
        let model = QuantumModel::free(g, 1.0, 1.0).unwrap();
        let psi = wave_packet(g, -3.0, 0.3, 0.0).unwrap();
        let path = evolve(&psi, &model, 0.0, 0.01, 2).unwrap();
        let target = DensityField::gaussian(g, 5.0, 0.3).unwrap();
        assert!(matches!(quantum_bridge(&path, &target), Err(Error::SupportViolation { .. })));
    }

    #[test]
    fn hjb_residual_converges_at_second_order() {
        let run = |n: usize, steps: usize| {
            let (model, psi) = free_setup(n, 12.0);
            let path = evolve(&psi, &model, 0.0, 1.0, steps).unwrap();
            let target = DensityField::gaussian(*model.grid(), 0.5, 1.0).unwrap();
            let tilde = quantum_bridge(&path, &target).unwrap();
            hjb_residual(&path, &tilde).unwrap()
        };
        let coarse = run(401, 400);
        let fine = run(801, 800);
        let order = (coarse.weighted_l2 / fine.weighted_l2).log2();
        assert!(coarse.weighted_l2 < 1e-3, "{coarse:?}");
        assert!(order >= 1.8, "order {order}: {coarse:?} {fine:?}");
    }

    fn symmetric_grid() -> Grid1D {
        // Even point count with h = 0.005: ±1 and 0 fall on cell midpoints.
        Grid1D::new(-7.9975, 7.9975, 3200).unwrap()
    }

    #[test]
    fn collapse_on_unit_interval() {
        let g = symmetric_grid();
        let psi = wave_packet(g, 0.0, 1.0, 0.0).unwrap();
        let (state, p1) = collapse(&psi, &Region::interval(-1.0, 1.0).unwrap()).unwrap();
        let exact = erf(1.0 / 2f64.sqrt());
        assert_abs_diff_eq!(exact, 0.682_689, epsilon = 1e-6);
        assert!((p1 - exact).abs() < 1e-6, "{p1}");
        assert!((state.norm() - 1.0).abs() < 1e-12);
        for i in 0..g.len() {
            if g.x(i).abs() > 1.0 {
                assert_eq!(state.values()[i], Complex64::new(0.0, 0.0));
            }
        }
    }

    #[test]
    fn collapse_edge_cases() {
        let g = symmetric_grid();
        let psi = wave_packet(g, 0.0, 1.0, 0.7).unwrap();
        let (same, p1) = collapse(&psi, &Region::everywhere()).unwrap();
        assert!((p1 - 1.0).abs() < 1e-15);
        assert!(same.max_abs_diff(&psi).unwrap() < 1e-15);
        let (_, half) = collapse(&psi, &Region::interval(0.0, f64::INFINITY).unwrap()).unwrap();
        assert!((half - 0.5).abs() < 1e-10);
        assert_eq!(
            collapse(&psi, &Region::interval(100.0, 200.0).unwrap()).unwrap_err(),
            Error::ZeroProbabilityRegion
        );
        let union = Region::new(vec![(-3.0, -1.0), (1.0, 3.0)]).unwrap();
        let (_, p) = collapse(&psi, &union).unwrap();
        let single = collapse(&psi, &Region::interval(1.0, 3.0).unwrap()).unwrap().1;
        assert!((p - 2.0 * single).abs() < 1e-10);
    }

    #[test]
    fn collapse_matches_bridge_terminal_state() {
        let g = symmetric_grid();
        let model = QuantumModel::free(g, 1.0, 1.0).unwrap();
        let psi = wave_packet(g, 0.0, 1.0, 0.3).unwrap();
        let path = evolve(&psi, &model, 0.0, 0.05, 5).unwrap();
        let region = Region::interval(-1.0, 1.0).unwrap();
        let (collapsed, _) = collapse(path.last(), &region).unwrap();
        let rho1 = collapsed_density(path.last(), &region).unwrap();
        let tilde = quantum_bridge(&path, &rho1).unwrap();
        assert!(tilde.last().max_abs_diff(&collapsed).unwrap() < 1e-12);
    }

    #[test]
    fn action_of_gaussian_and_phase_invariance() {
        let (model, psi) = free_setup(801, 10.0);
        assert!((gradient_norm_sq(&psi) - 0.25).abs() < 1e-4);
        let rotated = psi.scaled(Complex64::from_polar(1.0, 0.9));
        assert!((gradient_norm_sq(&rotated) - gradient_norm_sq(&psi)).abs() < 1e-12);
        // Free evolution conserves ‖∇psi‖², so the action is 0.25 T.
        let path = evolve(&psi, &model, 0.0, 2.0, 100).unwrap();
        assert!((finite_action(&path) - 0.5).abs() < 1e-3);
    }
}
