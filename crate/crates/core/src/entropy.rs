//! Relative entropy between densities and between path measures.
//!
//! For two finite-energy diffusions with common diffusion coefficient
//! `sigma2`, Girsanov's theorem splits `H(Q, P)` into a marginal term and a
//! quadratic drift-mismatch term, in either time direction:
//!
//! ```text
//! H(Q, P) = H(q(t0), p(t0)) + E_Q ∫ |beta_Q - beta_P|^2 / (2 sigma2) dt
//!         = H(q(t1), p(t1)) + E_Q ∫ |gamma_Q - gamma_P|^2 / (2 sigma2) dt
//! ```

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{same_grid, DensityField};
use crate::sde::{Direction, Drift, PathEnsemble};

/// Density values below this fraction of the peak count as zero.
pub const KL_FLOOR: f64 = 1e-30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EntropyReport {
    pub static_term: f64,
    pub kinetic_term: f64,
    pub total: f64,
    pub direction: Direction,
    pub mc_std_error: f64,
}

fn kl_sum(p: &[f64], q: &[f64], weights: &[f64], position: impl Fn(usize) -> f64) -> Result<f64> {
    let p_floor = KL_FLOOR * p.iter().cloned().fold(0.0, f64::max);
    let q_floor = KL_FLOOR * q.iter().cloned().fold(0.0, f64::max);
    let mut h = 0.0;
    for i in 0..p.len() {
        if p[i] <= p_floor {
            continue;
        }
        if q[i] <= q_floor {
            return Err(Error::SupportViolation { x: position(i) });
        }
        h += weights[i] * p[i] * (p[i] / q[i]).ln();
    }
    Ok(h)
}

/// `∫ p ln(p / q)` by trapezoid quadrature.
pub fn kl_divergence(p: &DensityField, q: &DensityField) -> Result<f64> {
    same_grid(p.grid(), q.grid())?;
    let g = *p.grid();
    kl_sum(p.values(), q.values(), &g.weights(), |i| g.x(i))
}

/// `Σ w_i p_i ln(p_i / q_i)` for piecewise densities on cells of size `w_i`.
/// A support violation reports the cell index as its position.
pub fn kl_divergence_weighted(p: &[f64], q: &[f64], weights: &[f64]) -> Result<f64> {
    if p.len() != weights.len() || q.len() != weights.len() {
        return Err(Error::LengthMismatch {
            expected: weights.len(),
            got: if p.len() != weights.len() { p.len() } else { q.len() },
        });
    }
    kl_sum(p, q, weights, |i| i as f64)
}

/// Per-path values of `∫ |a - b|^2 / (2 sigma2) dt`, evaluated at the left
/// (forward) or right (backward) end of every stored interval.
fn kinetic_per_path(a: &dyn Drift, b: &dyn Drift, ens: &PathEnsemble, sigma2: f64, direction: Direction) -> Vec<f64> {
    let times = ens.times();
    let shift = match direction {
        Direction::Forward => 0,
        Direction::Backward => 1,
    };
    let integral = |path: &[f64]| {
        let mut acc = 0.0;
        for k in 0..times.len() - 1 {
            let (x, t) = (path[k + shift], times[k + shift]);
            let d = a.eval(x, t) - b.eval(x, t);
            acc += d * d * (times[k + 1] - times[k]);
        }
        acc / (2.0 * sigma2)
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..ens.n_paths()).into_par_iter().map(|p| integral(ens.path(p))).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        ens.paths().map(integral).collect()
    }
}

fn mean_and_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn path_entropy(
    q: &DensityField,
    p: &DensityField,
    drift_q: &dyn Drift,
    drift_p: &dyn Drift,
    ens: &PathEnsemble,
    sigma2: f64,
    direction: Direction,
) -> Result<EntropyReport> {
    same_grid(q.grid(), p.grid())?;
    if ens.n_paths() == 0 || ens.n_times() == 0 {
        return Err(Error::EmptyEnsemble);
    }
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return Err(Error::InvalidParameter {
            name: "sigma2",
            reason: format!("must be positive, got {sigma2}"),
        });
    }
    let static_term = kl_divergence(q, p)?;
    let (kinetic_term, mc_std_error) = mean_and_se(&kinetic_per_path(drift_q, drift_p, ens, sigma2, direction));
    Ok(EntropyReport {
        static_term,
        kinetic_term,
        total: static_term + kinetic_term,
        direction,
        mc_std_error,
    })
}

/// `H(Q, P)` from initial marginals and forward drifts, `ens` sampled under Q.
pub fn path_entropy_forward(
    q0: &DensityField,
    p0: &DensityField,
    beta_q: &dyn Drift,
    beta_p: &dyn Drift,
    ens: &PathEnsemble,
    sigma2: f64,
) -> Result<EntropyReport> {
    path_entropy(q0, p0, beta_q, beta_p, ens, sigma2, Direction::Forward)
}

/// `H(Q, P)` from terminal marginals and backward drifts, `ens` sampled under Q.
pub fn path_entropy_backward(
    q1: &DensityField,
    p1: &DensityField,
    gamma_q: &dyn Drift,
    gamma_p: &dyn Drift,
    ens: &PathEnsemble,
    sigma2: f64,
) -> Result<EntropyReport> {
    path_entropy(q1, p1, gamma_q, gamma_p, ens, sigma2, Direction::Backward)
}
