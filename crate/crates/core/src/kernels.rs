//! Discretized Markov transition kernels.
//!
//! Entry `(i, j)` of a kernel matrix is `p(s, x_j, t, x_i) * w_j`: the
//! transition density from `x_j` at time `s` to `x_i` at time `t` with the
//! trapezoid weight of the source point folded in. Forward propagation
//! (p-coharmonic) is then a plain matrix-vector product, and backward
//! propagation (p-harmonic) is the weighted adjoint.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{same_grid, DensityField, Grid1D, ScalarField};

/// Row-sum deficit above which a kernel is considered truncated.
pub const TRUNCATION_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, Serialize)]
pub struct TransitionKernel {
    grid: Grid1D,
    s: f64,
    t: f64,
    /// Diffusion coefficient for Wiener kernels, `None` for hand-built ones.
    sigma2: Option<f64>,
    #[serde(skip)]
    matrix: Vec<f64>,
    /// `ln` of `matrix`, kept separately so tiny entries survive.
    #[serde(skip)]
    log_matrix: Vec<f64>,
    /// Row-major `ln(K[i][j] * w_i / w_j)` indexed `[j][i]`: the adjoint.
    #[serde(skip)]
    log_adjoint: Vec<f64>,
}

/// Closed-form Wiener transition density with diffusion coefficient `sigma2`.
pub fn wiener_density(y: f64, x: f64, duration: f64, sigma2: f64) -> f64 {
    let var = sigma2 * duration;
    (-(x - y).powi(2) / (2.0 * var)).exp() / (2.0 * PI * var).sqrt()
}

/// Domain bounds reaching `6*sigma*sqrt(duration)` past `[bulk_lo, bulk_hi]`.
pub fn suggested_domain(bulk_lo: f64, bulk_hi: f64, sigma2: f64, duration: f64) -> (f64, f64) {
    let pad = 6.0 * (sigma2 * duration).sqrt();
    (bulk_lo - pad, bulk_hi + pad)
}

fn log_sum_exp(terms: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = terms.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    if m == f64::INFINITY {
        return m;
    }
    m + terms.map(|a| (a - m).exp()).sum::<f64>().ln()
}

impl TransitionKernel {
    /// Wiener kernel over `[s, t]` with diffusion coefficient `sigma2`.
    pub fn heat(grid: Grid1D, s: f64, t: f64, sigma2: f64) -> Result<Self> {
        if !(t > s) || !s.is_finite() || !t.is_finite() {
            return Err(Error::InvalidInterval { s, t });
        }
        if !(sigma2 > 0.0) || !sigma2.is_finite() {
            return Err(Error::InvalidParameter {
                name: "sigma2",
                reason: format!("diffusion coefficient must be positive, got {sigma2}"),
            });
        }
        let n = grid.len();
        let var = sigma2 * (t - s);
        let log_norm = -0.5 * (2.0 * PI * var).ln();
        let points = grid.points();
        let log_w: Vec<f64> = grid.weights().iter().map(|w| w.ln()).collect();
        let weights = grid.weights();
        let mut log_matrix = vec![0.0; n * n];
        let mut matrix = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let d = points[i] - points[j];
                let log_p = log_norm - d * d / (2.0 * var);
                log_matrix[i * n + j] = log_p + log_w[j];
                // exp(log_p) is symmetric in (i, j) bit for bit.
                matrix[i * n + j] = log_p.exp() * weights[j];
            }
        }
        Ok(Self::assemble_with(grid, s, t, Some(sigma2), matrix, log_matrix))
    }

    /// Wrap an arbitrary nonnegative matrix (weights already folded in).
    pub fn from_matrix(grid: Grid1D, s: f64, t: f64, matrix: Vec<f64>) -> Result<Self> {
        if !(t > s) {
            return Err(Error::InvalidInterval { s, t });
        }
        let n = grid.len();
        if matrix.len() != n * n {
            return Err(Error::LengthMismatch {
                expected: n * n,
                got: matrix.len(),
            });
        }
        if let Some(index) = matrix.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::NonFinite { index });
        }
        let log_matrix = matrix.iter().map(|v| v.ln()).collect();
        Ok(Self::assemble(grid, s, t, None, log_matrix))
    }

    fn assemble(grid: Grid1D, s: f64, t: f64, sigma2: Option<f64>, log_matrix: Vec<f64>) -> Self {
        let matrix = log_matrix.iter().map(|v| v.exp()).collect();
        Self::assemble_with(grid, s, t, sigma2, matrix, log_matrix)
    }

    fn assemble_with(
        grid: Grid1D,
        s: f64,
        t: f64,
        sigma2: Option<f64>,
        matrix: Vec<f64>,
        log_matrix: Vec<f64>,
    ) -> Self {
        let n = grid.len();
        let log_w: Vec<f64> = grid.weights().iter().map(|w| w.ln()).collect();
        let mut log_adjoint = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                log_adjoint[j * n + i] = log_matrix[i * n + j] + log_w[i] - log_w[j];
            }
        }
        Self {
            grid,
            s,
            t,
            sigma2,
            matrix,
            log_matrix,
            log_adjoint,
        }
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn start(&self) -> f64 {
        self.s
    }

    pub fn end(&self) -> f64 {
        self.t
    }

    pub fn sigma2(&self) -> Option<f64> {
        self.sigma2
    }

    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    pub fn log_matrix(&self) -> &[f64] {
        &self.log_matrix
    }

    #[inline]
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.matrix[i * self.grid.len() + j]
    }

    /// Unfolded density `p(s, x_from, t, x_to)`.
    pub fn density(&self, from: usize, to: usize) -> f64 {
        self.entry(to, from) / self.grid.weight(from)
    }

    pub fn row_sums(&self) -> Vec<f64> {
        let n = self.grid.len();
        self.matrix.chunks(n).map(|r| r.iter().sum()).collect()
    }

    /// `K[i][j]/w_j == K[j][i]/w_i` for all entries, to relative `tol`.
    pub fn is_symmetric(&self, tol: f64) -> bool {
        let n = self.grid.len();
        (0..n).all(|i| {
            (0..i).all(|j| {
                let a = self.density(j, i);
                let b = self.density(i, j);
                (a - b).abs() <= tol * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
            })
        })
    }

    /// Smallest row sum over rows where `mass` exceeds `1e-6` of its peak.
    /// Logs a warning when that row sum falls below `1 - TRUNCATION_TOLERANCE`.
    pub fn check_truncation(&self, mass: &DensityField) -> Result<f64> {
        same_grid(&self.grid, mass.grid())?;
        let cut = 1e-6 * mass.max();
        let worst = self
            .row_sums()
            .into_iter()
            .zip(mass.values())
            .filter(|(_, &m)| m > cut)
            .fold(f64::INFINITY, |acc, (r, _)| acc.min(r));
        if worst < 1.0 - TRUNCATION_TOLERANCE {
            log::warn!(
                "kernel over [{}, {}] is truncated: row mass {worst:.6} inside the marginal bulk",
                self.s,
                self.t
            );
        }
        Ok(worst)
    }

    /// Forward (p-coharmonic) propagation: `(K f)_i = sum_j K_ij f_j`.
    pub fn forward(&self, f: &ScalarField) -> Result<ScalarField> {
        same_grid(&self.grid, f.grid())?;
        let n = self.grid.len();
        let values = self
            .matrix
            .chunks(n)
            .map(|row| row.iter().zip(f.values()).map(|(k, v)| k * v).sum())
            .collect();
        ScalarField::new(self.grid, values)
    }

    /// Backward (p-harmonic) propagation: `g_j <- sum_i K_ij w_i g_i / w_j`.
    pub fn backward(&self, g: &ScalarField) -> Result<ScalarField> {
        same_grid(&self.grid, g.grid())?;
        let n = self.grid.len();
        let wg: Vec<f64> = g
            .values()
            .iter()
            .enumerate()
            .map(|(i, v)| v * self.grid.weight(i))
            .collect();
        let mut out = vec![0.0; n];
        for (i, row) in self.matrix.chunks(n).enumerate() {
            let a = wg[i];
            for (o, k) in out.iter_mut().zip(row) {
                *o += k * a;
            }
        }
        for (j, o) in out.iter_mut().enumerate() {
            *o /= self.grid.weight(j);
        }
        ScalarField::new(self.grid, out)
    }

    /// Forward propagation of `exp(log_f)`, returned as a logarithm.
    pub fn forward_log(&self, log_f: &[f64]) -> Vec<f64> {
        let n = self.grid.len();
        self.log_matrix
            .chunks(n)
            .map(|row| log_sum_exp(row.iter().zip(log_f).map(|(k, f)| k + f)))
            .collect()
    }

    /// Backward propagation of `exp(log_g)`, returned as a logarithm.
    pub fn backward_log(&self, log_g: &[f64]) -> Vec<f64> {
        let n = self.grid.len();
        self.log_adjoint
            .chunks(n)
            .map(|row| log_sum_exp(row.iter().zip(log_g).map(|(k, g)| k + g)))
            .collect()
    }
}

/// Chapman-Kolmogorov product: `first` over `[s, t]` then `second` over `[t, u]`.
pub fn compose(first: &TransitionKernel, second: &TransitionKernel) -> Result<TransitionKernel> {
    same_grid(&first.grid, &second.grid)?;
    if (first.t - second.s).abs() > 1e-12 * (1.0 + first.t.abs()) {
        return Err(Error::TimeMismatch {
            left_end: first.t,
            right_start: second.s,
        });
    }
    let n = first.grid.len();
    let mut product = vec![0.0; n * n];
    for i in 0..n {
        let out = &mut product[i * n..(i + 1) * n];
        for k in 0..n {
            let a = second.matrix[i * n + k];
            if a == 0.0 {
                continue;
            }
            let row = &first.matrix[k * n..(k + 1) * n];
            for (o, b) in out.iter_mut().zip(row) {
                *o += a * b;
            }
        }
    }
    let sigma2 = match (first.sigma2, second.sigma2) {
        (Some(a), Some(b)) if (a - b).abs() <= 1e-15 * a.abs() => Some(a),
        _ => None,
    };
    let log_matrix = product.iter().map(|v| v.ln()).collect();
    Ok(TransitionKernel::assemble(
        first.grid,
        first.s,
        second.t,
        sigma2,
        log_matrix,
    ))
}

/// Two-sided transition density `q(s,x; t,y; u,z)` of the reciprocal
/// process built on `k_st` and `k_tu`. Positions must be grid points; the
/// denominator is the discrete Chapman-Kolmogorov sum, so `q` integrates to
/// one in `y` under the grid quadrature.
pub fn two_sided_density(
    k_st: &TransitionKernel,
    k_tu: &TransitionKernel,
    x: f64,
    y: f64,
    z: f64,
) -> Result<f64> {
    same_grid(&k_st.grid, &k_tu.grid)?;
    if (k_st.t - k_tu.s).abs() > 1e-12 * (1.0 + k_st.t.abs()) {
        return Err(Error::TimeMismatch {
            left_end: k_st.t,
            right_start: k_tu.s,
        });
    }
    let g = k_st.grid;
    let (ix, iy, iz) = (g.index_of(x)?, g.index_of(y)?, g.index_of(z)?);
    let denom: f64 = (0..g.len())
        .map(|k| k_st.density(ix, k) * g.weight(k) * k_tu.density(k, iz))
        .sum();
    if !(denom > 0.0) || !denom.is_finite() {
        return Err(Error::DegenerateDenominator { x, z });
    }
    Ok(k_st.density(ix, iy) * k_tu.density(iy, iz) / denom)
}
