//! Euler-Maruyama simulation of finite-energy diffusions, forward and in
//! reverse time, plus Monte Carlo checks of the duality relation and of the
//! Itô change-of-variables formula.
//!
//! Every trajectory draws from its own ChaCha stream (`seed`, stream =
//! path index), so an ensemble is bit-identical regardless of how paths are
//! scheduled across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{gradient, laplacian, same_grid, DensityField, Grid1D, ScalarField};

/// Largest tolerated fraction of drift evaluations outside the domain.
pub const MAX_CLAMPED_FRACTION: f64 = 1e-3;

/// A drift field `b(x, t)`.
pub trait Drift: Send + Sync {
    fn eval(&self, x: f64, t: f64) -> f64;
}

impl<F> Drift for F
where
    F: Fn(f64, f64) -> f64 + Send + Sync,
{
    fn eval(&self, x: f64, t: f64) -> f64 {
        self(x, t)
    }
}

/// The zero drift of the Wiener reference.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroDrift;

impl Drift for ZeroDrift {
    fn eval(&self, _x: f64, _t: f64) -> f64 {
        0.0
    }
}

/// Grid-sampled drift: linear in space, nearest stored time.
#[derive(Debug, Clone, Serialize)]
pub struct FieldDrift {
    grid: Grid1D,
    times: Vec<f64>,
    fields: Vec<Vec<f64>>,
}

impl FieldDrift {
    pub fn new(times: Vec<f64>, fields: Vec<ScalarField>) -> Result<Self> {
        if times.is_empty() || times.len() != fields.len() {
            return Err(Error::InvalidParameter {
                name: "times",
                reason: format!("{} times for {} fields", times.len(), fields.len()),
            });
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter {
                name: "times",
                reason: "times must be strictly increasing".into(),
            });
        }
        let grid = *fields[0].grid();
        for f in &fields {
            same_grid(&grid, f.grid())?;
        }
        Ok(Self {
            grid,
            times,
            fields: fields.into_iter().map(ScalarField::into_values).collect(),
        })
    }

    /// A time-independent field.
    pub fn stationary(field: ScalarField) -> Self {
        Self {
            grid: *field.grid(),
            times: vec![0.0],
            fields: vec![field.into_values()],
        }
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    fn nearest(&self, t: f64) -> usize {
        let k = self.times.partition_point(|&s| s < t);
        if k == 0 {
            0
        } else if k == self.times.len() || t - self.times[k - 1] <= self.times[k] - t {
            k - 1
        } else {
            k
        }
    }
}

impl Drift for FieldDrift {
    fn eval(&self, x: f64, t: f64) -> f64 {
        self.grid.interpolate(&self.fields[self.nearest(t)], x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
}

/// Where trajectories start (forward) or end (backward).
#[derive(Debug, Clone, Copy)]
pub enum Initial<'a> {
    Density(&'a DensityField),
    Point(f64),
}

impl<'a> From<&'a DensityField> for Initial<'a> {
    fn from(d: &'a DensityField) -> Self {
        Initial::Density(d)
    }
}

/// Sampled trajectories on a stored time grid.
#[derive(Debug, Clone, Serialize)]
pub struct PathEnsemble {
    times: Vec<f64>,
    #[serde(skip)]
    positions: Vec<f64>,
    n_paths: usize,
    sigma2: f64,
    seed: u64,
    direction: Direction,
    clamped_fraction: f64,
}

impl PathEnsemble {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn n_times(&self) -> usize {
        self.times.len()
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn clamped_fraction(&self) -> f64 {
        self.clamped_fraction
    }

    /// Positions of one path at all stored times.
    pub fn path(&self, p: usize) -> &[f64] {
        let m = self.times.len();
        &self.positions[p * m..(p + 1) * m]
    }

    pub fn paths(&self) -> impl Iterator<Item = &[f64]> {
        self.positions.chunks(self.times.len())
    }

    pub fn time_index(&self, t: f64) -> Result<usize> {
        let tol = 1e-9 * (1.0 + t.abs());
        self.times
            .iter()
            .position(|&s| (s - t).abs() <= tol)
            .ok_or(Error::TimeNotStored { t })
    }

    /// Positions of every path at stored time index `k`.
    pub fn slice(&self, k: usize) -> Vec<f64> {
        self.paths().map(|p| p[k]).collect()
    }

    /// Sample mean and (unbiased) variance at every stored time.
    pub fn moments(&self) -> Vec<(f64, f64)> {
        (0..self.n_times())
            .map(|k| {
                let xs = self.slice(k);
                let n = xs.len() as f64;
                let mean = xs.iter().sum::<f64>() / n;
                let var = if xs.len() > 1 {
                    xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
                } else {
                    0.0
                };
                (mean, var)
            })
            .collect()
    }
}

/// Euler-Maruyama driver shared by forward and reverse-time sampling.
#[derive(Debug, Clone)]
pub struct Sampler {
    pub domain: Grid1D,
    pub sigma2: f64,
    pub n_paths: usize,
    pub seed: u64,
    /// Store every `record_every`-th time step (1 stores them all).
    pub record_every: usize,
}

struct PathOutcome {
    clamped: u64,
    blowup: Option<(usize, f64)>,
}

/// Inverse-CDF sampler over the trapezoid cells of a density.
struct CellSampler {
    grid: Grid1D,
    cumulative: Vec<f64>,
}

impl CellSampler {
    fn new(d: &DensityField) -> Self {
        let g = *d.grid();
        let v = d.values();
        let h = g.spacing();
        let mut cumulative = Vec::with_capacity(g.len());
        let mut acc = 0.0;
        cumulative.push(0.0);
        for k in 0..g.len() - 1 {
            acc += 0.5 * h * (v[k] + v[k + 1]);
            cumulative.push(acc);
        }
        Self {
            grid: g,
            cumulative,
        }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        let total = *self.cumulative.last().unwrap();
        let u = rng.random::<f64>() * total;
        let k = self
            .cumulative
            .partition_point(|&c| c <= u)
            .clamp(1, self.cumulative.len() - 1)
            - 1;
        let mass = self.cumulative[k + 1] - self.cumulative[k];
        let frac = if mass > 0.0 {
            ((u - self.cumulative[k]) / mass).clamp(0.0, 1.0)
        } else {
            rng.random::<f64>()
        };
        self.grid.x(k) + frac * self.grid.spacing()
    }
}

enum StartDraw {
    Cells(CellSampler),
    Point(f64),
}

impl StartDraw {
    fn new(init: Initial<'_>) -> Self {
        match init {
            Initial::Density(d) => StartDraw::Cells(CellSampler::new(d)),
            Initial::Point(x) => StartDraw::Point(x),
        }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            StartDraw::Cells(c) => c.draw(rng),
            StartDraw::Point(x) => *x,
        }
    }
}

impl Sampler {
    pub fn new(domain: Grid1D, sigma2: f64, n_paths: usize, seed: u64) -> Self {
        Self {
            domain,
            sigma2,
            n_paths,
            seed,
            record_every: 1,
        }
    }

    pub fn record_every(mut self, stride: usize) -> Self {
        self.record_every = stride;
        self
    }

    fn validate(&self, times: &[f64]) -> Result<Vec<f64>> {
        if self.n_paths == 0 {
            return Err(Error::EmptyEnsemble);
        }
        if !(self.sigma2 >= 0.0) || !self.sigma2.is_finite() {
            return Err(Error::InvalidParameter {
                name: "sigma2",
                reason: format!("must be nonnegative, got {}", self.sigma2),
            });
        }
        if times.len() < 2 || times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter {
                name: "times",
                reason: "need at least two strictly increasing times".into(),
            });
        }
        if self.record_every == 0 || !(times.len() - 1).is_multiple_of(self.record_every) {
            return Err(Error::InvalidParameter {
                name: "record_every",
                reason: format!(
                    "stride {} must divide the {} steps",
                    self.record_every,
                    times.len() - 1
                ),
            });
        }
        Ok(times.iter().step_by(self.record_every).copied().collect())
    }

    fn run<F>(&self, times: &[f64], direction: Direction, per_path: F) -> Result<PathEnsemble>
    where
        F: Fn(usize, &mut [f64]) -> PathOutcome + Send + Sync,
    {
        let stored = self.validate(times)?;
        let m = stored.len();
        let mut positions = vec![0.0; self.n_paths * m];

        #[cfg(feature = "parallel")]
        let outcomes: Vec<PathOutcome> = {
            use rayon::prelude::*;
            positions
                .par_chunks_mut(m)
                .enumerate()
                .map(|(p, row)| per_path(p, row))
                .collect()
        };
        #[cfg(not(feature = "parallel"))]
        let outcomes: Vec<PathOutcome> = positions
            .chunks_mut(m)
            .enumerate()
            .map(|(p, row)| per_path(p, row))
            .collect();

        if let Some((step, increment)) = outcomes.iter().filter_map(|o| o.blowup).min_by_key(|b| b.0) {
            return Err(Error::DriftBlowup { step, increment });
        }
        let clamped: u64 = outcomes.iter().map(|o| o.clamped).sum();
        let evaluations = (self.n_paths * (times.len() - 1)) as f64;
        let clamped_fraction = clamped as f64 / evaluations;
        if clamped_fraction > MAX_CLAMPED_FRACTION {
            return Err(Error::ExcessiveClamping {
                fraction: clamped_fraction,
            });
        }
        Ok(PathEnsemble {
            times: stored,
            positions,
            n_paths: self.n_paths,
            sigma2: self.sigma2,
            seed: self.seed,
            direction,
            clamped_fraction,
        })
    }

    fn rng(&self, path: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(path as u64);
        rng
    }

    /// `x_{k+1} = x_k + beta(x_k, t_k) dt + sigma sqrt(dt) z_k`.
    pub fn forward<'a>(
        &self,
        beta: &dyn Drift,
        start: impl Into<Initial<'a>>,
        times: &[f64],
    ) -> Result<PathEnsemble> {
        let start = StartDraw::new(start.into());
        let sigma = self.sigma2.sqrt();
        let width = self.domain.width();
        let stride = self.record_every;
        self.run(times, Direction::Forward, |p, row| {
            let mut rng = self.rng(p);
            let mut x = start.draw(&mut rng);
            let mut out = PathOutcome {
                clamped: 0,
                blowup: None,
            };
            row[0] = x;
            for k in 0..times.len() - 1 {
                let dt = times[k + 1] - times[k];
                if !self.domain.contains(x) {
                    out.clamped += 1;
                }
                let z: f64 = rng.sample(StandardNormal);
                let inc = beta.eval(x, times[k]) * dt + sigma * dt.sqrt() * z;
                if !(inc.abs() <= width) {
                    out.blowup = Some((k, inc));
                    return out;
                }
                x += inc;
                if (k + 1) % stride == 0 {
                    row[(k + 1) / stride] = x;
                }
            }
            out
        })
    }

    /// Reverse-time scheme from the terminal law:
    /// `x_k = x_{k+1} - gamma(x_{k+1}, t_{k+1}) dt + sigma sqrt(dt) z_k`.
    pub fn backward<'a>(
        &self,
        gamma: &dyn Drift,
        end: impl Into<Initial<'a>>,
        times: &[f64],
    ) -> Result<PathEnsemble> {
        let end = StartDraw::new(end.into());
        let sigma = self.sigma2.sqrt();
        let width = self.domain.width();
        let stride = self.record_every;
        let last = times.len() - 1;
        self.run(times, Direction::Backward, |p, row| {
            let mut rng = self.rng(p);
            let mut x = end.draw(&mut rng);
            let mut out = PathOutcome {
                clamped: 0,
                blowup: None,
            };
            row[last / stride] = x;
            for k in (0..last).rev() {
                let dt = times[k + 1] - times[k];
                if !self.domain.contains(x) {
                    out.clamped += 1;
                }
                let z: f64 = rng.sample(StandardNormal);
                let inc = -gamma.eval(x, times[k + 1]) * dt + sigma * dt.sqrt() * z;
                if !(inc.abs() <= width) {
                    out.blowup = Some((k, inc));
                    return out;
                }
                x += inc;
                if k % stride == 0 {
                    row[k / stride] = x;
                }
            }
            out
        })
    }
}

/// Forward Euler-Maruyama ensemble with every step stored.
pub fn sample_forward(
    beta: &dyn Drift,
    rho0: &DensityField,
    sigma2: f64,
    times: &[f64],
    n_paths: usize,
    seed: u64,
) -> Result<PathEnsemble> {
    Sampler::new(*rho0.grid(), sigma2, n_paths, seed).forward(beta, rho0, times)
}

/// Reverse-time Euler-Maruyama ensemble started from `rho1` at the last time.
pub fn sample_backward(
    gamma: &dyn Drift,
    rho1: &DensityField,
    sigma2: f64,
    times: &[f64],
    n_paths: usize,
    seed: u64,
) -> Result<PathEnsemble> {
    Sampler::new(*rho1.grid(), sigma2, n_paths, seed).backward(gamma, rho1, times)
}

/// `n + 1` equispaced times on `[t0, t1]`.
pub fn uniform_times(t0: f64, t1: f64, n: usize) -> Vec<f64> {
    (0..=n)
        .map(|k| if k == n { t1 } else { t0 + (t1 - t0) * k as f64 / n as f64 })
        .collect()
}

/// Histogram of the ensemble at time `t`: one cell per grid point (the
/// trapezoid cell `[x_i - h/2, x_i + h/2]` clipped to the domain), so the
/// result has unit trapezoid mass. Positions outside the grid are dropped.
pub fn empirical_density(ens: &PathEnsemble, t: f64, grid: &Grid1D) -> Result<DensityField> {
    let k = ens.time_index(t)?;
    let mut counts = vec![0u64; grid.len()];
    let mut inside = 0u64;
    let h = grid.spacing();
    for p in ens.paths() {
        let x = p[k];
        if !grid.contains(x) {
            continue;
        }
        let i = (((x - grid.x_min()) / h).round() as usize).min(grid.len() - 1);
        counts[i] += 1;
        inside += 1;
    }
    if inside == 0 {
        return Err(Error::EmptyEnsemble);
    }
    let n = inside as f64;
    let values = counts
        .iter()
        .enumerate()
        .map(|(i, &c)| c as f64 / (n * grid.weight(i)))
        .collect();
    DensityField::from_unnormalized(*grid, values)
}

/// L1 distance between two densities on the same grid.
pub fn l1_distance(a: &DensityField, b: &DensityField) -> Result<f64> {
    same_grid(a.grid(), b.grid())?;
    let g = a.grid();
    Ok((0..g.len())
        .map(|i| g.weight(i) * (a.values()[i] - b.values()[i]).abs())
        .sum())
}

/// Sup over the bulk of `rho` (values above `1e-6*max`) of
/// `|beta - gamma - sigma2 * grad log rho|`.
pub fn duality_check(
    beta: &dyn Drift,
    gamma: &dyn Drift,
    rho: &DensityField,
    t: f64,
    sigma2: f64,
) -> f64 {
    let g = *rho.grid();
    let log_rho = ScalarField::new(
        g,
        rho.values()
            .iter()
            .map(|v| v.max(f64::MIN_POSITIVE).ln())
            .collect(),
    )
    .expect("log of a clamped density is finite");
    let score = gradient(&log_rho);
    let cut = 1e-6 * rho.max();
    (0..g.len())
        .filter(|&i| rho.values()[i] > cut)
        .map(|i| {
            let x = g.x(i);
            (beta.eval(x, t) - gamma.eval(x, t) - sigma2 * score.values()[i]).abs()
        })
        .fold(0.0, f64::max)
}

/// Both sides of Dynkin's formula for a time-independent test function.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GeneratorReport {
    /// `E f(x_T) - E f(x_S)`.
    pub lhs: f64,
    /// `E sum_k (beta f' + sigma2/2 f'')(x_k, t_k) dt_k`.
    pub rhs: f64,
    pub discrepancy: f64,
    pub std_error: f64,
}

/// Itô/Dynkin consistency of a forward ensemble: the martingale part of
/// `f(x_t)` must average to zero.
pub fn generator_check(
    f: &ScalarField,
    ens: &PathEnsemble,
    beta: &dyn Drift,
    sigma2: f64,
) -> Result<GeneratorReport> {
    if ens.n_paths() == 0 {
        return Err(Error::EmptyEnsemble);
    }
    let g = *f.grid();
    let df = gradient(f);
    let d2f = laplacian(f);
    let times = ens.times();
    let last = times.len() - 1;
    let mut sum_lhs = 0.0;
    let mut sum_rhs = 0.0;
    let mut sum_sq = 0.0;
    for p in ens.paths() {
        let lhs = g.interpolate(f.values(), p[last]) - g.interpolate(f.values(), p[0]);
        let mut rhs = 0.0;
        for k in 0..last {
            let x = p[k];
            let dt = times[k + 1] - times[k];
            let gen = beta.eval(x, times[k]) * g.interpolate(df.values(), x)
                + 0.5 * sigma2 * g.interpolate(d2f.values(), x);
            rhs += gen * dt;
        }
        sum_lhs += lhs;
        sum_rhs += rhs;
        sum_sq += (lhs - rhs).powi(2);
    }
    let n = ens.n_paths() as f64;
    let lhs = sum_lhs / n;
    let rhs = sum_rhs / n;
    let mean_diff = lhs - rhs;
    let var = if n > 1.0 {
        (sum_sq / n - mean_diff * mean_diff).max(0.0) * n / (n - 1.0)
    } else {
        0.0
    };
    Ok(GeneratorReport {
        lhs,
        rhs,
        discrepancy: mean_diff.abs(),
        std_error: (var / n).sqrt(),
    })
}

/// Empirical energy `E sum_k |beta(x_k, t_k)|^2 dt_k` of a forward ensemble.
pub fn drift_energy(ens: &PathEnsemble, beta: &dyn Drift) -> f64 {
    let times = ens.times();
    let total: f64 = ens
        .paths()
        .map(|p| {
            (0..times.len() - 1)
                .map(|k| beta.eval(p[k], times[k]).powi(2) * (times[k + 1] - times[k]))
                .sum::<f64>()
        })
        .sum();
    total / ens.n_paths() as f64
}
