//! Uniform 1-D grids and the fields that live on them.
//!
//! Quadrature is the composite trapezoid rule throughout. Kernels in
//! [`crate::kernels`] fold the same weights into their columns, so a
//! discrete Chapman-Kolmogorov product reproduces what [`integrate`] sees.

use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative level under which a field counts as negligible at the walls.
const BOUNDARY_NEGLIGIBLE: f64 = 1e-12;

/// Uniform grid `x_i = x_min + i*h`, `i = 0..n_points`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    x_min: f64,
    x_max: f64,
    n_points: usize,
    h: f64,
}

impl Grid1D {
    pub fn new(x_min: f64, x_max: f64, n_points: usize) -> Result<Self> {
        if n_points < 3 {
            return Err(Error::InvalidGrid(format!(
                "n_points must be at least 3, got {n_points}"
            )));
        }
        if !(x_min.is_finite() && x_max.is_finite()) || x_max <= x_min {
            return Err(Error::InvalidGrid(format!(
                "need finite x_min < x_max, got [{x_min}, {x_max}]"
            )));
        }
        let h = (x_max - x_min) / (n_points - 1) as f64;
        Ok(Self {
            x_min,
            x_max,
            n_points,
            h,
        })
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn len(&self) -> usize {
        self.n_points
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        if i + 1 == self.n_points {
            self.x_max
        } else {
            self.x_min + i as f64 * self.h
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.x(i)).collect()
    }

    #[inline]
    pub fn weight(&self, i: usize) -> f64 {
        if i == 0 || i + 1 == self.n_points {
            0.5 * self.h
        } else {
            self.h
        }
    }

    /// Trapezoid weights `h/2, h, ..., h, h/2`.
    pub fn weights(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.weight(i)).collect()
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.x_min && x <= self.x_max
    }

    /// Index of the grid point equal to `x` up to `1e-9*h`.
    pub fn index_of(&self, x: f64) -> Result<usize> {
        let r = (x - self.x_min) / self.h;
        let i = r.round();
        if i < 0.0 || i as usize >= self.n_points || (r - i).abs() > 1e-9 {
            return Err(Error::OffGrid { x });
        }
        Ok(i as usize)
    }

    /// Cell index and fractional offset for linear interpolation; positions
    /// outside the domain are clamped to the nearest wall.
    #[inline]
    pub fn locate(&self, x: f64) -> (usize, f64) {
        let r = ((x - self.x_min) / self.h).clamp(0.0, (self.n_points - 1) as f64);
        let i = (r.floor() as usize).min(self.n_points - 2);
        (i, r - i as f64)
    }

    /// Linear interpolation of grid samples at `x` (clamped to the domain).
    #[inline]
    pub fn interpolate(&self, values: &[f64], x: f64) -> f64 {
        let (i, frac) = self.locate(x);
        values[i] + frac * (values[i + 1] - values[i])
    }

    pub fn sample<F: Fn(f64) -> f64>(&self, f: F) -> ScalarField {
        ScalarField {
            grid: *self,
            values: (0..self.n_points).map(|i| f(self.x(i))).collect(),
        }
    }

    pub fn sample_complex<F: Fn(f64) -> Complex64>(&self, f: F) -> ComplexField {
        ComplexField {
            grid: *self,
            values: (0..self.n_points).map(|i| f(self.x(i))).collect(),
        }
    }
}

fn check_values<T, F: Fn(&T) -> bool>(grid: &Grid1D, values: &[T], finite: F) -> Result<()> {
    if values.len() != grid.len() {
        return Err(Error::LengthMismatch {
            expected: grid.len(),
            got: values.len(),
        });
    }
    if let Some(index) = values.iter().position(|v| !finite(v)) {
        return Err(Error::NonFinite { index });
    }
    Ok(())
}

/// Real samples on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarField {
    grid: Grid1D,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid1D, values: Vec<f64>) -> Result<Self> {
        check_values(&grid, &values, |v| v.is_finite())?;
        Ok(Self { grid, values })
    }

    pub fn constant(grid: Grid1D, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.len()],
        }
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn at(&self, x: f64) -> f64 {
        self.grid.interpolate(&self.values, x)
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> ScalarField {
        ScalarField {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// `a*self + b*other`.
    pub fn axpby(&self, a: f64, other: &ScalarField, b: f64) -> Result<ScalarField> {
        same_grid(&self.grid, &other.grid)?;
        Ok(ScalarField {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(x, y)| a * x + b * y)
                .collect(),
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Nonnegative samples with unit trapezoid mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityField(ScalarField);

impl DensityField {
    /// Wrap already-normalized values, checking nonnegativity only. Mass is
    /// reported by [`DensityField::mass`] and not corrected.
    pub fn from_unnormalized(grid: Grid1D, values: Vec<f64>) -> Result<Self> {
        let field = ScalarField::new(grid, values)?;
        if field.values.iter().any(|&v| v < 0.0) {
            return Err(Error::NonPositiveMass {
                mass: integrate(&field),
            });
        }
        Ok(Self(field))
    }

    pub fn from_fn<F: Fn(f64) -> f64>(grid: Grid1D, f: F) -> Result<Self> {
        normalize(&grid.sample(f))
    }

    /// Gaussian density `N(mean, var)` sampled on `grid` and normalized.
    pub fn gaussian(grid: Grid1D, mean: f64, var: f64) -> Result<Self> {
        if var <= 0.0 {
            return Err(Error::InvalidParameter {
                name: "var",
                reason: format!("variance must be positive, got {var}"),
            });
        }
        Self::from_fn(grid, |x| {
            (-(x - mean).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
        })
    }

    pub fn grid(&self) -> &Grid1D {
        &self.0.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.0.values
    }

    pub fn as_scalar(&self) -> &ScalarField {
        &self.0
    }

    pub fn into_scalar(self) -> ScalarField {
        self.0
    }

    pub fn mass(&self) -> f64 {
        integrate(&self.0)
    }

    pub fn max(&self) -> f64 {
        self.0.values.iter().fold(0.0, |m: f64, &v| m.max(v))
    }

    pub fn mean(&self) -> f64 {
        let g = self.0.grid;
        (0..g.len())
            .map(|i| g.weight(i) * g.x(i) * self.0.values[i])
            .sum()
    }

    pub fn variance(&self) -> f64 {
        let g = self.0.grid;
        let mu = self.mean();
        (0..g.len())
            .map(|i| g.weight(i) * (g.x(i) - mu).powi(2) * self.0.values[i])
            .sum()
    }

    /// Raise every value to at least `rel * max` and renormalize.
    pub fn floored(&self, rel: f64) -> Result<Self> {
        let floor = rel * self.max();
        normalize(&self.0.map(|v| v.max(floor)))
    }
}

/// Complex samples on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexField {
    grid: Grid1D,
    values: Vec<Complex64>,
}

impl ComplexField {
    pub fn new(grid: Grid1D, values: Vec<Complex64>) -> Result<Self> {
        check_values(&grid, &values, |v| v.is_finite())?;
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    /// `|psi|^2` as a real field.
    pub fn modulus_sq(&self) -> ScalarField {
        ScalarField {
            grid: self.grid,
            values: self.values.iter().map(|z| z.norm_sqr()).collect(),
        }
    }

    pub fn norm_sq(&self) -> f64 {
        integrate(&self.modulus_sq())
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Divide by the L2 norm.
    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm();
        if !(n > 0.0) {
            return Err(Error::NonPositiveMass { mass: n * n });
        }
        Ok(self.scaled(Complex64::new(1.0 / n, 0.0)))
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|z| z * c).collect(),
        }
    }

    /// Quadrature inner product `<self, other> = sum w conj(self) other`.
    pub fn inner(&self, other: &ComplexField) -> Result<Complex64> {
        same_grid(&self.grid, &other.grid)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .enumerate()
            .map(|(i, (a, b))| a.conj() * b * self.grid.weight(i))
            .sum())
    }

    pub fn max_abs_diff(&self, other: &ComplexField) -> Result<f64> {
        same_grid(&self.grid, &other.grid)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).norm())))
    }
}

pub(crate) fn same_grid(a: &Grid1D, b: &Grid1D) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::GridMismatch)
    }
}

/// Trapezoid quadrature of `f` over the whole grid.
pub fn integrate(f: &ScalarField) -> f64 {
    let g = &f.grid;
    let n = g.len();
    let interior: f64 = f.values[1..n - 1].iter().sum();
    g.spacing() * (interior + 0.5 * (f.values[0] + f.values[n - 1]))
}

/// Divide `f` by its integral.
pub fn normalize(f: &ScalarField) -> Result<DensityField> {
    let mass = integrate(f);
    if !(mass > 0.0) || !mass.is_finite() || f.values.iter().any(|&v| v < 0.0) {
        return Err(Error::NonPositiveMass { mass });
    }
    Ok(DensityField(f.map(|v| v / mass)))
}

pub(crate) fn first_difference<T>(v: &[T], h: f64) -> Vec<T>
where
    T: Copy + Add<Output = T> + Sub<Output = T> + Mul<f64, Output = T>,
{
    let n = v.len();
    let c = 1.0 / (2.0 * h);
    let mut out = Vec::with_capacity(n);
    out.push((v[1] * 4.0 - v[0] * 3.0 - v[2]) * c);
    for i in 1..n - 1 {
        out.push((v[i + 1] - v[i - 1]) * c);
    }
    out.push((v[n - 1] * 3.0 - v[n - 2] * 4.0 + v[n - 3]) * c);
    out
}

pub(crate) fn second_difference<T>(v: &[T], h: f64) -> Vec<T>
where
    T: Copy + Add<Output = T> + Sub<Output = T> + Mul<f64, Output = T>,
{
    let n = v.len();
    let c = 1.0 / (h * h);
    let mut out = Vec::with_capacity(n);
    // One-sided second-order stencils need four points; with three the
    // centred value is reused.
    let edge_lo = if n >= 4 {
        (v[0] * 2.0 - v[1] * 5.0 + v[2] * 4.0 - v[3]) * c
    } else {
        (v[0] - v[1] * 2.0 + v[2]) * c
    };
    out.push(edge_lo);
    for i in 1..n - 1 {
        out.push((v[i + 1] - v[i] * 2.0 + v[i - 1]) * c);
    }
    let edge_hi = if n >= 4 {
        (v[n - 1] * 2.0 - v[n - 2] * 5.0 + v[n - 3] * 4.0 - v[n - 4]) * c
    } else {
        (v[n - 1] - v[n - 2] * 2.0 + v[n - 3]) * c
    };
    out.push(edge_hi);
    out
}

fn warn_boundary(f: &ScalarField, op: &str) {
    let n = f.values.len();
    let edge = f.values[0].abs().max(f.values[n - 1].abs());
    let max = f.max_abs();
    if max > 0.0 && edge > BOUNDARY_NEGLIGIBLE * max {
        log::trace!("{op}: field is not negligible at the walls ({edge:e} of {max:e})");
    }
}

/// Central differences inside, one-sided second order at the ends.
pub fn gradient(f: &ScalarField) -> ScalarField {
    warn_boundary(f, "gradient");
    ScalarField {
        grid: f.grid,
        values: first_difference(&f.values, f.grid.spacing()),
    }
}

/// Three-point Laplacian inside, one-sided second order at the ends.
pub fn laplacian(f: &ScalarField) -> ScalarField {
    warn_boundary(f, "laplacian");
    ScalarField {
        grid: f.grid,
        values: second_difference(&f.values, f.grid.spacing()),
    }
}

pub fn gradient_complex(f: &ComplexField) -> ComplexField {
    ComplexField {
        grid: f.grid,
        values: first_difference(&f.values, f.grid.spacing()),
    }
}

pub fn laplacian_complex(f: &ComplexField) -> ComplexField {
    ComplexField {
        grid: f.grid,
        values: second_difference(&f.values, f.grid.spacing()),
    }
}
