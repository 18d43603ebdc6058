//! Plain-text field exchange.
//!
//! Real fields are two-column CSV with header `x,value`, complex fields
//! three-column `x,re,im`. Numbers are written with 17 significant digits so
//! every `f64` round-trips exactly and output is byte-stable.

use std::io::{BufRead, Write};

use num_complex::Complex64;
use thiserror::Error;

use crate::error::Error;
use crate::grid::{normalize, ComplexField, DensityField, Grid1D, ScalarField};
use crate::kernels::TransitionKernel;

#[derive(Debug, Error)]
pub enum CsvError {
    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("expected header `{expected}`, found `{found}`")]
    Header { expected: &'static str, found: String },

    #[error("line {line}: expected {expected} columns, got {got}")]
    Columns { line: usize, expected: usize, got: usize },

    #[error("line {line}: cannot parse `{text}` as a number")]
    Parse { line: usize, text: String },

    #[error("file has no data rows")]
    Empty,

    #[error(transparent)]
    Field(#[from] Error),
}

/// `v` with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_field<W: Write>(mut w: W, f: &ScalarField) -> std::io::Result<()> {
    writeln!(w, "x,value")?;
    let g = f.grid();
    for (i, v) in f.values().iter().enumerate() {
        writeln!(w, "{},{}", fmt_f64(g.x(i)), fmt_f64(*v))?;
    }
    Ok(())
}

pub fn write_density<W: Write>(w: W, d: &DensityField) -> std::io::Result<()> {
    write_field(w, d.as_scalar())
}

pub fn write_complex<W: Write>(mut w: W, f: &ComplexField) -> std::io::Result<()> {
    writeln!(w, "x,re,im")?;
    let g = f.grid();
    for (i, v) in f.values().iter().enumerate() {
        writeln!(w, "{},{},{}", fmt_f64(g.x(i)), fmt_f64(v.re), fmt_f64(v.im))?;
    }
    Ok(())
}

/// Transition density `p(s, x_from, t, x_to)` as a matrix: the header row
/// holds the source points, each following row starts with its target point.
pub fn write_kernel<W: Write>(mut w: W, k: &TransitionKernel) -> std::io::Result<()> {
    let g = k.grid();
    let n = g.len();
    write!(w, "x")?;
    for j in 0..n {
        write!(w, ",{}", fmt_f64(g.x(j)))?;
    }
    writeln!(w)?;
    for i in 0..n {
        write!(w, "{}", fmt_f64(g.x(i)))?;
        for j in 0..n {
            write!(w, ",{}", fmt_f64(k.density(j, i)))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Columns of a field file, before any grid is attached.
#[derive(Debug, Clone, PartialEq)]
pub struct Columns {
    pub x: Vec<f64>,
    pub data: Vec<Vec<f64>>,
}

fn read_columns<R: BufRead>(r: R, header: &'static str) -> Result<Columns, CsvError> {
    let width = header.split(',').count();
    let mut lines = r.lines();
    let found = lines.next().transpose()?.unwrap_or_default();
    if found.trim() != header {
        return Err(CsvError::Header {
            expected: header,
            found: found.trim().to_string(),
        });
    }
    let mut x = Vec::new();
    let mut data = vec![Vec::new(); width - 1];
    for (k, line) in lines.enumerate() {
        let line = line?;
        let line_no = k + 2;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != width {
            return Err(CsvError::Columns {
                line: line_no,
                expected: width,
                got: cells.len(),
            });
        }
        for (c, cell) in cells.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| CsvError::Parse {
                line: line_no,
                text: cell.to_string(),
            })?;
            if c == 0 {
                x.push(v);
            } else {
                data[c - 1].push(v);
            }
        }
    }
    if x.is_empty() {
        return Err(CsvError::Empty);
    }
    Ok(Columns { x, data })
}

/// Uniform grid through `xs`, or `InvalidGrid` if the spacing varies.
pub fn grid_from_points(xs: &[f64]) -> Result<Grid1D, Error> {
    if xs.len() < 3 {
        return Err(Error::InvalidGrid(format!("{} points, need at least 3", xs.len())));
    }
    let g = Grid1D::new(xs[0], xs[xs.len() - 1], xs.len())?;
    let tol = 1e-9 * g.spacing();
    if let Some(i) = (0..xs.len()).find(|&i| (xs[i] - g.x(i)).abs() > tol) {
        return Err(Error::InvalidGrid(format!("point {i} ({}) breaks uniform spacing", xs[i])));
    }
    Ok(g)
}

pub fn read_field<R: BufRead>(r: R) -> Result<ScalarField, CsvError> {
    let mut c = read_columns(r, "x,value")?;
    let g = grid_from_points(&c.x)?;
    Ok(ScalarField::new(g, c.data.remove(0))?)
}

pub fn read_complex<R: BufRead>(r: R) -> Result<ComplexField, CsvError> {
    let c = read_columns(r, "x,re,im")?;
    let g = grid_from_points(&c.x)?;
    let values = c.data[0].iter().zip(&c.data[1]).map(|(a, b)| Complex64::new(*a, *b)).collect();
    Ok(ComplexField::new(g, values)?)
}

/// Linear interpolation of a tabulated density onto `grid`, zero outside the
/// table, renormalized to unit mass.
pub fn resample_density(table: &ScalarField, grid: Grid1D) -> Result<DensityField, Error> {
    let src = table.grid();
    let values = (0..grid.len())
        .map(|i| {
            let x = grid.x(i);
            if src.contains(x) {
                src.interpolate(table.values(), x)
            } else {
                0.0
            }
        })
        .collect();
    normalize(&ScalarField::new(grid, values)?)
}
