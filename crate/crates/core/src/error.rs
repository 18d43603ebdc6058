use thiserror::Error;

/// Errors raised by the numerical routines in this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("field has {got} values, grid has {expected} points")]
    LengthMismatch { expected: usize, got: usize },

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("cannot normalize: mass {mass} (or a negative entry)")]
    NonPositiveMass { mass: f64 },

    #[error("invalid time interval [{s}, {t}]")]
    InvalidInterval { s: f64, t: f64 },

    #[error("kernel times do not chain: {left_end} != {right_start}")]
    TimeMismatch { left_end: f64, right_start: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("position {x} is not a grid point")]
    OffGrid { x: f64 },

    #[error("two-sided density denominator vanishes at x={x}, z={z}")]
    DegenerateDenominator { x: f64, z: f64 },

    #[error("Sinkhorn iteration did not converge in {max_iter} iterations (residual {residual:e})")]
    NoConvergence { max_iter: usize, residual: f64 },

    #[error("marginals do not overlap under the kernel (non-finite potential at iteration {iteration})")]
    NonOverlappingSupport { iteration: usize },

    #[error("potential underflows at index {index}")]
    DegeneratePotential { index: usize },

    #[error("kernel is not symmetric; time reversal needs a reversible reference")]
    AsymmetricKernel,

    #[error("relative entropy is infinite")]
    InfiniteEntropy,

    #[error("support violation at x={x}: reference density vanishes where target does not")]
    SupportViolation { x: f64 },

    #[error("empty path ensemble")]
    EmptyEnsemble,

    #[error("time {t} is not stored")]
    TimeNotStored { t: f64 },

    #[error("drift blew up: increment {increment} at step {step}")]
    DriftBlowup { step: usize, increment: f64 },

    #[error("{fraction:.4} of drift evaluations left the domain (limit 0.001)")]
    ExcessiveClamping { fraction: f64 },

    #[error("singular tridiagonal system at row {row}")]
    SingularSolve { row: usize },

    #[error("measurement region has zero probability")]
    ZeroProbabilityRegion,
}

pub type Result<T> = std::result::Result<T, Error>;
