use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("matrix is not Hermitian (max deviation {deviation:.3e})")]
    NotHermitian { deviation: f64 },

    #[error("degenerate spectrum at s = {s}: gap {gap:.3e} below tolerance")]
    DegenerateSpectrum { s: f64, gap: f64 },

    #[error("{what} = {value} is out of range")]
    OutOfRange { what: &'static str, value: f64 },

    #[error("zero field: u_x^2 + u_z^2 vanishes")]
    ZeroField,

    #[error("gauge tracking lost at s = {s} (overlap {overlap:.3})")]
    GaugeTracking { s: f64, overlap: f64 },

    #[error("{what} did not converge (change {delta:.3e} under refinement)")]
    NonConvergent { what: &'static str, delta: f64 },

    #[error("budget infeasible: {0}")]
    BudgetInfeasible(String),

    #[error("{which} must be non-positive but equals {value:.3e} at s = {s}")]
    SignViolation { which: &'static str, s: f64, value: f64 },

    #[error("target unreachable in period {period}: residual {residual:.3e}, largest leftover component {component}")]
    Unreachable { period: usize, residual: f64, component: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
