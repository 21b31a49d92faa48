use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("alphabet mismatch: {left} vs {right}")]
    AlphabetMismatch { left: usize, right: usize },

    #[error("symbol {symbol} out of range for alphabet of size {alphabet}")]
    SymbolOutOfRange { symbol: usize, alphabet: usize },

    #[error("invalid word: {0}")]
    InvalidWord(String),

    #[error("invalid map: {0}")]
    InvalidMap(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("root finding failed to bracket x = {x} in branch {branch}")]
    RootBracket { x: f64, branch: usize },

    #[error("potential g is not positive at x = {x} (g = {value})")]
    NonPositivePotential { x: f64, value: f64 },

    #[error("non-finite value in {what} at x = {x}")]
    NonFinite { what: &'static str, x: f64 },

    #[error("{what}: no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("max-plus iteration did not settle after {iterations} iterations (residual {residual:e}, drift {drift:e} per step; a drift away from 0 means m is wrong by about that much)")]
    NoCalibration {
        iterations: usize,
        residual: f64,
        drift: f64,
    },

    #[error("spectral gap collapse: oscillating eigenvalue estimate after {iterations} iterations")]
    SpectralGapCollapse { iterations: usize },

    #[error("non-positive quadrature mass ({what}); eigenmeasure weights too concentrated")]
    NonPositiveMass { what: &'static str },

    #[error("cylinder mass underflow (log mass {log_mass})")]
    Underflow { log_mass: f64 },

    #[error("depth cap {depth} reached with Cauchy defect {defect:e}")]
    DepthCap { depth: usize, defect: f64 },

    #[error("series truncation bound {bound:e} exceeds tolerance {tol:e}")]
    SeriesTruncation { bound: f64, tol: f64 },

    #[error("series dual depends on x: spread {spread:e}")]
    SeriesNotInvariant { spread: f64 },

    #[error("orientation-reversing map: the piecewise pipeline requires an orientation-preserving map (twist kernels cannot exist otherwise)")]
    OrientationReversing,

    #[error("maximizing orbit is not unique: {0}")]
    NonUniqueMaximizer(String),

    #[error("breakpoint inconsistency: {found} breakpoints for {candidates} candidates")]
    BreakpointInconsistency { found: usize, candidates: usize },

    #[error(transparent)]
    Expr(#[from] crate::expr::ExprError),

    #[error("config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
