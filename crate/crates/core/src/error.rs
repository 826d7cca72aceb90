//! Error types shared across the library.

use thiserror::Error;

/// Errors produced by grid construction, field algebra and geometric checks.
#[derive(Debug, Error)]
pub enum GeomError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("operation requires a {expected} backend, got {got}")]
    WrongBackend { expected: String, got: String },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("metric is not positive (min component {min:.3e})")]
    NotPositive { min: f64 },
    #[error("form is not pluriclosed to tolerance (residual {residual:.3e} > {tol:.3e})")]
    NotPluriclosed { residual: f64, tol: f64 },
    #[error("form is not box-closed to tolerance (residual {residual:.3e} > {tol:.3e})")]
    NotBoxClosed { residual: f64, tol: f64 },
}

/// Errors produced by the linear and nonlinear solvers.
#[derive(Debug, Error)]
pub enum SolveError {
    #[error(transparent)]
    Geometry(#[from] GeomError),
    #[error("Krylov iteration stagnated: residual {residual:.3e} after {iterations} iterations (target {tol:.3e})")]
    KrylovStagnation {
        residual: f64,
        iterations: usize,
        tol: f64,
    },
    #[error("incompatible data: solvability integral {integral:.3e} exceeds tolerance {tol:.3e}")]
    IncompatibleData { integral: f64, tol: f64 },
    #[error("incompatible classes: bracket pairing {bracket:.3e} exceeds tolerance {tol:.3e}")]
    IncompatibleClass { bracket: f64, tol: f64 },
    #[error("degenerate basis: bracket pairing {bracket:.3e} is numerically zero")]
    DegenerateBasis { bracket: f64 },
    #[error("problem is not elliptic: requires p*sigma_plus > 0 and q*sigma_minus < 0, got p={p}, q={q}, signs=({sp},{sm})")]
    NotElliptic { p: f64, q: f64, sp: i8, sm: i8 },
    #[error("Newton iteration failed to converge after {iterations} steps at path parameter t={t}: residual {residual:.3e}")]
    NewtonDiverged {
        iterations: usize,
        t: f64,
        residual: f64,
        history: Vec<f64>,
    },
    #[error("line search failed to keep the deformed metric positive (floor {floor:.3e}) at path parameter t={t}")]
    PositivityBreach { floor: f64, t: f64 },
    #[error("bisection failed to bracket the compatibility root on [{lo}, {hi}]")]
    BracketFailure { lo: f64, hi: f64 },
    #[error("class is not in the positive cone: leading coordinate p={p:.3e} <= 0")]
    NotInCone { p: f64 },
    #[error("requested weight combination is not single-valued on this chart: quasi-period coefficient {coeff:.3e}")]
    NonGlobalField { coeff: f64 },
    #[error("ODE integration failed: {0}")]
    OdeFailure(String),
}

pub type GeomResult<T> = Result<T, GeomError>;
pub type SolveResult<T> = Result<T, SolveError>;
