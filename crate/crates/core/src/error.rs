use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("grid is not strictly increasing at index {index} (step {step})")]
    NonMonotone { index: usize, step: f64 },
    #[error("prepoint {prepoint} must lie strictly before the first point {first}")]
    MissingPrepoint { prepoint: f64, first: f64 },
    #[error("empty interval: horizon {horizon} <= t0 {t0}")]
    EmptyInterval { t0: f64, horizon: f64 },
    #[error("invalid base step {0}")]
    InvalidStep(f64),
    #[error("grid index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("matrix is not square ({rows}x{cols})")]
    NonSquare { rows: usize, cols: usize },
    #[error("matrix is not Hermitian (defect {defect:e})")]
    NotHermitian { defect: f64 },
    #[error("matrix is indefinite (min eigenvalue {min_eig:e})")]
    IndefiniteInput { min_eig: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("{what} is singular or ill-conditioned (condition {cond:e})")]
    Singular { what: &'static str, cond: f64 },

    #[error("system is not regressive at t = {t}: {factor} singular (condition {cond:e})")]
    SingularAt {
        t: f64,
        factor: &'static str,
        cond: f64,
    },
    #[error("integrator failed at t = {t}: {reason}")]
    IntegratorFailure { t: f64, reason: String },
    #[error("adjoint propagation disagrees with the inverse formula (gap {gap:e})")]
    AdjointMismatch { gap: f64 },
    #[error("adjoint state at sigma(t) is required at t = {t}")]
    MissingSigmaSample { t: f64 },

    #[error("rotation block U is singular (condition {cond:e})")]
    SingularU { cond: f64 },
    #[error("disk undefined at t = {t}: P not positive definite (min eigenvalue {min_eig:e})")]
    DiskUndefined { t: f64, min_eig: f64 },
    #[error("negative radius at t = {t} (min eigenvalue {min_eig:e})")]
    NegativeRadius { t: f64, min_eig: f64 },
    #[error("matrix is not a contraction (max singular value {0})")]
    NotContraction(f64),
    #[error("lambda = {lambda} is outside the cone (margin {margin})")]
    ConeViolation { lambda: String, margin: f64 },

    #[error("epsilon {eps} must lie in (0, {delta})")]
    EpsilonOutOfRange { eps: f64, delta: f64 },

    #[error("p vanishes at t = {0}")]
    ZeroP(f64),
    #[error("weight w must be positive, got {w} at t = {t}")]
    NonPositiveW { t: f64, w: f64 },
    #[error("length {got} does not match expected {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("parameter {name} must be positive, got {value}")]
    NonPositiveParams { name: &'static str, value: f64 },
    #[error("trajectory does not match problem variant: {0}")]
    VariantMismatch(String),

    #[error("config error at {path}: {message}")]
    Config { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
