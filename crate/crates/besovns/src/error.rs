use std::io;

/// Errors raised across the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("insufficient resolution: only {shells} dyadic shells fit in the resolved band")]
    InsufficientResolution { shells: i32 },
    #[error("dyadic index {j} outside [{lo}, {hi}]")]
    Range { j: i32, lo: i32, hi: i32 },
    #[error("undefined zero mode")]
    UndefinedZeroMode,
    #[error("grid mismatch")]
    GridMismatch,
    #[error("component mismatch: expected {expected}, found {found}")]
    Components { expected: usize, found: usize },
    #[error("invalid index: {0}")]
    InvalidIndex(String),
    #[error("invalid exponents: {0}")]
    InvalidExponents(String),
    #[error("invalid regime: {0}")]
    InvalidRegime(String),
    #[error("invalid symbol: {0}")]
    InvalidSymbol(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("elliptic solver stagnation (relative residual {residual:.3e})")]
    EllipticStagnation { residual: f64 },
    #[error("perturbation too large (norm {norm:.3e}, contraction {contraction:.3})")]
    PerturbationTooLarge { norm: f64, contraction: f64 },
    #[error("continuation failure at theta = {theta:.4} (step {step:.2e})")]
    ContinuationFailure { theta: f64, step: f64 },
    #[error("splitting threshold unreachable on this grid")]
    SplittingUnreachable,
    #[error("flow not invertible on grid (max |DX - Id| = {deviation:.3})")]
    FlowNotInvertible { deviation: f64 },
    #[error("inverse iteration stagnation (defect {defect:.3e})")]
    InverseStagnation { defect: f64 },
    #[error("linear fixed point failed; reduce T or data (contraction {contraction:.3})")]
    LinearFixedPointFailed { contraction: f64 },
    #[error("nonlinear fixed point failed (contraction {contraction:.3})")]
    NonlinearFixedPointFailed { contraction: f64 },
    #[error("no admissible local horizon at this resolution (T = {horizon:.3e})")]
    NoAdmissibleHorizon { horizon: f64 },
    #[error("time step rejected below dt = {dt:.3e}")]
    StepRejected { dt: f64 },
    #[error("diagnostic failure: {0}")]
    Diagnostic(String),
    #[error("config error at {location}: {message}")]
    Config { location: String, message: String },
    #[error("snapshot format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
