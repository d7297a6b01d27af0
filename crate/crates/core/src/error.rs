use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grid needs at least 3 nodes per axis, got {nx}x{ny}")]
    TooFewNodes { nx: usize, ny: usize },
    #[error("grid side lengths must be finite and positive, got lx={lx}, ly={ly}")]
    BadExtent { lx: f64, ly: f64 },
    #[error("expected {expected} values, got {got}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("field value at node {node} is not finite")]
    NonFinite { node: usize },
    #[error("boundary node {node} carries nonzero value {value}")]
    BoundaryNonzero { node: usize, value: f64 },
    #[error("periodic rows differ at column {column}")]
    PeriodicMismatch { column: usize },
    #[error("fields live on different grids")]
    GridMismatch,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamError {
    #[error("p must exceed 1, got {0}")]
    PTooSmall(f64),
    #[error("exponents must satisfy 1 < p <= q - 1, got p={p}, q={q}")]
    ExponentOrder { p: f64, q: f64 },
    #[error("q={q} is not below the critical exponent 2p/(2-p)={critical} for p={p}")]
    Supercritical { p: f64, q: f64, critical: f64 },
    #[error("lambda must be finite and nonnegative, got {0}")]
    Lambda(f64),
    #[error("alpha must lie in (0, 1], got {0}")]
    Alpha(f64),
    #[error("eps must be finite and nonnegative, got {0}")]
    Eps(f64),
    #[error("eps = 0 is only allowed for p = 2 (got p={0})")]
    DegenerateWeight(f64),
    #[error("subcells must be at least 1")]
    Subcells,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("energy fell below floor {floor} after {iterations} iterations")]
    Diverged { iterations: usize, floor: f64 },
    #[error("no convergence after {iterations} iterations (residual {residual})")]
    MaxIter { iterations: usize, residual: f64 },
    #[error("non-finite value encountered")]
    NonFinite,
    #[error("continuation step {step} failed: {source}")]
    Continuation {
        step: usize,
        #[source]
        source: Box<SolverError>,
    },
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("lambda must be positive, got {0}")]
    Lambda(f64),
    #[error("umax bracket must satisfy 1 < lo < hi, got [{lo}, {hi}]")]
    Bracket { lo: f64, hi: f64 },
    #[error("jump infeasible: interior slope^p = {slope_pow} does not exceed p/(p-1) = {required}")]
    InfeasibleJump { slope_pow: f64, required: f64 },
    #[error("no sign change of the closure residual in the bracket ({f_lo}, {f_hi})")]
    NoSignChange { f_lo: f64, f_hi: f64 },
    #[error("ODE integration failed: {0}")]
    Integration(String),
    #[error("grid extent {grid} along the comparison axis does not match slab width {slab}")]
    DomainMismatch { grid: f64, slab: f64 },
}

#[derive(Debug, Error)]
pub enum FieldIoError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FreeBoundaryError {
    #[error("probe offset {offset} is below 2*max(hx, hy) = {min}")]
    OffsetTooSmall { offset: f64, min: f64 },
    #[error("margin must be positive, got {0}")]
    Margin(f64),
}
