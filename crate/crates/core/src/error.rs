use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid exponent {0}: must be >= 1")]
    InvalidExponent(f64),

    #[error("shape mismatch: expected {expected} entries, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("invalid measure space: {0}")]
    InvalidSpace(String),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("prox solver hit the iteration limit ({iterations} iterations, residual {residual:e})")]
    IterationLimit {
        iterations: usize,
        residual: f64,
        last_iterate: Vec<f64>,
    },

    #[error("alpha = 1 is the degenerate case (delta measure); no density exists")]
    DegenerateAlpha,

    #[error("domain error: {0}")]
    Domain(String),

    #[error("truncated mass {missing:e} exceeds tail tolerance {tolerance:e}")]
    TruncatedMass { missing: f64, tolerance: f64 },

    #[error("quadrature tail bound {bound:e} exceeds tolerance {tolerance:e}")]
    QuadratureTail { bound: f64, tolerance: f64 },

    #[error("truncation tolerance not met: head bound {head:e}, tail bound {tail:e}, allowed {allowed:e}")]
    ToleranceNotMet { head: f64, tail: f64, allowed: f64 },

    #[error("functional undefined for the zero function")]
    ZeroFunction,

    #[error("invalid profile: {0}")]
    InvalidProfile(String),

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("rank-deficient design: {0}")]
    RankDeficient(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("unknown suite `{0}`")]
    UnknownSuite(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
