use thiserror::Error;

/// Error type shared by every module of the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid map spec: {0}")]
    InvalidSpec(String),
    #[error("point type does not match the map's space")]
    TypeMismatch,
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("trivial continuum (diameter below resolution)")]
    TrivialContinuum,
    #[error("vertex budget exceeded ({0} vertices)")]
    VertexBudget(usize),
    #[error("parts are not chained: {0}")]
    NotChained(String),
    #[error("mark point not found on polyline: {0}")]
    MarkNotFound(String),
    #[error("expansion time saturated on a sample of diameter {diam:.6}; eps={eps} looks too large")]
    EpsTooLarge { diam: f64, eps: f64 },
    #[error("derived constant {name}={value:e} underflows 1e-10; empirical moduli too weak")]
    ModuliTooWeak { name: &'static str, value: f64 },
    #[error("bracket failed at block {block}: {reason}")]
    BracketFailed { block: usize, reason: String },
    #[error("empty intersection: {0}")]
    EmptyIntersection(String),
    #[error("iteration did not converge within {0} steps")]
    NonConvergence(usize),
    #[error("pseudo-orbit noise {delta:e} too large for shadowing radius beta={beta}")]
    NoiseTooLarge { delta: f64, beta: f64 },
    #[error("conjugacy transport required for t>0 but none was supplied")]
    ConjugacyMissing,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
