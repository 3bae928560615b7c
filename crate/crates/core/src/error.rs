use thiserror::Error;

/// Errors raised across the toolkit.
///
/// The variants are grouped by how the command-line front end reports them:
/// validation failures, resource-budget violations and numeric route errors.
#[derive(Debug, Error)]
pub enum Error {
    #[error("map is not hyperbolic: |trace| = {trace} <= 2")]
    NotHyperbolic { trace: f64 },

    #[error("invalid map: {0}")]
    InvalidMap(String),

    #[error("surface validation failed: {0}")]
    Validation(String),

    #[error("surface definition error: {0}")]
    Definition(String),

    #[error("resource budget exceeded: {0}")]
    Resource(String),

    #[error("estimation error: {0}")]
    Estimation(String),

    #[error("Re(s) = {re_s} is not inside the product region Re(s) > {delta}")]
    DivergenceRegion { re_s: f64, delta: f64 },

    #[error("tail bound {tail:.3e} exceeds tolerance {tolerance:.3e}; cutoff {cutoff} too small, need L >= {needed}")]
    TailTooLarge {
        tail: f64,
        tolerance: f64,
        cutoff: f64,
        needed: f64,
    },

    #[error("route error: {0}")]
    Route(String),

    #[error("bracketing error: {0}")]
    Bracketing(String),

    #[error("method not applicable: {0}")]
    MethodNotApplicable(String),

    #[error("resolution error: {0}")]
    Resolution(String),

    #[error("localization error: {0}")]
    Localization(String),

    #[error("coverage error: {0}")]
    Coverage(String),

    #[error("out of scope: {0}")]
    OutOfScope(String),

    #[error("conditioning error: {0}")]
    Conditioning(String),

    #[error("precision error: {0}")]
    Precision(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("insufficient trapping: {0}")]
    InsufficientTrapping(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit status used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_) | Error::Definition(_) => 2,
            Error::Resource(_) => 3,
            _ => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
