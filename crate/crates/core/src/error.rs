use thiserror::Error;

/// Failure modes of the calculus. Numerical guards carry the measured
/// quantity so callers can report how far off a run was.
#[derive(Debug, Error)]
pub enum OmegaError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("aliasing: {fraction:.3e} of the energy sits in the {region} (limit {limit:.1e})")]
    Aliasing {
        region: &'static str,
        fraction: f64,
        limit: f64,
    },

    #[error("ordering factor vanishes or explodes on {fraction:.3e} of the frequency mass (limit {limit:.1e})")]
    ZeroSetViolation { fraction: f64, limit: f64 },

    #[error("symbol not representable on this grid: relative round-trip error {error:.3e} exceeds {limit:.1e}")]
    Unrepresentable { error: f64, limit: f64 },

    #[error("truncation dominates: boundary rows carry {fraction:.3e} of the Frobenius norm")]
    TruncationDominance { fraction: f64 },

    #[error("monomial degree {degree} exceeds cap {cap}")]
    DegreeExceeded { degree: usize, cap: usize },

    #[error("singular linear system at step {step}")]
    Singular { step: usize },

    #[error("asymptotic remainder estimate {estimate:.3e} exceeds tolerance {tolerance:.1e}")]
    AsymptoticRemainder { estimate: f64, tolerance: f64 },

    #[error("quadrature not converged: point doubling changed the result by {change:.3e} (tolerance {tolerance:.1e})")]
    QuadratureNotConverged { change: f64, tolerance: f64 },

    #[error("Monte Carlo standard error {stderr:.3e} above requested bound {bound:.1e}")]
    VarianceTooLarge { stderr: f64, bound: f64 },

    #[error("moment check failed: closed form and quadrature differ by {difference:.3e}")]
    MomentMismatch { difference: f64 },

    #[error("density symbol does not decay: boundary magnitude ratio {ratio:.3e}")]
    NoDecay { ratio: f64 },

    #[error("malformed container: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, OmegaError>;
