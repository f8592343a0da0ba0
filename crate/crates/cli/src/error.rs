use std::fmt;

use omega_core::OmegaError;

/// Failures of a run, each tied to a process exit code.
#[derive(Debug)]
pub enum CliError {
    /// The config (or a command-line argument) is invalid; `field` names it.
    Validation { field: String, message: String },
    /// A numerical guard tripped; `invariant` names the check.
    Numerical { invariant: String, message: String },
    Io { path: String, message: String },
}

impl CliError {
    pub fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Validation { field: field.into(), message: message.into() }
    }

    pub fn numerical(invariant: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Numerical { invariant: invariant.into(), message: message.into() }
    }

    pub fn io(path: impl fmt::Display, err: impl fmt::Display) -> Self {
        CliError::Io { path: path.to_string(), message: err.to_string() }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation { .. } => 2,
            CliError::Numerical { .. } => 3,
            CliError::Io { .. } => 4,
        }
    }

    /// Classify a library error raised while running the experiment that
    /// reads `field`.
    pub fn from_core(field: &str, e: OmegaError) -> Self {
        let message = e.to_string();
        match e {
            OmegaError::DimensionMismatch { .. }
            | OmegaError::InvalidGrid(_)
            | OmegaError::InvalidArgument(_)
            | OmegaError::Unsupported(_)
            | OmegaError::DegreeExceeded { .. } => CliError::validation(field, message),
            OmegaError::Io(_) | OmegaError::Format(_) => CliError::io(field, message),
            OmegaError::Aliasing { .. } => CliError::numerical("aliasing", message),
            OmegaError::ZeroSetViolation { .. } => CliError::numerical("ordering-zero-set", message),
            OmegaError::Unrepresentable { .. } => CliError::numerical("representability", message),
            OmegaError::TruncationDominance { .. } => CliError::numerical("truncation-dominance", message),
            OmegaError::Singular { .. } => CliError::numerical("resolvent-solve", message),
            OmegaError::AsymptoticRemainder { .. } => CliError::numerical("asymptotic-remainder", message),
            OmegaError::QuadratureNotConverged { .. } => CliError::numerical("quadrature-doubling", message),
            OmegaError::VarianceTooLarge { .. } => CliError::numerical("monte-carlo-variance", message),
            OmegaError::MomentMismatch { .. } => CliError::numerical("gaussian-moments", message),
            OmegaError::NoDecay { .. } => CliError::numerical("density-decay", message),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation { field, message } => write!(f, "invalid config: {field}: {message}"),
            CliError::Numerical { invariant, message } => write!(f, "numerical guard failed ({invariant}): {message}"),
            CliError::Io { path, message } => write!(f, "i/o error on {path}: {message}"),
        }
    }
}

impl std::error::Error for CliError {}

pub type Result<T> = std::result::Result<T, CliError>;
