use thiserror::Error;

/// Everything that can go wrong inside the library.
#[derive(Debug, Error)]
pub enum GdaError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("no sign change on [{lo}, {hi}] (f(lo) = {f_lo}, f(hi) = {f_hi})")]
    Bracket { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },

    #[error("{what} did not converge within {iterations} iterations")]
    Convergence { what: String, iterations: usize },

    #[error("non-finite value {value} at abscissa {node}")]
    Evaluation { node: f64, value: f64 },

    #[error("inverse is unbounded: F({hi}) = {value} has not reached target {target}")]
    UnboundedInverse { hi: f64, value: f64, target: f64 },

    #[error("not differentiable on the boundary: {0}")]
    BoundaryNotDifferentiable(String),

    #[error("invalid market model: {0}")]
    Model(String),

    #[error("step size too small: {0}")]
    StepSize(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Coarse grouping used to pick process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    /// Bad input: parameters, models, config files.
    Validation,
    /// A numerical procedure failed to produce an answer.
    Solver,
    /// Filesystem or data format trouble.
    Io,
}

impl GdaError {
    pub fn category(&self) -> ErrorCategory {
        use GdaError::*;
        match self {
            Domain(_) | Parameter(_) | Model(_) | Config(_) | BoundaryNotDifferentiable(_) => {
                ErrorCategory::Validation
            }
            Bracket { .. }
            | Convergence { .. }
            | Evaluation { .. }
            | UnboundedInverse { .. }
            | StepSize(_) => ErrorCategory::Solver,
            Io(_) | Parse(_) => ErrorCategory::Io,
        }
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        GdaError::Parameter(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        GdaError::Domain(msg.into())
    }

    pub(crate) fn no_convergence(what: impl Into<String>, iterations: usize) -> Self {
        GdaError::Convergence { what: what.into(), iterations }
    }
}

pub type Result<T> = std::result::Result<T, GdaError>;
