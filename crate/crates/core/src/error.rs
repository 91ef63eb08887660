use thiserror::Error;

/// Errors raised by generators, densities and numerical routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("tabulated density has (near) zero total mass {mass:e} on [{lo}, {hi}]")]
    TotalMassZero { lo: f64, hi: f64, mass: f64 },

    #[error("no valid search interval [{lo}, {hi}]")]
    NoBracket { lo: f64, hi: f64 },

    #[error("degenerate interval: remaining time {remaining} does not exceed step {dt}")]
    DegenerateInterval { remaining: f64, dt: f64 },

    #[error("extremum {m} is not beyond the endpoint values {x1} and {x2}")]
    InvalidExtremum { m: f64, x1: f64, x2: f64 },

    #[error("unstable step: kappa*dt = {0} must be below 1")]
    UnstableStep(f64),

    #[error("infeasible constraint: {0}")]
    InfeasibleConstraint(String),

    #[error("conditioning density underflowed at t = {t}, x = {x}")]
    ZeroDenominator { t: f64, x: f64 },

    #[error("step {step} failed: {source}")]
    InfeasibleStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("degenerate rectification scale: {0}")]
    DegenerateScale(String),

    #[error("square-root domain violated: {0}")]
    DomainError(String),

    #[error("singular 2x2 block at block {block} (determinant {det:e})")]
    SingularBlock { block: usize, det: f64 },

    #[error("quadrature did not converge on [{lo}, {hi}]: estimate {estimate:e}, error {error:e}")]
    QuadratureFailure {
        lo: f64,
        hi: f64,
        estimate: f64,
        error: f64,
    },

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },
}

impl Error {
    pub(crate) fn param(field: &str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.to_string(),
            reason: reason.into(),
        }
    }

    pub(crate) fn at_step(self, step: usize) -> Self {
        Error::InfeasibleStep {
            step,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
