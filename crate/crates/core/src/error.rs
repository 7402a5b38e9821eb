use thiserror::Error;

/// Errors produced by the numerical core.
///
/// Variant names are stable; the CLI prints them as the one-word diagnostic
/// for a numerical failure.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum KbrError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("insufficient data: need at least {needed} points, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("all kernel weights underflowed (theta too small for this center)")]
    NumericalUnderflow,
    #[error("Lagrange multiplier did not converge after {iterations} iterations (best residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("every training point was excluded from the second-order correction")]
    DegenerateCorrection,
    #[error("explicit gradient denominator |x_hat - x| = {0:e} is below tolerance")]
    GradientDegenerate(f64),
    #[error("second-moment error {0:e} is below tolerance")]
    LaplacianDegenerate(f64),
    #[error("implicit system is ill-conditioned (cond = {0:e})")]
    IllConditioned(f64),
    #[error("theta sweep failed at every swept value")]
    FitFailed,
    #[error("finite-difference stencil is singular")]
    SingularStencil,
    #[error("solver failed: {0}")]
    SolverFailed(String),
    #[error("non-physical state: {0}")]
    NonPhysicalState(String),
    #[error("unstable at step {step}: {reason}")]
    Unstable { step: usize, reason: String },
    #[error("metric undefined: {0}")]
    MetricUndefined(String),
}

impl KbrError {
    /// Short variant name, used for CLI diagnostics.
    pub fn name(&self) -> &'static str {
        match self {
            KbrError::InvalidInput(_) => "InvalidInput",
            KbrError::InvalidConfig(_) => "InvalidConfig",
            KbrError::InsufficientData { .. } => "InsufficientData",
            KbrError::NumericalUnderflow => "NumericalUnderflow",
            KbrError::NotConverged { .. } => "NotConverged",
            KbrError::DegenerateCorrection => "DegenerateCorrection",
            KbrError::GradientDegenerate(_) => "GradientDegenerate",
            KbrError::LaplacianDegenerate(_) => "LaplacianDegenerate",
            KbrError::IllConditioned(_) => "IllConditioned",
            KbrError::FitFailed => "FitFailed",
            KbrError::SingularStencil => "SingularStencil",
            KbrError::SolverFailed(_) => "SolverFailed",
            KbrError::NonPhysicalState(_) => "NonPhysicalState",
            KbrError::Unstable { .. } => "Unstable",
            KbrError::MetricUndefined(_) => "MetricUndefined",
        }
    }
}

pub type Result<T> = std::result::Result<T, KbrError>;
