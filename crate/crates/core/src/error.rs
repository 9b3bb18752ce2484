use thiserror::Error;

pub type Result<T> = std::result::Result<T, KglError>;

#[derive(Debug, Error)]
pub enum KglError {
    #[error("metric is not positive definite at node {index} (smallest eigenvalue {min_eig:e})")]
    NonPositiveMetric { index: usize, min_eig: f64 },

    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("Newton iterate left the Kähler cone and damping could not restore positivity (residual {residual:e})")]
    LeftKahlerCone { residual: f64 },

    #[error("family member left the declared class: {0}")]
    ClassViolation(String),

    #[error("level-set recursion has no finite constant: {0}")]
    RecursionViolated(String),

    #[error("adaptive quadrature failed to converge on [{lo:e}, {hi:e}] (error estimate {error:e})")]
    QuadratureFailure { lo: f64, hi: f64, error: f64 },

    #[error("budget drifted by {drift:.3} (allowed {allowed:.3}) across a sweep meant to hold it fixed")]
    BudgetDrift { drift: f64, allowed: f64 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("field cache format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
