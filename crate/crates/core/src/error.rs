use thiserror::Error;

/// Errors raised by the simulator.
#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value in field `{field}` at point {index}")]
    NonFiniteField { field: String, index: usize },

    #[error("lapse is non-positive (min 1 + n_hat = {min_lapse:e}) at t = {t}")]
    LapseNonPositive { t: f64, min_lapse: f64 },

    #[error("frame is singular at point {index} (condition number {condition:e})")]
    SingularFrame { index: usize, condition: f64 },

    #[error("metric is not positive definite at point {index}")]
    NotPositiveDefinite { index: usize },

    #[error("Newton solve did not converge: residual {residual:e} after {iterations} iterations")]
    NoConvergence { residual: f64, iterations: usize },

    #[error("conformal factor became non-positive (min {min:e}) at iteration {iteration}")]
    NonPositivePhi { min: f64, iteration: usize },

    #[error("no real root for the anisotropic Hamiltonian constraint: {0}")]
    NoRealRoot(String),

    #[error("stability violation at t = {t}: norm grew by factor {factor:e} in one step")]
    StabilityViolation { t: f64, factor: f64 },

    #[error("insufficient samples for a fit: {got} in window, need {need}")]
    InsufficientSamples { got: usize, need: usize },

    #[error("non-positive value {value:e} at t = {t} in a log fit")]
    NonPositiveValue { t: f64, value: f64 },

    #[error("extraction window starts too early: {0}")]
    WindowTooEarly(String),

    #[error("evolution failed at t = {t}: {source}")]
    EvolutionFailed {
        t: f64,
        #[source]
        source: Box<SimError>,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("snapshot format error: {0}")]
    Snapshot(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SimError>;
