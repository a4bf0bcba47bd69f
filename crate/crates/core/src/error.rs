use thiserror::Error;

/// Errors raised by the estimation laboratory.
#[derive(Debug, Error)]
pub enum MixError {
    /// An argument violated a documented precondition (wrong atom shape for a
    /// family, sub-distribution passed where a probability is required, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A value lies outside the domain of the function it was passed to.
    #[error("domain error: {0}")]
    Domain(String),

    /// The mixture assigns zero density to an observation.
    #[error("degenerate input: observation {index} (x = {value}) has zero mixture density")]
    DegenerateInput { index: usize, value: f64 },

    #[error("under-determined fit: n = {n} observations cannot support m = {m} components")]
    UnderDetermined { n: usize, m: usize },

    /// A component lost all responsibility mass during EM.
    #[error("component {component} died (responsibility mass {mass:e})")]
    ComponentDeath { component: usize, mass: f64 },

    #[error("fit failed: {0}")]
    FitFailure(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = MixError> = std::result::Result<T, E>;

pub(crate) fn contract(msg: impl Into<String>) -> MixError {
    MixError::Contract(msg.into())
}

pub(crate) fn domain(msg: impl Into<String>) -> MixError {
    MixError::Domain(msg.into())
}
