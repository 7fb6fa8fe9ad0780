use thiserror::Error;

use crate::demand::Violation;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A reachable load fell outside the cost function's domain.
    #[error("load {load} is outside the cost domain [0, {limit})")]
    Domain { load: f64, limit: f64 },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("engine `{engine}` cannot be used here: {reason}")]
    UnsupportedEngine { engine: &'static str, reason: String },

    #[error("demand profile rejected ({} violation(s), first: {})", .0.len(), .0.first().map(|v| v.to_string()).unwrap_or_default())]
    Profile(Vec<Violation>),

    #[error("cost model rejected: {0}")]
    CostModel(String),

    #[error(
        "projected gradient stopped after {iterations} iterations with projected-gradient norm {pg_norm:e} (cost {cost})"
    )]
    NotConverged {
        iterations: usize,
        pg_norm: f64,
        cost: f64,
        iterate: Vec<f64>,
    },

    #[error("shaping objective increased at iteration {iteration}: {previous} -> {current}")]
    Ascent {
        iteration: usize,
        previous: f64,
        current: f64,
    },

    #[error("scenario: {0}")]
    Scenario(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag, used in CLI error documents.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain { .. } => "domain",
            Error::Invalid(_) => "invalid_input",
            Error::UnsupportedEngine { .. } => "unsupported_engine",
            Error::Profile(_) => "profile",
            Error::CostModel(_) => "cost_model",
            Error::NotConverged { .. } => "not_converged",
            Error::Ascent { .. } => "ascent",
            Error::Scenario(_) => "scenario",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
