use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("invalid {element}: {message}")]
    Invariant { element: String, message: String },

    #[error("duplicate {kind} id `{id}`")]
    DuplicateId { kind: &'static str, id: String },

    #[error("unknown {kind} `{id}`")]
    UnknownId { kind: &'static str, id: String },

    #[error("radial check failed: {0}")]
    NotRadial(String),

    #[error("fault: {0}")]
    Fault(String),

    #[error("program: {0}")]
    Build(String),

    #[error("solver precondition: {0}")]
    Precondition(String),

    #[error("solver: {0}")]
    Solver(String),

    #[error("combination cap exceeded: {combos} > {cap}")]
    CapExceeded { combos: u128, cap: u128 },

    #[error("verification: {0}")]
    Verification(String),

    #[error("sweep diverged after {iterations} iterations (last change {last_change:.3e})")]
    SweepDiverged { iterations: usize, last_change: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invariant(element: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Invariant {
            element: element.into(),
            message: message.into(),
        }
    }
}
