use thiserror::Error;

/// Errors reported by the market model and its solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A regularity requirement on the model primitives failed a validation
    /// check. `assumption` names the requirement that failed.
    #[error("assumption violated ({assumption}): {detail}")]
    AssumptionViolation {
        assumption: &'static str,
        detail: String,
    },

    /// An evaluation ran into a numerically degenerate point (for example a
    /// vanishing density) and refused to produce an infinite or NaN value.
    #[error("ill-conditioned evaluation: {0}")]
    IllConditioned(String),

    #[error("no solution: {0}")]
    NoSolution(String),

    /// Two redundant computations of the same quantity disagreed beyond
    /// their cross-check tolerance.
    #[error("internal inconsistency: {0}")]
    Inconsistency(String),

    /// A menu whose threshold ordering implies a class that captures no users.
    #[error("service class {index} captures no users: {detail}")]
    EmptyClass { index: usize, detail: String },

    #[error("out of domain: {0}")]
    Domain(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub fn assumption(assumption: &'static str, detail: impl Into<String>) -> Self {
        Error::AssumptionViolation {
            assumption,
            detail: detail.into(),
        }
    }
}
