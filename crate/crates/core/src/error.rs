use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A (U, a) statement that no rate can satisfy.
    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    /// Rank deficiency differs from what the structure declares.
    #[error("unexpected rank: expected {expected}, found {found}")]
    Rank { expected: usize, found: usize },

    #[error("adjacency graph is disconnected ({components} components)")]
    Disconnected { components: usize },

    #[error("root finder failed: {0}")]
    Solver(String),

    #[error("grid error: {0}")]
    Grid(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Errors caused by the numbers a caller supplied, as opposed to usage or IO.
    pub fn is_domain(&self) -> bool {
        matches!(
            self,
            Error::Domain(_)
                | Error::Infeasible(_)
                | Error::NotPositiveDefinite(_)
                | Error::Rank { .. }
                | Error::Disconnected { .. }
                | Error::Solver(_)
                | Error::Grid(_)
        )
    }
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
