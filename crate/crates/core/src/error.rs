use thiserror::Error;

/// Errors produced by construction, validation, and the numerical routines.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid input data: bad probabilities, dimension mismatches, malformed
    /// instance files. The message names the offending field or row.
    #[error("validation: {0}")]
    Validation(String),

    /// A request that is provably unsatisfiable, e.g. an error budget below
    /// the Bayes floor.
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// A guard refused the computation because the search space is too large.
    #[error("too large: {0}")]
    TooLarge(String),

    /// An iterative routine hit its iteration cap before reaching tolerance.
    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
