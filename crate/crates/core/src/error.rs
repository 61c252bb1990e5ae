use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter triple outside the existence window; the message names the
    /// violated inequality.
    #[error("inadmissible parameters: {0}")]
    Inadmissible(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("bracket failure: {0}")]
    Bracket(String),

    #[error("no convergence: {0}")]
    NoConvergence(String),

    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),

    #[error("positivity lost: {0}")]
    Positivity(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
