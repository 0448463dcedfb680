use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("index {index} out of range for length {len}")]
    Index { index: usize, len: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid measure: {0}")]
    Measure(String),

    #[error("observation cell {cell} has zero probability at time {time}")]
    UnreachableObservation { time: usize, cell: usize },

    #[error("filter collapse at time {time}: total mass {mass:e} underflowed, use log-domain mode")]
    FilterCollapse { time: usize, mass: f64 },

    #[error("{what} at time {time} is ill-conditioned (condition number {cond:e})")]
    IllConditioned { what: &'static str, time: usize, cond: f64 },

    #[error("{what}: {count:e} exceeds the budget {budget:e}")]
    Budget {
        what: &'static str,
        count: f64,
        budget: f64,
    },

    #[error("empty codebook")]
    EmptyCodebook,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("toml: {0}")]
    Toml(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
