use thiserror::Error;

use crate::measure::BoundaryClass;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid diffusion spec: {0}")]
    InvalidSpec(String),

    #[error("degenerate scale on edge {edge}: right-derivative at the vertex is {value}")]
    DegenerateScale { edge: usize, value: f64 },

    #[error("boundary classification of edge {edge} is inconclusive: {detail}")]
    Inconclusive { edge: usize, detail: String },

    #[error(
        "the far boundary of edge {edge} is {class}; simulation requires every boundary to be \
         natural (standing assumption of the time-change construction)"
    )]
    NonNaturalBoundary { edge: usize, class: BoundaryClass },

    #[error(
        "bandwidth {bandwidth} cannot separate atoms at {first} and {second} on edge {edge}; \
         use a smaller bandwidth"
    )]
    Refinement {
        edge: usize,
        bandwidth: f64,
        first: f64,
        second: f64,
    },

    #[error("config error at `{field}` (line {line}, column {column}): {message}")]
    Config { field: String, line: usize, column: usize, message: String },

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("malformed path frame: {0}")]
    Frame(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
