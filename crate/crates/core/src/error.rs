use thiserror::Error;

use crate::ode::IntegrateError;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter `{name}` = {value} is out of range: {reason}")]
    InvalidParam {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("cannot place {m} edges on {n} nodes (at most {max} distinct pairs)")]
    TooManyEdges { n: usize, m: usize, max: usize },

    #[error("node {node} is out of range for a graph with {n} nodes")]
    NodeOutOfRange { node: usize, n: usize },

    #[error("edge ({0}, {1}) is not eligible for this event")]
    IneligibleEdge(usize, usize),

    #[error(transparent)]
    Integrate(#[from] IntegrateError),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed record: {0}")]
    Parse(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
