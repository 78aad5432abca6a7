use thiserror::Error;

use crate::lp::Basis;

/// Errors raised by the clustering pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("point {index} has non-positive weight {weight}")]
    NonPositiveWeight { index: usize, weight: f64 },

    #[error("point {second} duplicates point {first}; merge them into one point with summed weight")]
    DuplicatePoint { first: usize, second: usize },

    #[error("bounds violate Σκ⁻ ≤ Σω ≤ Σκ⁺: Σκ⁻ = {lower_sum}, Σω = {total_weight}, Σκ⁺ = {upper_sum}")]
    InfeasibleBounds {
        lower_sum: f64,
        total_weight: f64,
        upper_sum: f64,
    },

    #[error("cluster {0} has zero weight; its center of gravity is undefined")]
    EmptyCluster(usize),

    #[error("point {point} is equidistant to sites {first} and {second}")]
    Tie {
        point: usize,
        first: usize,
        second: usize,
    },

    #[error("linear program is infeasible")]
    InfeasibleLp,

    #[error("simplex failed: {reason}")]
    Numerical { reason: String, basis: Box<Basis> },

    #[error("power diagram check failed: point {point} in cluster {cluster} is closer to cell {other} by {excess:e}")]
    Certificate {
        point: usize,
        cluster: usize,
        other: usize,
        excess: f64,
    },

    #[error("descent violated at iteration {iteration} ({stage}): {before} < {after}")]
    Descent {
        iteration: usize,
        stage: &'static str,
        before: f64,
        after: f64,
    },

    #[error("instance too large for exhaustive enumeration: {0}")]
    TooLarge(String),
}

pub type Result<T> = std::result::Result<T, Error>;
