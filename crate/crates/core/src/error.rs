use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("matrix is singular ({zero_pivots} zero pivots)")]
    Singular { zero_pivots: usize },

    #[error("barrier term undefined: masked control {index} at stage {stage} is {value}")]
    Domain { stage: usize, index: usize, value: f64 },

    #[error("inertia correction exceeded the regularization cap at stage {stage}")]
    RegularizationOverflow { stage: usize },

    #[error("stage KKT matrix too ill conditioned at stage {stage} (estimate {estimate:e})")]
    IllConditioned { stage: usize, estimate: f64 },

    #[error("stacked KKT system of the oracle is singular")]
    OracleDegenerate,

    #[error("invalid configuration: {0}")]
    Config(String),
}
