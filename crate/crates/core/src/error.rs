use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: expected {expected} fields, found {found}")]
    DimensionMismatch { line: usize, expected: usize, found: usize },

    #[error("supplies sum to {sum}, expected 0")]
    SupplyImbalance { sum: i128 },

    #[error("invalid instance: {0}")]
    Invalid(String),

    #[error("{what} index {index} out of range (len {len})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("quadtree did not separate all points after {levels} levels (coincident points?)")]
    CoincidentPoints { levels: usize },

    #[error("point lies outside the shifted root cell")]
    OutsideGrid,

    #[error("total supply {total:e} is not zero")]
    NonzeroTotal { total: f64 },

    #[error("{what} too large for the exact oracle: {actual} > {limit}")]
    OracleLimit {
        what: &'static str,
        actual: usize,
        limit: usize,
    },

    #[error("value search exhausted without a feasible flow at stage {stage}")]
    SolverExhausted { stage: usize },

    #[error("residual surplus {amount:e} at point {point} after rounding")]
    RoundingResidual { point: usize, amount: f64 },

    #[error("invalid parameter: {0}")]
    Parameter(String),
}
